#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "aaunet/data_io.hpp"
#include "aaunet/metrics.hpp"
#include "aaunet/model.hpp"

namespace aaunet {

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LossReduction { sum, mean };

std::string_view reduction_name(LossReduction r);
LossReduction parse_reduction(std::string_view name);

/// Optimisation settings. Defaults: Adam, lr 1e-3, 50 epochs, batch 12, 4 folds.
struct TrainConfig {
  double learning_rate = 0.001;
  std::int64_t epochs = 50;
  std::int64_t batch_size = 12;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::int64_t folds = 4;
  std::uint64_t seed = 0;
  LossReduction loss_reduction = LossReduction::mean;
  double clamp_eps = 1e-7;
  /// Split folds within each label class.
  bool stratified = false;

  void validate() const;
};

/// Binary cross-entropy between predicted probabilities and a [0,1] target.
/// Predictions are clamped to [eps, 1 - eps] before the logs; the gradient
/// is zero where the clamp is active.
template <typename T>
Var<T> bce_loss(const Var<T>& pred, const Tensor<T>& target,
                LossReduction reduction = LossReduction::mean, double clamp_eps = 1e-7);

/// One bias-corrected Adam update of `param` at step `t` (1-based). A
/// parameter without a gradient is treated as having a zero gradient.
/// Throws TrainError naming the parameter when its gradient is not finite.
template <typename T>
void adam_step(Parameter<T>& param, std::int64_t t, const TrainConfig& cfg);

template <typename T>
class Adam {
 public:
  explicit Adam(TrainConfig cfg, std::int64_t step = 0) : cfg_(std::move(cfg)), step_(step) {}
  void step(ParameterStore<T>& params);
  std::int64_t step_count() const { return step_; }

 private:
  TrainConfig cfg_;
  std::int64_t step_;
};

struct EpochRecord {
  std::int64_t epoch = 0;  // 1-based
  double train_loss = 0;
  double val_dice = 0;     // fraction in [0,1]
  double wall_time = 0;    // seconds since training start; 0 in deterministic mode
};

struct TrainHooks {
  /// When set: epochs.csv, final.ckpt and best.ckpt are written here.
  std::optional<std::filesystem::path> out_dir;
  /// Suppresses wall-clock values so artifacts are byte-reproducible.
  bool deterministic = false;
  /// Return false to stop after this epoch.
  std::function<bool(const EpochRecord&)> on_epoch;
  std::function<void(std::int64_t epoch, std::int64_t step, double loss)> on_step;
};

struct TrainResult {
  std::vector<EpochRecord> log;
  std::int64_t steps = 0;
  double best_val_dice = -1;
  std::int64_t best_epoch = 0;
};

/// Mean per-image Dice (fraction) of `model` on `samples` at threshold 0.5.
template <typename T>
double evaluate_dice(const AauNet<T>& model, std::span<const Sample> samples,
                     std::int64_t batch_size = 8);

/// Runs `epochs` passes of shuffled mini-batches. Validation Dice is
/// measured on `val`, or on `train` when `val` is empty.
template <typename T>
TrainResult train(AauNet<T>& model, std::span<const Sample> train, std::span<const Sample> val,
                  const TrainConfig& cfg, const TrainHooks& hooks = {});

struct FoldSplit {
  std::int64_t fold_id = 0;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> val_indices;
};

/// Seeded random partition into `folds` validation sets of near-equal size.
/// With `labels`, each class is permuted and dealt round-robin separately.
std::vector<FoldSplit> make_folds(std::size_t n, std::int64_t folds, std::uint64_t seed,
                                  std::span<const Label> labels = {});
std::uint64_t split_checksum(std::span<const FoldSplit> splits);

struct FoldOutcome {
  FoldSplit split;
  MetricsReport report;
  TrainResult training;
};

struct CrossValResult {
  std::vector<FoldOutcome> folds;
  /// Per-metric mean and sample std of the fold means (percent).
  std::array<MeanStd, 5> aggregate{};
  /// fold_means[metric][fold]
  std::array<std::vector<double>, 5> fold_means;
  MeanStd auc;
  std::uint64_t split_checksum = 0;
};

struct CrossValOptions {
  /// When set: fold_<k>/ training directories, fold_<k>_report.csv,
  /// fold_<k>_curves.csv and aggregate.csv.
  std::optional<std::filesystem::path> out_dir;
  /// Forces a single worker.
  bool deterministic = false;
  /// Folds trained concurrently. Results do not depend on this value.
  std::size_t workers = 1;
  /// Called from the worker that trains `fold`; may run concurrently when workers > 1.
  std::function<bool(std::int64_t fold, const EpochRecord&)> on_epoch;
};

CrossValResult cross_validate(std::span<const Sample> dataset, const ModelConfig& model_cfg,
                              const TrainConfig& train_cfg, const CrossValOptions& opt = {});

/// Writes "metric,mean,std,formatted" rows.
void write_aggregate_csv(const CrossValResult& result, const std::filesystem::path& path);

// ---- synthetic data ----

struct SynthOptions {
  std::int64_t count = 8;
  std::int64_t height = 64;
  std::int64_t width = 64;
  std::uint64_t seed = 0;
  /// 0 = crisp borders and light speckle; 1 = blurred borders and heavy speckle.
  double difficulty = 0.0;
  std::int64_t min_lesions = 0;
  std::int64_t max_lesions = 2;
};

struct SynthItem {
  std::string id;
  GrayImage image;
  GrayImage mask;  // {0, 255}
  Label label = Label::unknown;
  std::int64_t lesions = 0;
};

/// Ultrasound-like images: textured background, darker elliptical (benign)
/// or lobulated (malignant) lesions, multiplicative speckle. Deterministic in
/// the options.
std::vector<SynthItem> synth_images(const SynthOptions& opt);
std::vector<Sample> to_samples(std::span<const SynthItem> items);
/// Writes images/<id>.png, masks/<id>.png and manifest.jsonl under `dir`.
Manifest synth_dataset(const SynthOptions& opt, const std::filesystem::path& dir);

}  // namespace aaunet
