#include "aaunet/training.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <numbers>
#include <thread>

namespace aaunet {

namespace fs = std::filesystem;

std::string_view reduction_name(LossReduction r) {
  return r == LossReduction::sum ? "sum" : "mean";
}

LossReduction parse_reduction(std::string_view name) {
  if (name == "sum") return LossReduction::sum;
  if (name == "mean") return LossReduction::mean;
  throw std::invalid_argument("unknown loss reduction '" + std::string(name) +
                              "' (expected sum or mean)");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (folds < 2) throw std::invalid_argument("TrainConfig: folds must be >= 2");
  if (!(clamp_eps > 0 && clamp_eps < 0.5)) {
    throw std::invalid_argument("TrainConfig: clamp_eps must lie in (0, 0.5)");
  }
  if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1)) {
    throw std::invalid_argument("TrainConfig: Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0)) throw std::invalid_argument("TrainConfig: adam_eps must be > 0");
}

template <typename T>
Var<T> bce_loss(const Var<T>& pred, const Tensor<T>& target, LossReduction reduction,
                double clamp_eps) {
  if (pred->value.shape() != target.shape()) {
    throw ShapeError("bce_loss: prediction " + to_string(pred->value.shape()) + " vs target " +
                     to_string(target.shape()));
  }
  for (std::int64_t i = 0; i < target.numel(); ++i) {
    if (!(target[i] >= T(0) && target[i] <= T(1))) {
      throw std::invalid_argument("bce_loss: target value outside [0,1] at " + std::to_string(i));
    }
  }
  const double lo = clamp_eps;
  const double hi = 1.0 - clamp_eps;
  const double norm =
      reduction == LossReduction::mean ? 1.0 / static_cast<double>(target.numel()) : 1.0;
  double total = 0.0;
  for (std::int64_t i = 0; i < target.numel(); ++i) {
    const double p = std::clamp(static_cast<double>(pred->value[i]), lo, hi);
    const double y = static_cast<double>(target[i]);
    total -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return make_node<T>(Tensor<T>::scalar(static_cast<T>(total * norm)), {pred}, "bce_loss",
                      [target, lo, hi, norm](Node<T>& self) {
                        const Var<T>& p = self.parents[0];
                        Tensor<T>& gp = p->grad_buffer();
                        const double g = static_cast<double>(self.grad->item()) * norm;
                        for (std::int64_t i = 0; i < gp.numel(); ++i) {
                          const double v = static_cast<double>(p->value[i]);
                          if (!(v > lo && v < hi)) continue;
                          const double y = static_cast<double>(target[i]);
                          gp[i] += static_cast<T>(g * (-y / v + (1.0 - y) / (1.0 - v)));
                        }
                      });
}

template <typename T>
void adam_step(Parameter<T>& param, std::int64_t t, const TrainConfig& cfg) {
  if (t < 1) throw std::invalid_argument("adam_step: step index must be >= 1");
  const Tensor<T>* grad = param.node->grad ? &*param.node->grad : nullptr;
  if (grad) {
    for (std::int64_t i = 0; i < grad->numel(); ++i) {
      if (!std::isfinite(static_cast<double>((*grad)[i]))) {
        throw TrainError("non-finite gradient in parameter '" + param.name + "' at element " +
                         std::to_string(i));
      }
    }
  }
  const T b1 = static_cast<T>(cfg.adam_beta1);
  const T b2 = static_cast<T>(cfg.adam_beta2);
  const T lr = static_cast<T>(cfg.learning_rate);
  const T eps = static_cast<T>(cfg.adam_eps);
  const T c1 = static_cast<T>(1.0 - std::pow(cfg.adam_beta1, static_cast<double>(t)));
  const T c2 = static_cast<T>(1.0 - std::pow(cfg.adam_beta2, static_cast<double>(t)));
  Tensor<T>& w = param.mutable_value();
  for (std::int64_t i = 0; i < w.numel(); ++i) {
    const T g = grad ? (*grad)[i] : T(0);
    T& m = param.adam_m[i];
    T& v = param.adam_v[i];
    m = b1 * m + (T(1) - b1) * g;
    v = b2 * v + (T(1) - b2) * g * g;
    const T mhat = m / c1;
    const T vhat = v / c2;
    w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

template <typename T>
void Adam<T>::step(ParameterStore<T>& params) {
  ++step_;
  for (auto& p : params.all()) adam_step(p, step_, cfg_);
}

namespace {

template <typename T>
Tensor<T> gather(std::span<const Sample> samples, std::span<const std::size_t> idx, bool masks) {
  std::vector<Tensor<T>> parts;
  parts.reserve(idx.size());
  for (std::size_t i : idx) {
    const Tensor<float>& src = masks ? samples[i].mask : samples[i].image;
    parts.push_back(src.cast<T>());
  }
  return stack_batch<T>(parts);
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

void check_sizes(std::span<const Sample> samples, const ModelConfig& cfg) {
  for (const auto& s : samples) {
    const Shape is = s.image.shape();
    if (is.h != cfg.height || is.w != cfg.width || is.c != cfg.in_channels) {
      throw TrainError("sample '" + s.id + "' image " + to_string(is) +
                       " does not match the model input size");
    }
    if (s.mask.shape() != Shape{1, 1, is.h, is.w}) {
      throw TrainError("sample '" + s.id + "' mask " + to_string(s.mask.shape()) +
                       " does not match image " + to_string(is));
    }
  }
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

template <typename T>
double evaluate_dice(const AauNet<T>& model, std::span<const Sample> samples,
                     std::int64_t batch_size) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  const auto all = iota(samples.size());
  for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(samples.size(), start + static_cast<std::size_t>(batch_size));
    const std::span<const std::size_t> idx(all.data() + start, end - start);
    const Tensor<T> pred = model.predict(gather<T>(samples, idx, false));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const ConfusionCounts c =
          confusion_at(batch_row(pred, static_cast<std::int64_t>(k)),
                       samples[idx[k]].mask.cast<T>(), 0.5);
      total += segmentation_metrics(c).dice / 100.0;
    }
  }
  return total / static_cast<double>(samples.size());
}

template <typename T>
TrainResult train(AauNet<T>& model, std::span<const Sample> train_set,
                  std::span<const Sample> val_set, const TrainConfig& cfg,
                  const TrainHooks& hooks) {
  cfg.validate();
  if (train_set.empty()) throw TrainError("train: empty training set");
  check_sizes(train_set, model.config());
  check_sizes(val_set, model.config());
  const std::span<const Sample> eval_set = val_set.empty() ? train_set : val_set;

  std::ofstream log_csv;
  if (hooks.out_dir) {
    fs::create_directories(*hooks.out_dir);
    log_csv.open(*hooks.out_dir / "epochs.csv", std::ios::trunc);
    if (!log_csv) throw TrainError("cannot write " + (*hooks.out_dir / "epochs.csv").string());
    log_csv << "epoch,train_loss,val_dice,wall_time\n";
  }

  Rng shuffle_rng(cfg.seed ^ 0x5851F42D4C957F2DULL);
  Adam<T> opt(cfg);
  TrainResult result;
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t n = train_set.size();
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);

  for (std::int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = shuffle_rng.permutation(n);
    double loss_sum = 0.0;
    std::int64_t batches = 0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t end = std::min(n, start + bs);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const Tensor<T> x = gather<T>(train_set, idx, false);
      const Tensor<T> y = gather<T>(train_set, idx, true);
      model.params().zero_grad();
      const Var<T> loss = bce_loss(model.forward(constant(x)), y, cfg.loss_reduction, cfg.clamp_eps);
      const double lv = static_cast<double>(loss->value.item());
      if (!std::isfinite(lv)) {
        throw TrainError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                         std::to_string(opt.step_count() + 1));
      }
      backward(loss);
      try {
        opt.step(model.params());
      } catch (const TrainError& e) {
        throw TrainError(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", step " +
                         std::to_string(opt.step_count()) + ")");
      }
      loss_sum += lv;
      ++batches;
      if (hooks.on_step) hooks.on_step(epoch, opt.step_count(), lv);
    }
    model.params().zero_grad();

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    rec.val_dice = evaluate_dice(model, eval_set);
    rec.wall_time = hooks.deterministic
                        ? 0.0
                        : std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(rec);
    result.steps = opt.step_count();

    const TrainerState state{static_cast<std::uint64_t>(epoch),
                             static_cast<std::uint64_t>(opt.step_count()), cfg.seed};
    if (rec.val_dice > result.best_val_dice) {
      result.best_val_dice = rec.val_dice;
      result.best_epoch = epoch;
      if (hooks.out_dir) save_checkpoint(model, *hooks.out_dir / "best.ckpt", state);
    }
    if (log_csv.is_open()) {
      log_csv << epoch << "," << fmt_double(rec.train_loss) << "," << fmt_double(rec.val_dice)
              << "," << fmt_double(rec.wall_time) << "\n";
      log_csv.flush();
    }
    const bool keep_going = !hooks.on_epoch || hooks.on_epoch(rec);
    if (!keep_going || epoch == cfg.epochs) {
      if (hooks.out_dir) save_checkpoint(model, *hooks.out_dir / "final.ckpt", state);
      break;
    }
  }
  return result;
}

std::vector<FoldSplit> make_folds(std::size_t n, std::int64_t folds, std::uint64_t seed,
                                  std::span<const Label> labels) {
  if (folds < 2) throw std::invalid_argument("make_folds: folds must be >= 2");
  if (n < static_cast<std::size_t>(folds)) {
    throw std::invalid_argument("make_folds: " + std::to_string(n) + " samples but " +
                                std::to_string(folds) + " folds");
  }
  if (!labels.empty() && labels.size() != n) {
    throw std::invalid_argument("make_folds: label count does not match sample count");
  }
  Rng rng(seed);
  const std::size_t k = static_cast<std::size_t>(folds);
  std::vector<std::int64_t> assignment(n);
  if (labels.empty()) {
    const auto perm = rng.permutation(n);
    // Contiguous blocks of the permutation; the first n % k folds get one extra.
    std::size_t pos = 0;
    for (std::size_t f = 0; f < k; ++f) {
      const std::size_t size = n / k + (f < n % k ? 1 : 0);
      for (std::size_t j = 0; j < size; ++j) assignment[perm[pos++]] = static_cast<std::int64_t>(f);
    }
  } else {
    std::map<Label, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < n; ++i) groups[labels[i]].push_back(i);
    std::size_t dealt = 0;
    for (auto& [label, members] : groups) {
      const auto perm = rng.permutation(members.size());
      for (std::size_t j = 0; j < members.size(); ++j) {
        assignment[members[perm[j]]] = static_cast<std::int64_t>(dealt++ % k);
      }
    }
  }
  std::vector<FoldSplit> out(k);
  for (std::size_t f = 0; f < k; ++f) out[f].fold_id = static_cast<std::int64_t>(f);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t f = 0; f < k; ++f) {
      (assignment[i] == static_cast<std::int64_t>(f) ? out[f].val_indices : out[f].train_indices)
          .push_back(i);
    }
  }
  return out;
}

std::uint64_t split_checksum(std::span<const FoldSplit> splits) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xFF;
      h *= 1099511628211ULL;
    }
  };
  for (const auto& s : splits) {
    mix(static_cast<std::uint64_t>(s.fold_id));
    for (auto i : s.val_indices) mix(i);
    mix(~0ULL);
  }
  return h;
}

CrossValResult cross_validate(std::span<const Sample> dataset, const ModelConfig& model_cfg,
                              const TrainConfig& train_cfg, const CrossValOptions& opt) {
  train_cfg.validate();
  model_cfg.validate();
  if (dataset.size() < static_cast<std::size_t>(train_cfg.folds)) {
    throw TrainError("cross_validate: " + std::to_string(dataset.size()) +
                     " samples is fewer than " + std::to_string(train_cfg.folds) + " folds");
  }
  std::vector<Label> labels;
  if (train_cfg.stratified) {
    for (const auto& s : dataset) labels.push_back(s.label);
  }
  const auto splits = make_folds(dataset.size(), train_cfg.folds, train_cfg.seed, labels);
  CrossValResult result;
  result.split_checksum = split_checksum(splits);
  if (opt.out_dir) fs::create_directories(*opt.out_dir);

  const auto run_fold = [&](const FoldSplit& split) {
    std::vector<Sample> tr;
    std::vector<Sample> va;
    for (auto i : split.train_indices) tr.push_back(dataset[i]);
    for (auto i : split.val_indices) va.push_back(dataset[i]);

    const std::string tag = "fold_" + std::to_string(split.fold_id + 1);
    TrainHooks hooks;
    hooks.deterministic = opt.deterministic;
    if (opt.out_dir) hooks.out_dir = *opt.out_dir / tag;
    if (opt.on_epoch) {
      hooks.on_epoch = [&](const EpochRecord& r) { return opt.on_epoch(split.fold_id, r); };
    }
    AauNet<float> model(model_cfg, train_cfg.seed);
    FoldOutcome outcome;
    outcome.split = split;
    outcome.training = train(model, std::span<const Sample>(tr), std::span<const Sample>(va),
                             train_cfg, hooks);

    std::vector<std::string> ids;
    std::vector<Tensor<float>> probs;
    std::vector<Tensor<float>> gts;
    for (const auto& s : va) {
      ids.push_back(s.id);
      probs.push_back(model.predict(s.image));
      gts.push_back(s.mask);
    }
    outcome.report = build_report<float>(ids, probs, gts);
    if (opt.out_dir) {
      write_metrics_csv(outcome.report, *opt.out_dir / (tag + "_report.csv"));
      write_curves_csv(outcome.report.curves, *opt.out_dir / (tag + "_curves.csv"));
    }
    return outcome;
  };

  std::vector<FoldOutcome> outcomes(splits.size());
  const std::size_t workers =
      opt.deterministic ? 1 : std::clamp<std::size_t>(opt.workers, 1, splits.size());
  if (workers == 1) {
    for (std::size_t f = 0; f < splits.size(); ++f) outcomes[f] = run_fold(splits[f]);
  } else {
    // Each fold owns its model and output files; results land in fold order.
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(splits.size());
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t f = next++; f < splits.size(); f = next++) {
          try {
            outcomes[f] = run_fold(splits[f]);
          } catch (...) {
            errors[f] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  std::vector<double> aucs;
  for (auto& outcome : outcomes) {
    for (std::size_t k = 0; k < 5; ++k) {
      result.fold_means[k].push_back(outcome.report.aggregate[k].mean);
    }
    if (std::isfinite(outcome.report.auc)) aucs.push_back(outcome.report.auc);
    result.folds.push_back(std::move(outcome));
  }
  for (std::size_t k = 0; k < 5; ++k) result.aggregate[k] = mean_std(result.fold_means[k]);
  result.auc = mean_std(aucs);
  if (opt.out_dir) write_aggregate_csv(result, *opt.out_dir / "aggregate.csv");
  return result;
}

void write_aggregate_csv(const CrossValResult& result, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "metric,mean,std,mean_pm_std\n";
  char buf[128];
  for (std::size_t k = 0; k < 5; ++k) {
    const auto& a = result.aggregate[k];
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f", a.mean, a.std);
    out << SegmentationScores::kNames[k] << "," << buf << "," << format_mean_std(a) << "\n";
  }
  std::snprintf(buf, sizeof(buf), "%.6f,%.6f", result.auc.mean, result.auc.std);
  out << "AUC," << buf << "," << format_mean_std(result.auc, 4) << "\n";
}

// ---- synthetic data ----

namespace {

struct Lesion {
  double cy, cx, ry, rx, theta;
  bool lobulated;
  double lobe_amp, lobe_freq, lobe_phase;
  double intensity;

  bool contains(double y, double x) const {
    const double dy = y - cy;
    const double dx = x - cx;
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    const double u = (dx * c + dy * s) / rx;
    const double v = (-dx * s + dy * c) / ry;
    double r = std::sqrt(u * u + v * v);
    if (lobulated) {
      const double phi = std::atan2(v, u);
      r /= 1.0 + lobe_amp * std::sin(lobe_freq * phi + lobe_phase);
    }
    return r <= 1.0;
  }
};

void box_blur(std::vector<double>& img, std::int64_t h, std::int64_t w, std::int64_t radius) {
  if (radius <= 0) return;
  std::vector<double> tmp(img.size());
  for (int pass = 0; pass < 2; ++pass) {
    const bool horizontal = pass == 0;
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x) {
        double acc = 0;
        int cnt = 0;
        for (std::int64_t k = -radius; k <= radius; ++k) {
          const std::int64_t yy = horizontal ? y : y + k;
          const std::int64_t xx = horizontal ? x + k : x;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          acc += img[static_cast<std::size_t>(yy * w + xx)];
          ++cnt;
        }
        tmp[static_cast<std::size_t>(y * w + x)] = acc / cnt;
      }
    }
    img.swap(tmp);
  }
}

}  // namespace

std::vector<SynthItem> synth_images(const SynthOptions& opt) {
  if (opt.count < 1) throw std::invalid_argument("synth: count must be >= 1");
  if (opt.height < 8 || opt.width < 8) throw std::invalid_argument("synth: size must be >= 8");
  if (opt.min_lesions < 0 || opt.max_lesions < opt.min_lesions) {
    throw std::invalid_argument("synth: invalid lesion count range");
  }
  const double d = std::clamp(opt.difficulty, 0.0, 1.0);
  const std::int64_t h = opt.height;
  const std::int64_t w = opt.width;
  const double size = static_cast<double>(std::min(h, w));
  Rng rng(opt.seed);
  std::vector<SynthItem> items;
  for (std::int64_t i = 0; i < opt.count; ++i) {
    SynthItem item;
    char name[32];
    std::snprintf(name, sizeof(name), "synth_%04lld", static_cast<long long>(i));
    item.id = name;
    item.lesions = opt.min_lesions +
                   static_cast<std::int64_t>(rng.below(
                       static_cast<std::uint64_t>(opt.max_lesions - opt.min_lesions + 1)));

    // Smooth tissue texture plus a depth-dependent gain.
    const double f1 = rng.uniform(1.0, 3.0), f2 = rng.uniform(1.0, 3.0);
    const double p1 = rng.uniform(0.0, 6.3), p2 = rng.uniform(0.0, 6.3);
    std::vector<double> field(static_cast<std::size_t>(h * w));
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x) {
        const double yy = static_cast<double>(y) / static_cast<double>(h);
        const double xx = static_cast<double>(x) / static_cast<double>(w);
        field[static_cast<std::size_t>(y * w + x)] =
            0.58 + 0.07 * std::sin(2 * std::numbers::pi * f1 * xx + p1) +
            0.05 * std::cos(2 * std::numbers::pi * f2 * yy + p2) - 0.08 * yy;
      }
    }

    std::vector<Lesion> lesions;
    bool any_lobulated = false;
    for (std::int64_t l = 0; l < item.lesions; ++l) {
      Lesion les;
      les.cy = rng.uniform(0.25, 0.75) * static_cast<double>(h);
      les.cx = rng.uniform(0.25, 0.75) * static_cast<double>(w);
      les.ry = rng.uniform(0.08, 0.2) * size;
      les.rx = rng.uniform(0.08, 0.2) * size;
      les.theta = rng.uniform(0.0, std::numbers::pi);
      les.lobulated = rng.uniform() < 0.4;
      les.lobe_amp = rng.uniform(0.1, 0.25);
      les.lobe_freq = static_cast<double>(3 + rng.below(4));
      les.lobe_phase = rng.uniform(0.0, 6.3);
      les.intensity = rng.uniform(0.12, 0.25);
      any_lobulated = any_lobulated || les.lobulated;
      lesions.push_back(les);
    }
    item.label = item.lesions == 0 ? Label::normal
                                   : (any_lobulated ? Label::malignant : Label::benign);

    item.mask = GrayImage{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h * w), 0)};
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x) {
        for (const auto& les : lesions) {
          if (les.contains(static_cast<double>(y) + 0.5, static_cast<double>(x) + 0.5)) {
            const auto idx = static_cast<std::size_t>(y * w + x);
            item.mask.pixels[idx] = 255;
            field[idx] = les.intensity;
            break;
          }
        }
      }
    }

    box_blur(field, h, w, static_cast<std::int64_t>(std::lround(3.0 * d)));
    const double speckle = 0.12 + 0.3 * d;
    item.image = GrayImage{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h * w))};
    double lesion_sum = 0, bg_sum = 0;
    std::int64_t lesion_n = 0, bg_n = 0;
    for (std::size_t k = 0; k < field.size(); ++k) {
      const double v = std::clamp(field[k] * (1.0 + speckle * rng.normal()), 0.0, 1.0);
      const auto px = static_cast<std::uint8_t>(std::lround(v * 255.0));
      item.image.pixels[k] = px;
      if (item.mask.pixels[k]) {
        lesion_sum += px;
        ++lesion_n;
      } else {
        bg_sum += px;
        ++bg_n;
      }
    }
    if (lesion_n > 0 && bg_n > 0 &&
        !(lesion_sum / static_cast<double>(lesion_n) < bg_sum / static_cast<double>(bg_n))) {
      throw std::logic_error("synth: lesion region of " + item.id +
                             " is not darker than the background");
    }
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<Sample> to_samples(std::span<const SynthItem> items) {
  std::vector<Sample> out;
  out.reserve(items.size());
  for (const auto& it : items) {
    Sample s;
    s.id = it.id;
    s.label = it.label;
    const Shape shape{1, 1, it.image.height, it.image.width};
    std::vector<float> img(it.image.pixels.size());
    std::vector<float> msk(it.mask.pixels.size());
    for (std::size_t k = 0; k < img.size(); ++k) {
      img[k] = static_cast<float>(it.image.pixels[k]) / 255.0f;
      msk[k] = it.mask.pixels[k] > 127 ? 1.0f : 0.0f;
    }
    s.image = Tensor<float>(shape, std::move(img));
    s.mask = Tensor<float>(shape, std::move(msk));
    out.push_back(std::move(s));
  }
  return out;
}

Manifest synth_dataset(const SynthOptions& opt, const fs::path& dir) {
  const auto items = synth_images(opt);
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  Manifest m;
  for (const auto& it : items) {
    ManifestRecord r;
    r.image_path = dir / "images" / (it.id + ".png");
    r.mask_path = dir / "masks" / (it.id + ".png");
    r.label = it.label;
    write_png_gray(it.image, r.image_path);
    write_png_gray(it.mask, r.mask_path);
    m.records.push_back(std::move(r));
  }
  write_manifest(m, dir / "manifest.jsonl");
  return m;
}

#define AAUNET_INSTANTIATE_TRAINING(T)                                                      \
  template Var<T> bce_loss(const Var<T>&, const Tensor<T>&, LossReduction, double);         \
  template void adam_step(Parameter<T>&, std::int64_t, const TrainConfig&);                 \
  template class Adam<T>;                                                                   \
  template double evaluate_dice(const AauNet<T>&, std::span<const Sample>, std::int64_t);   \
  template TrainResult train(AauNet<T>&, std::span<const Sample>, std::span<const Sample>,  \
                             const TrainConfig&, const TrainHooks&);

AAUNET_INSTANTIATE_TRAINING(float)
AAUNET_INSTANTIATE_TRAINING(double)

}  // namespace aaunet
