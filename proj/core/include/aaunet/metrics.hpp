#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aaunet/tensor.hpp"

namespace aaunet {

/// Pixel counts of a binary prediction against a binary ground truth.
struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Both inputs must hold only 0 and 1 and have equal length.
ConfusionCounts confusion(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt);

/// Tensor overload; values must be exactly 0 or 1.
template <typename T>
ConfusionCounts confusion(const Tensor<T>& pred_mask, const Tensor<T>& gt_mask);

/// Binarises `prob` with `prob >= threshold` first.
template <typename T>
ConfusionCounts confusion_at(const Tensor<T>& prob, const Tensor<T>& gt_mask, double threshold);

/// Percentages in [0, 100].
struct SegmentationScores {
  double jaccard = 0;
  double precision = 0;
  double recall = 0;
  double specificity = 0;
  double dice = 0;

  static constexpr std::array<std::string_view, 5> kNames = {"Jaccard", "Precision", "Recall",
                                                             "Specificity", "Dice"};
  std::array<double, 5> as_array() const { return {jaccard, precision, recall, specificity, dice}; }
};

/// Pixel-level scores. A zero denominator scores 100 when neither mask
/// contains the class the denominator counts, otherwise 0.
SegmentationScores segmentation_metrics(const ConfusionCounts& c);

struct CurvePoint {
  double threshold = 0;
  double fpr = 0;
  double tpr = 0;
  double precision = 0;
  double recall = 0;
};

struct Curves {
  /// Ordered by increasing threshold.
  std::vector<CurvePoint> points;
  double auc = 0;
};

/// Sweeps `n_thresholds` evenly spaced thresholds over [0, 1] across the
/// pooled pixels; a pixel is positive when prob >= threshold. AUC is the
/// trapezoidal area under the ROC polyline anchored at (0,0) and (1,1).
/// Throws std::invalid_argument on empty input and std::domain_error when
/// the ground truth holds a single class.
Curves roc_pr_curves(std::span<const double> probs, std::span<const std::uint8_t> labels,
                     int n_thresholds = 101);

template <typename T>
Curves roc_pr_curves(std::span<const Tensor<T>> probs, std::span<const Tensor<T>> gts,
                     int n_thresholds = 101);

struct TTestResult {
  double t = 0;
  std::int64_t df = 0;
  double p = 1;
};

/// Two-sided paired Student t-test on a - b.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

/// I_x(a, b) by continued fraction, absolute tolerance 1e-10 or better.
double regularized_incomplete_beta(double a, double b, double x);
/// CDF of Student's t distribution with `df` degrees of freedom.
double student_t_cdf(double t, double df);

struct MeanStd {
  double mean = 0;
  double std = 0;  // sample standard deviation (n - 1)
};

MeanStd mean_std(std::span<const double> values);
/// "78.14 ± 2.41"
std::string format_mean_std(const MeanStd& m, int decimals = 2);

struct ImageScores {
  std::string id;
  SegmentationScores scores;
};

struct MetricsReport {
  std::vector<ImageScores> per_image;
  std::array<MeanStd, 5> aggregate{};
  Curves curves;
  double auc = 0;
  bool pooled = false;
};

struct ReportOptions {
  double threshold = 0.5;
  int n_thresholds = 101;
  /// Aggregate from pooled pixel counts instead of averaging per image.
  bool pooled = false;
  /// Skip ROC/PR when the pooled ground truth is single-class instead of throwing.
  bool allow_degenerate_auc = true;
};

template <typename T>
MetricsReport build_report(std::span<const std::string> ids, std::span<const Tensor<T>> probs,
                           std::span<const Tensor<T>> gts, const ReportOptions& opt = {});

/// One row per image followed by "mean" and "std" rows. The header comment
/// states the zero-denominator convention.
void write_metrics_csv(const MetricsReport& report, const std::filesystem::path& path);
/// threshold,fpr,tpr,precision,recall
void write_curves_csv(const Curves& curves, const std::filesystem::path& path);

}  // namespace aaunet
