#include "aaunet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace aaunet {

ConfusionCounts confusion(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
  if (pred.size() != gt.size()) {
    throw std::invalid_argument("confusion: prediction has " + std::to_string(pred.size()) +
                                " pixels, ground truth " + std::to_string(gt.size()));
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] > 1 || gt[i] > 1) {
      throw std::invalid_argument("confusion: non-binary value at pixel " + std::to_string(i));
    }
    const int key = pred[i] * 2 + gt[i];
    switch (key) {
      case 3: ++c.tp; break;
      case 2: ++c.fp; break;
      case 1: ++c.fn; break;
      default: ++c.tn; break;
    }
  }
  return c;
}

namespace {

template <typename T>
std::vector<std::uint8_t> to_binary(const Tensor<T>& t, const char* what) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(t.numel()));
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    const T v = t[i];
    if (v != T(0) && v != T(1)) {
      throw std::invalid_argument(std::string("confusion: ") + what +
                                  " is not binary at pixel " + std::to_string(i));
    }
    out[static_cast<std::size_t>(i)] = v == T(1) ? 1 : 0;
  }
  return out;
}

double ratio_or_convention(std::uint64_t num, std::uint64_t den, bool both_absent) {
  if (den == 0) return both_absent ? 100.0 : 0.0;
  return 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

template <typename T>
ConfusionCounts confusion(const Tensor<T>& pred_mask, const Tensor<T>& gt_mask) {
  if (pred_mask.shape() != gt_mask.shape()) {
    throw std::invalid_argument("confusion: shape " + to_string(pred_mask.shape()) + " vs " +
                                to_string(gt_mask.shape()));
  }
  return confusion(to_binary(pred_mask, "prediction"), to_binary(gt_mask, "ground truth"));
}

template <typename T>
ConfusionCounts confusion_at(const Tensor<T>& prob, const Tensor<T>& gt_mask, double threshold) {
  Tensor<T> bin(prob.shape());
  for (std::int64_t i = 0; i < prob.numel(); ++i) {
    bin[i] = static_cast<double>(prob[i]) >= threshold ? T(1) : T(0);
  }
  return confusion(bin, gt_mask);
}

SegmentationScores segmentation_metrics(const ConfusionCounts& c) {
  // Positive class absent from both masks <=> tp = fp = fn = 0.
  const bool no_positives = c.tp == 0 && c.fp == 0 && c.fn == 0;
  const bool no_negatives = c.tn == 0 && c.fp == 0 && c.fn == 0;
  SegmentationScores s;
  s.jaccard = ratio_or_convention(c.tp, c.tp + c.fp + c.fn, no_positives);
  s.precision = ratio_or_convention(c.tp, c.tp + c.fp, no_positives);
  s.recall = ratio_or_convention(c.tp, c.tp + c.fn, no_positives);
  s.specificity = ratio_or_convention(c.tn, c.tn + c.fp, no_negatives);
  s.dice = ratio_or_convention(2 * c.tp, 2 * c.tp + c.fp + c.fn, no_positives);
  return s;
}

Curves roc_pr_curves(std::span<const double> probs, std::span<const std::uint8_t> labels,
                     int n_thresholds) {
  if (probs.empty()) throw std::invalid_argument("roc_pr_curves: empty input");
  if (probs.size() != labels.size()) {
    throw std::invalid_argument("roc_pr_curves: " + std::to_string(probs.size()) +
                                " probabilities vs " + std::to_string(labels.size()) + " labels");
  }
  if (n_thresholds < 2) throw std::invalid_argument("roc_pr_curves: need >= 2 thresholds");
  std::vector<double> pos;
  std::vector<double> neg;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!(probs[i] >= 0.0 && probs[i] <= 1.0)) {
      throw std::invalid_argument("roc_pr_curves: probability outside [0,1] at " +
                                  std::to_string(i));
    }
    (labels[i] ? pos : neg).push_back(probs[i]);
  }
  if (pos.empty() || neg.empty()) {
    throw std::domain_error("roc_pr_curves: AUC undefined, ground truth contains a single class");
  }
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  auto count_at_least = [](const std::vector<double>& v, double t) {
    return static_cast<double>(v.end() - std::lower_bound(v.begin(), v.end(), t));
  };

  Curves c;
  c.points.reserve(static_cast<std::size_t>(n_thresholds));
  for (int k = 0; k < n_thresholds; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(n_thresholds - 1);
    const double tp = count_at_least(pos, t);
    const double fp = count_at_least(neg, t);
    CurvePoint p;
    p.threshold = t;
    p.tpr = tp / static_cast<double>(pos.size());
    p.fpr = fp / static_cast<double>(neg.size());
    p.recall = p.tpr;
    // No predicted positives: precision is taken as 1.
    p.precision = tp + fp > 0 ? tp / (tp + fp) : 1.0;
    c.points.push_back(p);
  }

  // Walk from the (1,1) anchor through increasing thresholds to (0,0).
  double prev_fpr = 1.0;
  double prev_tpr = 1.0;
  double area = 0.0;
  for (const auto& p : c.points) {
    area += (prev_fpr - p.fpr) * (prev_tpr + p.tpr) * 0.5;
    prev_fpr = p.fpr;
    prev_tpr = p.tpr;
  }
  area += prev_fpr * prev_tpr * 0.5;
  c.auc = area;
  return c;
}

template <typename T>
Curves roc_pr_curves(std::span<const Tensor<T>> probs, std::span<const Tensor<T>> gts,
                     int n_thresholds) {
  if (probs.size() != gts.size()) {
    throw std::invalid_argument("roc_pr_curves: prediction and ground-truth counts differ");
  }
  std::vector<double> p;
  std::vector<std::uint8_t> l;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i].shape() != gts[i].shape()) {
      throw std::invalid_argument("roc_pr_curves: shape mismatch at image " + std::to_string(i));
    }
    for (std::int64_t j = 0; j < probs[i].numel(); ++j) {
      p.push_back(static_cast<double>(probs[i][j]));
      l.push_back(gts[i][j] > T(0.5) ? 1 : 0);
    }
  }
  return roc_pr_curves(p, l, n_thresholds);
}

double regularized_incomplete_beta(double a, double b, double x) {
  if (a <= 0 || b <= 0) throw std::invalid_argument("incomplete beta: a, b must be > 0");
  if (x <= 0) return 0.0;
  if (x >= 1) return 1.0;
  // Modified Lentz evaluation of the continued fraction; converges fast for
  // x < (a + 1) / (a + b + 2), otherwise use the symmetry I_x(a,b) = 1 - I_{1-x}(b,a).
  const auto cont_frac = [](double a, double b, double x) {
    constexpr double kTiny = 1e-300;
    constexpr double kEps = 1e-16;
    double c = 1.0;
    double d = 1.0 - (a + b) * x / (a + 1.0);
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 1000; ++m) {
      const double m2 = 2.0 * m;
      double aa = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
      d = 1.0 + aa * d;
      if (std::abs(d) < kTiny) d = kTiny;
      c = 1.0 + aa / c;
      if (std::abs(c) < kTiny) c = kTiny;
      d = 1.0 / d;
      h *= d * c;
      aa = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
      d = 1.0 + aa * d;
      if (std::abs(d) < kTiny) d = kTiny;
      c = 1.0 + aa / c;
      if (std::abs(c) < kTiny) c = kTiny;
      d = 1.0 / d;
      const double delta = d * c;
      h *= delta;
      if (std::abs(delta - 1.0) < kEps) return h;
    }
    throw std::runtime_error("incomplete beta: continued fraction did not converge");
  };
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * cont_frac(a, b, x) / a;
  return 1.0 - front * cont_frac(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
  if (df <= 0) throw std::invalid_argument("student_t_cdf: df must be > 0");
  const double x = df / (df + t * t);
  const double tail = 0.5 * regularized_incomplete_beta(0.5 * df, 0.5, x);
  return t >= 0 ? 1.0 - tail : tail;
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("paired_t_test: samples differ in length (" +
                                std::to_string(a.size()) + " vs " + std::to_string(b.size()) +
                                ")");
  }
  if (a.size() < 2) throw std::invalid_argument("paired_t_test: need at least 2 pairs");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const MeanStd ms = mean_std(d);
  if (ms.std == 0.0) {
    throw std::domain_error("paired_t_test: degenerate: identical samples (zero-variance differences)");
  }
  const double n = static_cast<double>(d.size());
  TTestResult r;
  r.t = ms.mean / (ms.std / std::sqrt(n));
  r.df = static_cast<std::int64_t>(d.size()) - 1;
  const double dfd = static_cast<double>(r.df);
  // The two-sided tail depends on t only through t^2, so the p value is
  // symmetric in (a, b) bit for bit.
  r.p = regularized_incomplete_beta(0.5 * dfd, 0.5, dfd / (dfd + r.t * r.t));
  return r;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd m;
  if (values.empty()) return m;
  double s = 0;
  for (double v : values) s += v;
  m.mean = s / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0;
    for (double v : values) ss += (v - m.mean) * (v - m.mean);
    m.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return m;
}

std::string format_mean_std(const MeanStd& m, int decimals) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%.*f ± %.*f", decimals, m.mean, decimals, m.std);
  return buf;
}

template <typename T>
MetricsReport build_report(std::span<const std::string> ids, std::span<const Tensor<T>> probs,
                           std::span<const Tensor<T>> gts, const ReportOptions& opt) {
  if (ids.size() != probs.size() || probs.size() != gts.size()) {
    throw std::invalid_argument("build_report: ids, predictions and ground truths differ in count");
  }
  MetricsReport r;
  r.pooled = opt.pooled;
  ConfusionCounts pooled;
  std::array<std::vector<double>, 5> columns;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const ConfusionCounts c = confusion_at(probs[i], gts[i], opt.threshold);
    pooled += c;
    ImageScores row{ids[i], segmentation_metrics(c)};
    const auto vals = row.scores.as_array();
    for (std::size_t k = 0; k < 5; ++k) columns[k].push_back(vals[k]);
    r.per_image.push_back(std::move(row));
  }
  if (opt.pooled) {
    const auto vals = segmentation_metrics(pooled).as_array();
    for (std::size_t k = 0; k < 5; ++k) r.aggregate[k] = MeanStd{vals[k], 0.0};
  } else {
    for (std::size_t k = 0; k < 5; ++k) r.aggregate[k] = mean_std(columns[k]);
  }
  if (!probs.empty()) {
    try {
      r.curves = roc_pr_curves(probs, gts, opt.n_thresholds);
      r.auc = r.curves.auc;
    } catch (const std::domain_error&) {
      if (!opt.allow_degenerate_auc) throw;
      r.auc = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return r;
}

void write_metrics_csv(const MetricsReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# scores in percent; a zero denominator scores 100 when neither mask contains the "
         "counted class, else 0; aggregation: "
      << (report.pooled ? "pooled pixels" : "per image") << "\n";
  out << "id,jaccard,precision,recall,specificity,dice\n";
  char buf[256];
  for (const auto& row : report.per_image) {
    const auto& s = row.scores;
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f,%.6f", s.jaccard, s.precision, s.recall,
                  s.specificity, s.dice);
    out << row.id << "," << buf << "\n";
  }
  for (int which = 0; which < 2; ++which) {
    out << (which == 0 ? "mean" : "std");
    for (const auto& a : report.aggregate) {
      std::snprintf(buf, sizeof(buf), ",%.6f", which == 0 ? a.mean : a.std);
      out << buf;
    }
    out << "\n";
  }
  std::snprintf(buf, sizeof(buf), "%.6f", report.auc);
  out << "# auc," << buf << "\n";
}

void write_curves_csv(const Curves& curves, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "threshold,fpr,tpr,precision,recall\n";
  char buf[256];
  for (const auto& p : curves.points) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.8f,%.8f,%.8f,%.8f\n", p.threshold, p.fpr, p.tpr,
                  p.precision, p.recall);
    out << buf;
  }
}

#define AAUNET_INSTANTIATE_METRICS(T)                                                        \
  template ConfusionCounts confusion(const Tensor<T>&, const Tensor<T>&);                    \
  template ConfusionCounts confusion_at(const Tensor<T>&, const Tensor<T>&, double);         \
  template Curves roc_pr_curves(std::span<const Tensor<T>>, std::span<const Tensor<T>>, int); \
  template MetricsReport build_report(std::span<const std::string>,                          \
                                      std::span<const Tensor<T>>, std::span<const Tensor<T>>, \
                                      const ReportOptions&);

AAUNET_INSTANTIATE_METRICS(float)
AAUNET_INSTANTIATE_METRICS(double)

}  // namespace aaunet
