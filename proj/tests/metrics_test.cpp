#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "aaunet/metrics.hpp"
#include "aaunet/random.hpp"

namespace aaunet {
namespace {

using Bytes = std::vector<std::uint8_t>;

ConfusionCounts loop_oracle(const Bytes& p, const Bytes& g) {
  ConfusionCounts c;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] && g[i]) ++c.tp;
    if (p[i] && !g[i]) ++c.fp;
    if (!p[i] && !g[i]) ++c.tn;
    if (!p[i] && g[i]) ++c.fn;
  }
  return c;
}

Bytes random_mask(Rng& rng, std::size_t n, double density) {
  Bytes m(n);
  for (auto& v : m) v = rng.uniform() < density ? 1 : 0;
  return m;
}

TEST(Confusion, Basics) {
  const Bytes ones{1, 1, 1, 1};
  EXPECT_EQ(confusion(ones, ones), (ConfusionCounts{4, 0, 0, 0}));
  const Bytes gt{1, 0, 1, 0};
  const Bytes inv{0, 1, 0, 1};
  const auto c = confusion(inv, gt);
  EXPECT_EQ(c.tp, 0u);
  EXPECT_EQ(c.tn, 0u);
  EXPECT_EQ(c.total(), 4u);
}

TEST(Confusion, MatchesLoopOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = random_mask(rng, 16, 0.5);
    const auto g = random_mask(rng, 16, 0.4);
    EXPECT_EQ(confusion(p, g), loop_oracle(p, g));
  }
}

TEST(Confusion, Errors) {
  EXPECT_THROW(confusion(Bytes{1, 0}, Bytes{1}), std::invalid_argument);
  EXPECT_THROW(confusion(Bytes{2, 0}, Bytes{1, 0}), std::invalid_argument);
  const Tensor<float> half(Shape{1, 1, 1, 2}, 0.5f);
  const Tensor<float> bin(Shape{1, 1, 1, 2}, 1.0f);
  EXPECT_THROW(confusion(half, bin), std::invalid_argument);
  EXPECT_THROW(confusion(bin, Tensor<float>(Shape{1, 1, 2, 1}, 1.0f)), std::invalid_argument);
}

TEST(SegmentationMetrics, HandCountedExample) {
  // gt: upper row; pred: left column.
  const Bytes gt{1, 1, 0, 0};
  const Bytes pred{1, 0, 1, 0};
  const auto c = confusion(pred, gt);
  EXPECT_EQ(c, (ConfusionCounts{1, 1, 1, 1}));
  const auto s = segmentation_metrics(c);
  EXPECT_NEAR(s.jaccard, 100.0 / 3.0, 1e-12);
  EXPECT_NEAR(s.dice, 50.0, 1e-12);
  EXPECT_NEAR(s.precision, 50.0, 1e-12);
  EXPECT_NEAR(s.recall, 50.0, 1e-12);
  EXPECT_NEAR(s.specificity, 50.0, 1e-12);
}

TEST(SegmentationMetrics, PerfectAndDisjoint) {
  for (double v : segmentation_metrics({3, 0, 5, 0}).as_array()) EXPECT_EQ(v, 100.0);
  const auto d = segmentation_metrics({0, 3, 2, 3});
  EXPECT_EQ(d.jaccard, 0.0);
  EXPECT_EQ(d.precision, 0.0);
  EXPECT_EQ(d.recall, 0.0);
  EXPECT_EQ(d.dice, 0.0);
}

TEST(SegmentationMetrics, DegenerateDenominators) {
  // Both masks empty: agreement on absence.
  const auto empty = segmentation_metrics({0, 0, 9, 0});
  EXPECT_EQ(empty.jaccard, 100.0);
  EXPECT_EQ(empty.dice, 100.0);
  EXPECT_EQ(empty.precision, 100.0);
  EXPECT_EQ(empty.recall, 100.0);
  // Nothing predicted, lesion missed.
  const auto missed = segmentation_metrics({0, 0, 5, 4});
  EXPECT_EQ(missed.recall, 0.0);
  EXPECT_EQ(missed.dice, 0.0);
  // Whole image is lesion and predicted so: no negatives at all.
  EXPECT_EQ(segmentation_metrics({4, 0, 0, 0}).specificity, 100.0);
}

TEST(SegmentationMetrics, DiceJaccardIdentityAndRange) {
  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const double density = rng.uniform();
    const auto p = random_mask(rng, 64, density);
    const auto g = random_mask(rng, 64, rng.uniform());
    const auto s = segmentation_metrics(confusion(p, g));
    const double j = s.jaccard / 100.0;
    EXPECT_NEAR(s.dice / 100.0, 2 * j / (1 + j), 1e-12);
    for (double v : s.as_array()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 100.0);
    }
  }
}

TEST(SegmentationMetrics, ThresholdedProbabilitiesMatchBinaryMask) {
  Rng rng(3);
  Tensor<float> prob(Shape{1, 1, 8, 8});
  Tensor<float> gt(prob.shape());
  Tensor<float> bin(prob.shape());
  for (std::int64_t i = 0; i < prob.numel(); ++i) {
    prob[i] = static_cast<float>(rng.uniform());
    gt[i] = rng.uniform() < 0.3 ? 1.0f : 0.0f;
    bin[i] = prob[i] >= 0.5f ? 1.0f : 0.0f;
  }
  EXPECT_EQ(confusion_at(prob, gt, 0.5), confusion(bin, gt));
}

TEST(Curves, PerfectPredictionsGiveUnitAuc) {
  Rng rng(4);
  std::vector<double> p;
  Bytes y;
  for (int i = 0; i < 200; ++i) {
    y.push_back(rng.uniform() < 0.3 ? 1 : 0);
    p.push_back(y.back());
  }
  EXPECT_DOUBLE_EQ(roc_pr_curves(p, y).auc, 1.0);
}

TEST(Curves, RandomPredictionsGiveHalfAuc) {
  double total = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    std::vector<double> p(10000);
    Bytes y(10000);
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = rng.uniform();
      y[i] = rng.uniform() < 0.5 ? 1 : 0;
    }
    const double auc = roc_pr_curves(p, y).auc;
    EXPECT_NEAR(auc, 0.5, 0.03) << "seed " << seed;
    total += auc;
  }
  EXPECT_NEAR(total / 20.0, 0.5, 0.03);
}

TEST(Curves, MonotoneInThreshold) {
  Rng rng(5);
  std::vector<double> p(500);
  Bytes y(500);
  for (std::size_t i = 0; i < p.size(); ++i) {
    y[i] = rng.uniform() < 0.4 ? 1 : 0;
    p[i] = std::clamp(0.3 * y[i] + 0.7 * rng.uniform(), 0.0, 1.0);
  }
  const auto c = roc_pr_curves(p, y, 51);
  ASSERT_EQ(c.points.size(), 51u);
  for (std::size_t i = 1; i < c.points.size(); ++i) {
    EXPECT_GT(c.points[i].threshold, c.points[i - 1].threshold);
    EXPECT_LE(c.points[i].tpr, c.points[i - 1].tpr);
    EXPECT_LE(c.points[i].fpr, c.points[i - 1].fpr);
    EXPECT_EQ(c.points[i].recall, c.points[i].tpr);
  }
  EXPECT_GE(c.auc, 0.0);
  EXPECT_LE(c.auc, 1.0);
  EXPECT_GT(c.auc, 0.6);
}

TEST(Curves, Errors) {
  EXPECT_THROW(roc_pr_curves(std::vector<double>{}, Bytes{}), std::invalid_argument);
  EXPECT_THROW(roc_pr_curves(std::vector<double>{0.2, 0.9}, Bytes{1, 1}), std::domain_error);
  EXPECT_THROW(roc_pr_curves(std::vector<double>{0.2}, Bytes{1, 0}), std::invalid_argument);
}

TEST(TTest, TableOracle) {
  const std::vector<double> a{1, 2, 3, 4};
  const std::vector<double> b{0, 0, 0, 0};
  const auto r = paired_t_test(a, b);
  EXPECT_NEAR(r.t, 3.872983346207417, 1e-12);
  EXPECT_EQ(r.df, 3);
  EXPECT_NEAR(r.p, 0.030466291662170977, 1e-10);
}

TEST(TTest, SecondOracle) {
  const std::vector<double> a{78.1, 80.2, 75.5, 79.0};
  const std::vector<double> b{68.0, 70.1, 66.2, 71.5};
  const auto r = paired_t_test(a, b);
  EXPECT_NEAR(r.t, 15.088431127200264, 1e-9);
  EXPECT_NEAR(r.p, 0.0006319944928166794, 1e-10);
}

TEST(TTest, SwapNegatesTAndKeepsP) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(5), b(5);
    for (int i = 0; i < 5; ++i) {
      a[i] = rng.normal();
      b[i] = rng.normal();
    }
    const auto ab = paired_t_test(a, b);
    const auto ba = paired_t_test(b, a);
    EXPECT_EQ(ab.t, -ba.t);
    EXPECT_EQ(ab.p, ba.p);
  }
}

TEST(TTest, DegenerateInputs) {
  const std::vector<double> a{1, 2, 3};
  const std::vector<double> shifted{3, 4, 5};
  try {
    paired_t_test(a, shifted);
    FAIL();
  } catch (const std::domain_error& e) {
    EXPECT_NE(std::string(e.what()).find("degenerate: identical samples"), std::string::npos);
  }
  EXPECT_THROW(paired_t_test(a, a), std::domain_error);
  EXPECT_THROW(paired_t_test(std::vector<double>{1}, std::vector<double>{2}), std::invalid_argument);
  EXPECT_THROW(paired_t_test(a, std::vector<double>{1, 2}), std::invalid_argument);
}

TEST(SpecialFunctions, IncompleteBetaAndTCdf) {
  EXPECT_NEAR(regularized_incomplete_beta(2.5, 0.5, 0.3), 0.018927124071945658, 1e-10);
  EXPECT_NEAR(regularized_incomplete_beta(10, 3, 0.9), 0.889130022255, 1e-10);
  EXPECT_EQ(regularized_incomplete_beta(2, 3, 0.0), 0.0);
  EXPECT_EQ(regularized_incomplete_beta(2, 3, 1.0), 1.0);
  EXPECT_NEAR(student_t_cdf(-1.2, 7), 0.1345859684136032, 1e-10);
  EXPECT_NEAR(student_t_cdf(2.0, 1), 0.8524163823495667, 1e-10);
  EXPECT_EQ(student_t_cdf(0.0, 4), 0.5);
}

TEST(MeanStd, SampleStandardDeviation) {
  const std::vector<double> v{2, 4, 4, 4, 5, 5, 7, 9};
  const auto m = mean_std(v);
  EXPECT_DOUBLE_EQ(m.mean, 5.0);
  EXPECT_NEAR(m.std, std::sqrt(32.0 / 7.0), 1e-12);
  EXPECT_EQ(mean_std(std::vector<double>{3.0}).std, 0.0);
  EXPECT_EQ(format_mean_std({78.144, 2.406}), "78.14 ± 2.41");
}

TEST(Report, PerImageAndAggregate) {
  const std::vector<std::string> ids{"a", "b"};
  std::vector<Tensor<float>> probs{Tensor<float>(Shape{1, 1, 2, 2}, std::vector<float>{0.9f, 0.8f, 0.1f, 0.2f}),
                                   Tensor<float>(Shape{1, 1, 2, 2}, std::vector<float>{0.9f, 0.1f, 0.9f, 0.1f})};
  std::vector<Tensor<float>> gts{Tensor<float>(Shape{1, 1, 2, 2}, std::vector<float>{1, 1, 0, 0}),
                                 Tensor<float>(Shape{1, 1, 2, 2}, std::vector<float>{1, 1, 0, 0})};
  const auto r = build_report<float>(ids, probs, gts);
  ASSERT_EQ(r.per_image.size(), 2u);
  EXPECT_EQ(r.per_image[0].scores.dice, 100.0);
  EXPECT_EQ(r.per_image[1].scores.dice, 50.0);
  EXPECT_DOUBLE_EQ(r.aggregate[4].mean, 75.0);
  EXPECT_NEAR(r.aggregate[4].std, std::sqrt(2 * 25.0 * 25.0), 1e-12);

  const auto dir = std::filesystem::temp_directory_path() / "aaunet_metrics_test";
  std::filesystem::create_directories(dir);
  write_metrics_csv(r, dir / "m.csv");
  write_curves_csv(r.curves, dir / "c.csv");
  std::ifstream in(dir / "m.csv");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  EXPECT_EQ(text.rfind("#", 0), 0u);
  EXPECT_NE(text.find("id,jaccard,precision,recall,specificity,dice"), std::string::npos);
  EXPECT_NE(text.find("\nmean,"), std::string::npos);
  EXPECT_NE(text.find("\nstd,"), std::string::npos);
}

}  // namespace
}  // namespace aaunet
