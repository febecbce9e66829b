#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "aaunet/training.hpp"

namespace aaunet {
namespace {

namespace fs = std::filesystem;
using TD = Tensor<double>;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "aaunet_training_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double bce_oracle(const TD& p, const TD& y, double eps, bool mean) {
  double acc = 0;
  for (std::int64_t i = 0; i < p.numel(); ++i) {
    const double q = std::min(std::max(p[i], eps), 1.0 - eps);
    acc -= y[i] * std::log(q) + (1.0 - y[i]) * std::log(1.0 - q);
  }
  return mean ? acc / static_cast<double>(p.numel()) : acc;
}

TEST(TrainConfig, Defaults) {
  const TrainConfig cfg;
  EXPECT_EQ(cfg.learning_rate, 0.001);
  EXPECT_EQ(cfg.epochs, 50);
  EXPECT_EQ(cfg.batch_size, 12);
  EXPECT_EQ(cfg.adam_beta1, 0.9);
  EXPECT_EQ(cfg.adam_beta2, 0.999);
  EXPECT_EQ(cfg.adam_eps, 1e-8);
  EXPECT_EQ(cfg.folds, 4);
  EXPECT_EQ(cfg.loss_reduction, LossReduction::mean);
  EXPECT_EQ(cfg.clamp_eps, 1e-7);
  EXPECT_NO_THROW(cfg.validate());
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  cfg.learning_rate = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.folds = 1;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.clamp_eps = 0.5;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(BceLoss, HalfPredictionIsLn2) {
  const auto loss = bce_loss(constant(TD::scalar(0.5)), TD::scalar(1.0));
  EXPECT_NEAR(loss->value.item(), std::numbers::ln2, 1e-9);
}

TEST(BceLoss, MatchesLoopOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    TD p(Shape{1, 1, 2, 2});
    TD y(p.shape());
    for (std::int64_t i = 0; i < 4; ++i) {
      p[i] = rng.uniform();
      y[i] = trial % 2 == 0 ? (rng.uniform() < 0.5 ? 0.0 : 1.0) : rng.uniform();
    }
    for (bool mean : {true, false}) {
      const auto red = mean ? LossReduction::mean : LossReduction::sum;
      EXPECT_NEAR(bce_loss(constant(p), y, red, 1e-7)->value.item(), bce_oracle(p, y, 1e-7, mean),
                  1e-12);
    }
  }
}

TEST(BceLoss, PerfectPredictionIsNearZero) {
  const TD y(Shape{1, 1, 2, 2}, std::vector<double>{0, 1, 1, 0});
  const auto loss = bce_loss(constant(y), y, LossReduction::sum, 1e-7);
  EXPECT_GE(loss->value.item(), 0.0);
  EXPECT_LE(loss->value.item(), -std::log(1.0 - 1e-7) * 4 + 1e-15);
}

TEST(BceLoss, NonNegative) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    TD p(Shape{1, 1, 3, 3}), y(p.shape());
    for (std::int64_t i = 0; i < p.numel(); ++i) {
      p[i] = rng.uniform();
      y[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
    }
    EXPECT_GE(bce_loss(constant(p), y)->value.item(), 0.0);
  }
}

TEST(BceLoss, ClampedGradientIsZero) {
  auto p = leaf(TD(Shape{1, 1, 1, 2}, std::vector<double>{1e-12, 0.5}), true);
  const TD y(Shape{1, 1, 1, 2}, std::vector<double>{1, 1});
  backward(bce_loss(p, y, LossReduction::sum, 1e-7));
  EXPECT_EQ((*p->grad)[0], 0.0);
  EXPECT_NEAR((*p->grad)[1], -2.0, 1e-12);
}

TEST(BceLoss, Errors) {
  EXPECT_THROW(bce_loss(constant(TD(Shape{1, 1, 2, 2}, 0.5)), TD(Shape{1, 1, 2, 1})), ShapeError);
  EXPECT_THROW(bce_loss(constant(TD(Shape{1, 1, 1, 1}, 0.5)), TD::scalar(1.5)), std::invalid_argument);
}

TEST(Adam, ZeroGradientLeavesEverythingUnchanged) {
  Parameter<double> p("w", TD::full(Shape{1, 1, 2, 2}, 0.3));
  p.node->grad_buffer();
  TrainConfig cfg;
  for (std::int64_t t = 1; t <= 5; ++t) adam_step(p, t, cfg);
  for (double v : p.value().data()) EXPECT_EQ(v, 0.3);
  for (double m : p.adam_m.data()) EXPECT_EQ(m, 0.0);
  for (double v : p.adam_v.data()) EXPECT_EQ(v, 0.0);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  for (double g : {1e-3, 0.7, -4.0, 250.0}) {
    Parameter<double> p("w", TD::full(Shape{1, 1, 1, 3}, 1.0));
    p.node->grad_buffer().fill(g);
    TrainConfig cfg;
    adam_step(p, 1, cfg);
    for (double v : p.value().data()) {
      EXPECT_NEAR(std::abs(v - 1.0), cfg.learning_rate, 1e-7 * cfg.learning_rate / std::abs(g) + 1e-12);
      EXPECT_EQ(v < 1.0, g > 0);
    }
  }
}

TEST(Adam, MatchesClosedFormOverSteps) {
  Parameter<double> p("w", TD::scalar(0.0));
  TrainConfig cfg;
  double m = 0, v = 0, x = 0;
  const double grads[] = {0.5, -0.2, 0.1, 0.9, -1.3};
  for (int t = 1; t <= 5; ++t) {
    const double g = grads[t - 1];
    p.node->grad.reset();
    p.node->grad_buffer().fill(g);
    adam_step(p, t, cfg);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t));
    const double vh = v / (1 - std::pow(0.999, t));
    x -= 0.001 * mh / (std::sqrt(vh) + 1e-8);
    EXPECT_NEAR(p.value().item(), x, 1e-15);
  }
}

TEST(Adam, IdenticalStreamsStayIdentical) {
  const auto run = [] {
    Parameter<double> p("w", TD::full(Shape{1, 1, 2, 2}, 0.1));
    Rng rng(77);
    TrainConfig cfg;
    for (int t = 1; t <= 10; ++t) {
      p.node->grad.reset();
      for (auto& g : p.node->grad_buffer().data()) g = rng.normal();
      adam_step(p, t, cfg);
    }
    return checksum(p.value());
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, ZeroLearningRateIsIdentity) {
  ParameterStore<double> store;
  store.add("a", TD::full(Shape{1, 2, 3, 3}, 0.4));
  store.add("b", TD::full(Shape{1, 1, 1, 1}, -2.0));
  const auto before = store.checksum();
  TrainConfig cfg;
  cfg.learning_rate = 0;
  Adam<double> opt(cfg);
  Rng rng(5);
  for (int s = 0; s < 25; ++s) {
    for (auto& p : store.all()) {
      p.node->grad.reset();
      for (auto& g : p.node->grad_buffer().data()) g = rng.normal();
    }
    opt.step(store);
  }
  EXPECT_EQ(store.checksum(), before);
  EXPECT_EQ(opt.step_count(), 25);
}

TEST(Adam, NanGradientNamesParameter) {
  Parameter<double> p("enc1.haam1.conv5.weight", TD::scalar(0.0));
  p.node->grad_buffer().fill(std::nan(""));
  try {
    adam_step(p, 1, TrainConfig{});
    FAIL();
  } catch (const TrainError& e) {
    EXPECT_NE(std::string(e.what()).find("enc1.haam1.conv5.weight"), std::string::npos);
  }
}

TEST(Folds, PartitionTwentyIntoFours) {
  const auto splits = make_folds(20, 4, 123);
  ASSERT_EQ(splits.size(), 4u);
  std::multiset<std::size_t> seen;
  for (const auto& s : splits) {
    EXPECT_EQ(s.val_indices.size(), 5u);
    EXPECT_EQ(s.train_indices.size(), 15u);
    for (auto i : s.val_indices) seen.insert(i);
    for (auto i : s.val_indices) {
      EXPECT_EQ(std::count(s.train_indices.begin(), s.train_indices.end(), i), 0);
    }
  }
  EXPECT_EQ(seen.size(), 20u);
  EXPECT_EQ(std::set<std::size_t>(seen.begin(), seen.end()).size(), 20u);
}

TEST(Folds, PureFunctionOfInputs) {
  EXPECT_EQ(split_checksum(make_folds(37, 4, 9)), split_checksum(make_folds(37, 4, 9)));
  EXPECT_NE(split_checksum(make_folds(37, 4, 9)), split_checksum(make_folds(37, 4, 10)));
  for (std::size_t n : {4u, 5u, 7u, 13u, 100u}) {
    std::size_t total = 0;
    std::size_t lo = n, hi = 0;
    for (const auto& s : make_folds(n, 4, 1)) {
      total += s.val_indices.size();
      lo = std::min(lo, s.val_indices.size());
      hi = std::max(hi, s.val_indices.size());
    }
    EXPECT_EQ(total, n);
    EXPECT_LE(hi - lo, 1u);
  }
  EXPECT_THROW(make_folds(3, 4, 1), std::invalid_argument);
}

TEST(Folds, StratifiedKeepsClassesBalanced) {
  std::vector<Label> labels;
  for (int i = 0; i < 12; ++i) labels.push_back(Label::benign);
  for (int i = 0; i < 8; ++i) labels.push_back(Label::malignant);
  for (const auto& s : make_folds(20, 4, 2, labels)) {
    const auto malignant = std::count_if(s.val_indices.begin(), s.val_indices.end(),
                                         [&](std::size_t i) { return labels[i] == Label::malignant; });
    EXPECT_EQ(malignant, 2);
    EXPECT_EQ(s.val_indices.size(), 5u);
  }
}

TEST(Synth, DeterministicAndBinary) {
  SynthOptions opt;
  opt.count = 8;
  opt.seed = 7;
  opt.difficulty = 0.5;
  const auto a = synth_images(opt);
  const auto b = synth_images(opt);
  ASSERT_EQ(a.size(), 8u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].image.pixels, b[i].image.pixels);
    EXPECT_EQ(a[i].mask.pixels, b[i].mask.pixels);
    for (auto m : a[i].mask.pixels) EXPECT_TRUE(m == 0 || m == 255);
    EXPECT_LE(a[i].lesions, 2);
    EXPECT_GE(a[i].lesions, 0);
  }
}

TEST(Synth, LesionsDarkerThanBackground) {
  SynthOptions opt;
  opt.count = 30;
  opt.seed = 11;
  opt.min_lesions = 1;
  for (double d : {0.0, 0.5, 1.0}) {
    opt.difficulty = d;
    for (const auto& item : synth_images(opt)) {
      double in = 0, out = 0;
      std::int64_t n_in = 0, n_out = 0;
      for (std::size_t i = 0; i < item.mask.pixels.size(); ++i) {
        if (item.mask.pixels[i]) {
          in += item.image.pixels[i];
          ++n_in;
        } else {
          out += item.image.pixels[i];
          ++n_out;
        }
      }
      ASSERT_GT(n_in, 0);
      EXPECT_LT(in / n_in, out / n_out) << item.id;
    }
  }
}

TEST(Synth, DatasetFilesAreByteIdentical) {
  SynthOptions opt;
  opt.count = 8;
  opt.seed = 7;
  const auto a = scratch("synth_a");
  const auto b = scratch("synth_b");
  const auto ma = synth_dataset(opt, a);
  synth_dataset(opt, b);
  ASSERT_EQ(ma.records.size(), 8u);
  EXPECT_EQ(slurp(a / "manifest.jsonl"), slurp(b / "manifest.jsonl"));
  for (const auto& r : ma.records) {
    const auto rel_img = fs::relative(r.image_path, a);
    const auto rel_mask = fs::relative(r.mask_path, a);
    EXPECT_EQ(slurp(a / rel_img), slurp(b / rel_img));
    EXPECT_EQ(slurp(a / rel_mask), slurp(b / rel_mask));
  }
  const auto loaded = load_manifest(a / "manifest.jsonl");
  EXPECT_EQ(loaded.records.size(), 8u);
}

std::vector<Sample> tiny_samples(std::int64_t count, std::uint64_t seed) {
  SynthOptions opt;
  opt.count = count;
  opt.height = 16;
  opt.width = 16;
  opt.seed = seed;
  opt.min_lesions = 1;
  const auto items = synth_images(opt);
  return to_samples(items);
}

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.depth = 1;
  cfg.base_width = 4;
  cfg.height = 16;
  cfg.width = 16;
  return cfg;
}

TEST(Train, OneEpochOneBatchIsOneStep) {
  const auto samples = tiny_samples(12, 1);
  AauNet<float> model(tiny_model(), 1);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 12;
  const auto r = train<float>(model, samples, {}, cfg);
  EXPECT_EQ(r.steps, 1);
  ASSERT_EQ(r.log.size(), 1u);
  EXPECT_TRUE(std::isfinite(r.log[0].train_loss));
}

TEST(Train, StepCountIsEpochsTimesBatches) {
  const auto samples = tiny_samples(5, 2);
  AauNet<float> model(tiny_model(), 1);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 2;
  std::int64_t seen = 0;
  TrainHooks hooks;
  hooks.on_step = [&](std::int64_t, std::int64_t, double loss) {
    ++seen;
    EXPECT_TRUE(std::isfinite(loss));
  };
  const auto r = train<float>(model, samples, {}, cfg, hooks);
  EXPECT_EQ(r.steps, 9);
  EXPECT_EQ(seen, 9);
}

TEST(Train, DeterministicRunsAreByteIdentical) {
  const auto samples = tiny_samples(6, 3);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.seed = 5;
  const auto run = [&](const fs::path& dir) {
    AauNet<float> model(tiny_model(), cfg.seed);
    TrainHooks hooks;
    hooks.out_dir = dir;
    hooks.deterministic = true;
    train<float>(model, samples, samples, cfg, hooks);
  };
  const auto a = scratch("det_a");
  const auto b = scratch("det_b");
  run(a);
  run(b);
  for (const char* f : {"epochs.csv", "final.ckpt", "best.ckpt"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  EXPECT_EQ(slurp(a / "epochs.csv").substr(0, 35), "epoch,train_loss,val_dice,wall_time");
  const auto ckpt = load_checkpoint<float>(a / "final.ckpt", tiny_model());
  ASSERT_TRUE(ckpt.state.has_value());
  EXPECT_EQ(ckpt.state->epoch, 2u);
  EXPECT_EQ(ckpt.state->step, 4u);
}

TEST(Train, EarlyStopFromHook) {
  const auto samples = tiny_samples(4, 4);
  AauNet<float> model(tiny_model(), 1);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.batch_size = 4;
  TrainHooks hooks;
  hooks.on_epoch = [](const EpochRecord& r) { return r.epoch < 2; };
  EXPECT_EQ(train<float>(model, samples, {}, cfg, hooks).log.size(), 2u);
}

TEST(Train, MismatchedSampleSizeFails) {
  auto samples = tiny_samples(2, 5);
  samples[1].mask = Tensor<float>(Shape{1, 1, 8, 8});
  AauNet<float> model(tiny_model(), 1);
  TrainConfig cfg;
  cfg.epochs = 1;
  EXPECT_THROW(train<float>(model, samples, {}, cfg), TrainError);
  EXPECT_THROW(train<float>(model, std::span<const Sample>{}, {}, cfg), TrainError);
}

TEST(CrossValidate, ReportsPerFoldAndAggregate) {
  const auto samples = tiny_samples(8, 6);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 4;
  cfg.seed = 3;
  const auto dir = scratch("cv");
  CrossValOptions opt;
  opt.out_dir = dir;
  opt.deterministic = true;
  const auto r = cross_validate(samples, tiny_model(), cfg, opt);
  ASSERT_EQ(r.folds.size(), 4u);
  EXPECT_EQ(r.split_checksum, split_checksum(make_folds(8, 4, 3)));
  for (int m = 0; m < 5; ++m) {
    ASSERT_EQ(r.fold_means[m].size(), 4u);
    double s = 0;
    for (double v : r.fold_means[m]) s += v;
    EXPECT_NEAR(r.aggregate[m].mean, s / 4.0, 1e-12);
  }
  for (int k = 1; k <= 4; ++k) {
    EXPECT_TRUE(fs::exists(dir / ("fold_" + std::to_string(k) + "_report.csv")));
    EXPECT_TRUE(fs::exists(dir / ("fold_" + std::to_string(k) + "_curves.csv")));
  }
  const auto agg = slurp(dir / "aggregate.csv");
  EXPECT_NE(agg.find("Dice"), std::string::npos);
  EXPECT_NE(agg.find(" ± "), std::string::npos);
  EXPECT_THROW(cross_validate(tiny_samples(3, 1), tiny_model(), cfg), TrainError);
}

}  // namespace
}  // namespace aaunet
