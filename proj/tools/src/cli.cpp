#include "aaunet/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#if __has_include(<CLI/CLI.hpp>)
#include <CLI/CLI.hpp>
#else
#include <CLI11.hpp>
#endif
#include <nlohmann/json.hpp>

#include "aaunet/data_io.hpp"
#include "aaunet/gradcheck.hpp"
#include "aaunet/metrics.hpp"
#include "aaunet/model.hpp"
#include "aaunet/training.hpp"

namespace aaunet::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

/// Bad invocation: exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr const char* kThreadsEnv = "AAUNET_NUM_THREADS";

constexpr const char* kPrecedence =
    "Settings resolve as flag > --config file > built-in default. The config file is a flat\n"
    "JSON object whose keys are the names printed by `aaunet train --print-config`.\n"
    "Exit codes: 0 success, 2 usage error, 1 runtime failure.";

// ---- settings ----

struct Settings {
  ModelConfig model;
  TrainConfig train;
  bool skip_normal = false;
};

std::string fmt_number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

json settings_json(const Settings& s) {
  return json{
      {"lr", s.train.learning_rate},
      {"epochs", s.train.epochs},
      {"batch", s.train.batch_size},
      {"adam_beta1", s.train.adam_beta1},
      {"adam_beta2", s.train.adam_beta2},
      {"adam_eps", s.train.adam_eps},
      {"folds", s.train.folds},
      {"seed", s.train.seed},
      {"loss_reduction", std::string(reduction_name(s.train.loss_reduction))},
      {"clamp_eps", s.train.clamp_eps},
      {"stratified", s.train.stratified},
      {"depth", s.model.depth},
      {"base_width", s.model.base_width},
      {"reduction_ratio", s.model.reduction_ratio},
      {"variant", std::string(variant_name(s.model.variant))},
      {"height", s.model.height},
      {"width", s.model.width},
      {"skip_normal", s.skip_normal},
  };
}

void print_settings(const Settings& s, std::ostream& out) {
  // Fixed order; the first three lines are the optimisation headline.
  out << "lr=" << fmt_number(s.train.learning_rate) << "\n"
      << "epochs=" << s.train.epochs << "\n"
      << "batch=" << s.train.batch_size << "\n"
      << "loss_reduction=" << reduction_name(s.train.loss_reduction) << "\n"
      << "clamp_eps=" << fmt_number(s.train.clamp_eps) << "\n"
      << "adam_beta1=" << fmt_number(s.train.adam_beta1) << "\n"
      << "adam_beta2=" << fmt_number(s.train.adam_beta2) << "\n"
      << "adam_eps=" << fmt_number(s.train.adam_eps) << "\n"
      << "folds=" << s.train.folds << "\n"
      << "stratified=" << (s.train.stratified ? "true" : "false") << "\n"
      << "seed=" << s.train.seed << "\n"
      << "variant=" << variant_name(s.model.variant) << "\n"
      << "depth=" << s.model.depth << "\n"
      << "base_width=" << s.model.base_width << "\n"
      << "reduction_ratio=" << s.model.reduction_ratio << "\n"
      << "height=" << s.model.height << "\n"
      << "width=" << s.model.width << "\n"
      << "skip_normal=" << (s.skip_normal ? "true" : "false") << "\n";
}

void apply_config_file(Settings& s, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("config file " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw UsageError("config file " + path.string() + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "lr") s.train.learning_rate = value.get<double>();
      else if (key == "epochs") s.train.epochs = value.get<std::int64_t>();
      else if (key == "batch") s.train.batch_size = value.get<std::int64_t>();
      else if (key == "adam_beta1") s.train.adam_beta1 = value.get<double>();
      else if (key == "adam_beta2") s.train.adam_beta2 = value.get<double>();
      else if (key == "adam_eps") s.train.adam_eps = value.get<double>();
      else if (key == "folds") s.train.folds = value.get<std::int64_t>();
      else if (key == "seed") s.train.seed = value.get<std::uint64_t>();
      else if (key == "loss_reduction") s.train.loss_reduction = parse_reduction(value.get<std::string>());
      else if (key == "clamp_eps") s.train.clamp_eps = value.get<double>();
      else if (key == "stratified") s.train.stratified = value.get<bool>();
      else if (key == "depth") s.model.depth = value.get<std::int64_t>();
      else if (key == "base_width") s.model.base_width = value.get<std::int64_t>();
      else if (key == "reduction_ratio") s.model.reduction_ratio = value.get<std::int64_t>();
      else if (key == "variant") s.model.variant = parse_variant(value.get<std::string>());
      else if (key == "height") s.model.height = value.get<std::int64_t>();
      else if (key == "width") s.model.width = value.get<std::int64_t>();
      else if (key == "skip_normal") s.skip_normal = value.get<bool>();
      else throw UsageError("config file " + path.string() + ": unknown key '" + key + "'");
    } catch (const json::exception& e) {
      throw UsageError("config file " + path.string() + ": key '" + key + "': " + e.what());
    } catch (const std::invalid_argument& e) {
      throw UsageError("config file " + path.string() + ": key '" + key + "': " + e.what());
    }
  }
}

/// Command-line overrides. Only options the user actually passed apply.
struct SettingFlags {
  std::string config;
  double lr = 0;
  std::int64_t epochs = 0, batch = 0, folds = 0, depth = 0, base_width = 0, height = 0, width = 0;
  std::uint64_t seed = 0;
  std::string variant, loss_reduction;
  bool stratified = false, skip_normal = false;
  std::map<std::string, CLI::Option*> opts;

  void attach(CLI::App* app, bool with_folds) {
    app->add_option("--config", config, "Flat JSON settings file")->check(CLI::ExistingFile);
    opts["seed"] = app->add_option("--seed", seed, "Seed for initialisation, shuffling and folds");
    opts["variant"] = app->add_option("--variant", variant,
                                      "full, channel_only, spatial_only, small_receptive_field or plain_conv");
    opts["lr"] = app->add_option("--lr", lr, "Adam learning rate");
    opts["epochs"] = app->add_option("--epochs", epochs, "Training epochs");
    opts["batch"] = app->add_option("--batch-size", batch, "Mini-batch size");
    opts["depth"] = app->add_option("--depth", depth, "Encoder stages");
    opts["base_width"] = app->add_option("--base-width", base_width, "Channels of the first stage");
    opts["height"] = app->add_option("--height", height, "Working image height");
    opts["width"] = app->add_option("--width", width, "Working image width");
    opts["loss_reduction"] = app->add_option("--loss-reduction", loss_reduction, "mean or sum");
    opts["skip_normal"] = app->add_flag("--skip-normal", skip_normal, "Drop lesion-free records");
    if (with_folds) {
      opts["folds"] = app->add_option("--folds", folds, "Cross-validation folds");
      opts["stratified"] = app->add_flag("--stratified", stratified, "Split folds per label class");
    }
  }

  bool given(const std::string& key) const {
    const auto it = opts.find(key);
    return it != opts.end() && it->second->count() > 0;
  }

  Settings resolve() const {
    Settings s;
    if (!config.empty()) apply_config_file(s, config);
    try {
      if (given("seed")) s.train.seed = seed;
      if (given("variant")) s.model.variant = parse_variant(variant);
      if (given("lr")) s.train.learning_rate = lr;
      if (given("epochs")) s.train.epochs = epochs;
      if (given("batch")) s.train.batch_size = batch;
      if (given("depth")) s.model.depth = depth;
      if (given("base_width")) s.model.base_width = base_width;
      if (given("height")) s.model.height = height;
      if (given("width")) s.model.width = width;
      if (given("loss_reduction")) s.train.loss_reduction = parse_reduction(loss_reduction);
      if (given("skip_normal")) s.skip_normal = skip_normal;
      if (given("folds")) s.train.folds = folds;
      if (given("stratified")) s.train.stratified = stratified;
      s.model.validate();
      s.train.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return s;
  }
};

// ---- run directories ----

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Next unused <out>/run-NNN; never reuses an existing directory.
fs::path new_run_dir(const fs::path& out) {
  fs::create_directories(out);
  int last = 0;
  for (const auto& entry : fs::directory_iterator(out)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > 4 && name.starts_with("run-") &&
        std::all_of(name.begin() + 4, name.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      last = std::max(last, std::stoi(name.substr(4)));
    }
  }
  char buf[16];
  std::snprintf(buf, sizeof buf, "run-%03d", last + 1);
  const fs::path dir = out / buf;
  if (!fs::create_directory(dir)) throw std::runtime_error("run directory exists: " + dir.string());
  return dir;
}

/// Writes run.json once the command has produced its artifacts.
class RunRecord {
 public:
  RunRecord(const std::vector<std::string>& args, fs::path dir, bool deterministic)
      : args_(args), dir_(std::move(dir)), deterministic_(deterministic) {
    if (!deterministic_) started_ = utc_now();
  }
  const fs::path& dir() const { return dir_; }

  void finish(const std::string& command, const json& config, std::uint64_t seed) const {
    std::vector<std::string> outputs;
    for (const auto& entry : fs::recursive_directory_iterator(dir_)) {
      if (entry.is_regular_file()) outputs.push_back(fs::relative(entry.path(), dir_).generic_string());
    }
    std::sort(outputs.begin(), outputs.end());
    json rec;
    rec["command"] = command;
    rec["command_line"] = args_;
    rec["config"] = config;
    rec["seed"] = seed;
    rec["version"] = AAUNET_VERSION;
    rec["deterministic"] = deterministic_;
    rec["started_at"] = started_ ? json(*started_) : json(nullptr);
    rec["finished_at"] = deterministic_ ? json(nullptr) : json(utc_now());
    rec["outputs"] = outputs;
    std::ofstream f(dir_ / "run.json");
    f << rec.dump(2) << "\n";
    if (!f) throw std::runtime_error("cannot write " + (dir_ / "run.json").string());
  }

 private:
  std::vector<std::string> args_;
  fs::path dir_;
  bool deterministic_;
  std::optional<std::string> started_;
};

void write_config_snapshot(const Settings& s, const fs::path& dir) {
  std::ofstream f(dir / "config.json");
  f << settings_json(s).dump(2) << "\n";
}

std::size_t worker_count(bool deterministic) {
  if (deterministic) return 1;
  const char* env = std::getenv(kThreadsEnv);
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) {
    throw UsageError(std::string(kThreadsEnv) + " must be a positive integer, got '" + env + "'");
  }
  return static_cast<std::size_t>(n);
}

std::vector<Sample> load_dataset(const std::string& manifest, const Settings& s) {
  ManifestOptions mo;
  mo.skip_normal = s.skip_normal;
  return load_samples(load_manifest(manifest, mo), s.model.height, s.model.width);
}

void print_aggregate(const CrossValResult& r, std::ostream& out) {
  out << std::left << std::setw(12) << "metric" << "(MEAN ± STD)\n";
  for (std::size_t k = 0; k < 5; ++k) {
    out << std::setw(12) << SegmentationScores::kNames[k] << format_mean_std(r.aggregate[k]) << "\n";
  }
  out << std::setw(12) << "AUC" << format_mean_std(r.auc, 4) << "\n" << std::right;
}

// ---- subcommands ----

struct Context {
  const std::vector<std::string>& args;
  std::ostream& out;
};

struct TrainArgs {
  SettingFlags flags;
  std::string manifest, val_manifest, out = "runs";
  bool deterministic = false, print_config = false, quiet = false;
};

int cmd_train(const Context& ctx, const TrainArgs& a) {
  const Settings s = a.flags.resolve();
  if (a.print_config) {
    print_settings(s, ctx.out);
    return kExitOk;
  }
  if (a.manifest.empty()) throw UsageError("train: --manifest is required");
  const auto train_set = load_dataset(a.manifest, s);
  std::vector<Sample> val_set;
  if (!a.val_manifest.empty()) val_set = load_dataset(a.val_manifest, s);

  const RunRecord rec(ctx.args, new_run_dir(a.out), a.deterministic);
  write_config_snapshot(s, rec.dir());
  AauNet<float> model(s.model, s.train.seed);
  TrainHooks hooks;
  hooks.out_dir = rec.dir();
  hooks.deterministic = a.deterministic;
  hooks.on_epoch = [&](const EpochRecord& r) {
    if (!a.quiet) {
      ctx.out << "epoch " << r.epoch << "/" << s.train.epochs << " loss " << fmt_number(r.train_loss)
              << " val_dice " << fmt_number(r.val_dice) << "\n";
    }
    return true;
  };
  const auto result = train(model, std::span<const Sample>(train_set),
                            std::span<const Sample>(val_set), s.train, hooks);
  rec.finish("train", settings_json(s), s.train.seed);
  ctx.out << "best val_dice " << fmt_number(result.best_val_dice) << " at epoch "
          << result.best_epoch << "\n"
          << "run directory " << rec.dir().string() << "\n";
  return kExitOk;
}

struct CrossValArgs {
  SettingFlags flags;
  std::string manifest, out = "runs", compare_variant;
  bool deterministic = false, quiet = false;
};

CrossValOptions crossval_options(const std::optional<fs::path>& dir, bool deterministic, bool quiet,
                                 std::ostream& out, std::mutex& mu, const std::string& tag) {
  CrossValOptions opt;
  opt.out_dir = dir;
  opt.deterministic = deterministic;
  opt.workers = worker_count(deterministic);
  if (!quiet) {
    opt.on_epoch = [&out, &mu, tag](std::int64_t fold, const EpochRecord& r) {
      const std::lock_guard lock(mu);
      out << tag << " fold " << fold + 1 << " epoch " << r.epoch << " loss "
          << fmt_number(r.train_loss) << " val_dice " << fmt_number(r.val_dice) << "\n";
      return true;
    };
  }
  return opt;
}

int cmd_crossval(const Context& ctx, const CrossValArgs& a) {
  const Settings s = a.flags.resolve();
  worker_count(a.deterministic);  // reject a bad environment before any output exists
  std::optional<Variant> other;
  if (!a.compare_variant.empty()) {
    try {
      other = parse_variant(a.compare_variant);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  const auto data = load_dataset(a.manifest, s);
  const RunRecord rec(ctx.args, new_run_dir(a.out), a.deterministic);
  write_config_snapshot(s, rec.dir());
  std::mutex mu;

  const std::string tag(variant_name(s.model.variant));
  const auto result = cross_validate(
      data, s.model, s.train, crossval_options(rec.dir(), a.deterministic, a.quiet, ctx.out, mu, tag));
  ctx.out << variant_title(s.model.variant) << " (" << s.train.folds << " folds)\n";
  print_aggregate(result, ctx.out);

  if (other) {
    ModelConfig cfg_b = s.model;
    cfg_b.variant = *other;
    const fs::path dir_b = rec.dir() / ("compare_" + std::string(variant_name(*other)));
    const auto result_b = cross_validate(
        data, cfg_b, s.train,
        crossval_options(dir_b, a.deterministic, a.quiet, ctx.out, mu, std::string(variant_name(*other))));
    ctx.out << variant_title(*other) << " (" << s.train.folds << " folds)\n";
    print_aggregate(result_b, ctx.out);

    std::ofstream csv(rec.dir() / "ttest.csv");
    csv << "# paired two-sided t-test on fold means, " << variant_name(s.model.variant) << " minus "
        << variant_name(*other) << "\n"
        << "metric,mean_a,mean_b,t,df,p,significant\n";
    ctx.out << "paired t-test (" << variant_name(s.model.variant) << " vs " << variant_name(*other)
            << ")\n";
    for (std::size_t k = 0; k < 5; ++k) {
      csv << SegmentationScores::kNames[k] << "," << fmt_number(result.aggregate[k].mean) << ","
          << fmt_number(result_b.aggregate[k].mean) << ",";
      try {
        const auto t = paired_t_test(result.fold_means[k], result_b.fold_means[k]);
        csv << fmt_number(t.t) << "," << t.df << "," << fmt_number(t.p) << ","
            << (t.p < 0.05 ? "yes" : "no") << "\n";
        ctx.out << "  " << SegmentationScores::kNames[k] << " t " << fmt_number(t.t) << " p "
                << fmt_number(t.p) << (t.p < 0.05 ? " *" : "") << "\n";
      } catch (const std::exception& e) {
        // Identical fold vectors leave the statistic undefined.
        csv << ",,,undefined\n";
        ctx.out << "  " << SegmentationScores::kNames[k] << " undefined: " << e.what() << "\n";
      }
    }
  }
  rec.finish("crossval", settings_json(s), s.train.seed);
  ctx.out << "run directory " << rec.dir().string() << "\n";
  return kExitOk;
}

struct AblateArgs {
  SettingFlags flags;
  std::string manifest, out = "runs";
  bool deterministic = false, quiet = false;
};

int cmd_ablate(const Context& ctx, const AblateArgs& a) {
  const Settings s = a.flags.resolve();
  worker_count(a.deterministic);
  const auto data = load_dataset(a.manifest, s);
  const RunRecord rec(ctx.args, new_run_dir(a.out), a.deterministic);
  write_config_snapshot(s, rec.dir());
  std::mutex mu;

  std::vector<std::pair<Variant, CrossValResult>> rows;
  for (Variant v : kAllVariants) {
    ModelConfig cfg = s.model;
    cfg.variant = v;
    const std::string name(variant_name(v));
    rows.emplace_back(v, cross_validate(data, cfg, s.train,
                                        crossval_options(rec.dir() / name, a.deterministic,
                                                         a.quiet, ctx.out, mu, name)));
  }
  for (const auto& [v, r] : rows) {
    if (r.split_checksum != rows.front().second.split_checksum) {
      throw TrainError("ablate: fold splits differ between variants");
    }
  }

  std::ofstream csv(rec.dir() / "ablation.csv");
  std::ofstream md(rec.dir() / "ablation.md");
  std::ofstream runs(rec.dir() / "ablation_runs.csv");
  csv << "Method";
  md << "| Method |";
  for (auto name : SegmentationScores::kNames) {
    csv << "," << name;
    md << " " << name << " |";
  }
  csv << "\n";
  md << "\n|---|---|---|---|---|---|\n";
  runs << "variant,split_checksum,final_train_loss_mean,losses_finite\n";
  for (const auto& [v, r] : rows) {
    csv << variant_title(v);
    md << "| " << variant_title(v) << " |";
    for (const auto& m : r.aggregate) {
      csv << "," << format_mean_std(m);
      md << " " << format_mean_std(m) << " |";
    }
    csv << "\n";
    md << "\n";
    double loss = 0;
    bool finite = true;
    for (const auto& f : r.folds) {
      const double l = f.training.log.empty() ? 0.0 : f.training.log.back().train_loss;
      finite = finite && std::isfinite(l);
      loss += l / static_cast<double>(r.folds.size());
    }
    char sum[24];
    std::snprintf(sum, sizeof sum, "%016llx", static_cast<unsigned long long>(r.split_checksum));
    runs << variant_name(v) << "," << sum << "," << fmt_number(loss) << ","
         << (finite ? "true" : "false") << "\n";
  }
  csv.close();
  md.close();
  runs.close();
  std::ifstream table(rec.dir() / "ablation.md");
  ctx.out << table.rdbuf();
  rec.finish("ablate", settings_json(s), s.train.seed);
  ctx.out << "run directory " << rec.dir().string() << "\n";
  return kExitOk;
}

struct PredictArgs {
  std::string checkpoint, manifest, out = "runs";
  double threshold = 0.5;
  bool no_attention = false, skip_normal = false, deterministic = false;
};

Tensor<float> plane_of(const Tensor<float>& t, std::int64_t channel) {
  const auto& sh = t.shape();
  Tensor<float> p(Shape{1, 1, sh.h, sh.w});
  for (std::int64_t y = 0; y < sh.h; ++y) {
    for (std::int64_t x = 0; x < sh.w; ++x) p.at(0, 0, y, x) = t.at(0, channel, y, x);
  }
  return p;
}

int cmd_predict(const Context& ctx, const PredictArgs& a) {
  if (!(a.threshold >= 0.0 && a.threshold <= 1.0)) throw UsageError("--threshold must lie in [0,1]");
  const auto loaded = load_checkpoint<float>(a.checkpoint);
  const AauNet<float>& model = loaded.model;
  const ModelConfig& cfg = model.config();
  ManifestOptions mo;
  mo.skip_normal = a.skip_normal;
  const Manifest manifest = load_manifest(a.manifest, mo);
  const bool attention = !a.no_attention && cfg.variant != Variant::plain_conv;

  const RunRecord rec(ctx.args, new_run_dir(a.out), a.deterministic);
  for (const char* sub : {"masks", "prob", "overlay"}) fs::create_directories(rec.dir() / sub);
  for (const auto& record : manifest.records) {
    const Sample sample = load_sample(record, cfg.height, cfg.width);
    const auto prob = model.predict(sample.image);
    const std::string file = sample.id + ".png";
    write_mask(prob, a.threshold, rec.dir() / "masks" / file);
    write_probability_map(prob, rec.dir() / "prob" / file);
    write_overlay(sample.image, prob, sample.mask, rec.dir() / "overlay" / file, a.threshold);
    if (!attention) continue;

    const fs::path att = rec.dir() / "attention" / sample.id;
    fs::create_directories(att);
    std::ofstream alpha_csv;
    for (const auto& stage : model.attention_dump(sample.image)) {
      if (stage.maps.has_beta()) {
        write_probability_map(plane_of(stage.maps.beta(), 0), att / (stage.name + "_beta.png"));
      }
      if (stage.maps.has_alpha()) {
        if (!alpha_csv.is_open()) {
          alpha_csv.open(att / "alpha.csv");
          alpha_csv << "stage,channel,alpha\n";
        }
        const auto& alpha = stage.maps.alpha();
        for (std::int64_t c = 0; c < alpha.shape().c; ++c) {
          alpha_csv << stage.name << "," << c << "," << fmt_number(alpha.at(0, c, 0, 0)) << "\n";
        }
      }
    }
  }
  json config = json::parse(cfg.serialize());
  config["threshold"] = a.threshold;
  config["checkpoint"] = a.checkpoint;
  rec.finish("predict", config, loaded.state ? loaded.state->seed : 0);
  ctx.out << "predicted " << manifest.records.size() << " images\n"
          << "run directory " << rec.dir().string() << "\n";
  return kExitOk;
}

struct EvaluateArgs {
  std::string pred_dir, manifest, out = "runs";
  double threshold = 0.5;
  int thresholds = 101;
  bool pooled = false, skip_normal = false, deterministic = false;
};

/// <dir>/<id>.png, or <dir>/prob/<id>.png for a predict run directory.
fs::path prediction_path(const fs::path& dir, const std::string& id) {
  const fs::path direct = dir / (id + ".png");
  if (fs::exists(direct)) return direct;
  const fs::path nested = dir / "prob" / (id + ".png");
  if (fs::exists(nested)) return nested;
  throw DataError("no prediction for '" + id + "' in " + dir.string());
}

int cmd_evaluate(const Context& ctx, const EvaluateArgs& a) {
  if (!(a.threshold >= 0.0 && a.threshold <= 1.0)) throw UsageError("--threshold must lie in [0,1]");
  if (a.thresholds < 2) throw UsageError("--thresholds must be at least 2");
  ManifestOptions mo;
  mo.skip_normal = a.skip_normal;
  const Manifest manifest = load_manifest(a.manifest, mo);
  std::vector<std::string> ids;
  std::vector<Tensor<float>> probs, gts;
  for (const auto& record : manifest.records) {
    const GrayImage img = read_png_gray(prediction_path(a.pred_dir, record.id()));
    Tensor<float> p(Shape{1, 1, img.height, img.width});
    for (std::size_t i = 0; i < img.pixels.size(); ++i) p.data()[i] = img.pixels[i] / 255.0f;
    ids.push_back(record.id());
    gts.push_back(load_sample(record, img.height, img.width).mask);
    probs.push_back(std::move(p));
  }
  ReportOptions ro;
  ro.threshold = a.threshold;
  ro.n_thresholds = a.thresholds;
  ro.pooled = a.pooled;
  const auto report = build_report<float>(ids, probs, gts, ro);

  const RunRecord rec(ctx.args, new_run_dir(a.out), a.deterministic);
  write_metrics_csv(report, rec.dir() / "metrics.csv");
  write_curves_csv(report.curves, rec.dir() / "curves.csv");
  const json config{{"threshold", a.threshold}, {"thresholds", a.thresholds}, {"pooled", a.pooled},
                    {"pred_dir", a.pred_dir}, {"manifest", a.manifest}};
  rec.finish("evaluate", config, 0);

  ctx.out << std::left << std::setw(12) << "metric" << "(MEAN ± STD)\n";
  for (std::size_t k = 0; k < 5; ++k) {
    ctx.out << std::setw(12) << SegmentationScores::kNames[k] << format_mean_std(report.aggregate[k])
            << "\n";
  }
  ctx.out << std::setw(12) << "AUC" << std::right;
  if (std::isfinite(report.auc)) {
    ctx.out << fmt_number(report.auc) << "\n";
  } else {
    ctx.out << "undefined (single-class ground truth)\n";
  }
  ctx.out << "run directory " << rec.dir().string() << "\n";
  return kExitOk;
}

struct SynthArgs {
  SynthOptions opt;
  std::string out;
};

int cmd_synth(const Context& ctx, const SynthArgs& a) {
  if (a.opt.count < 1 || a.opt.height < 1 || a.opt.width < 1) {
    throw UsageError("synth: --count, --height and --width must be positive");
  }
  if (a.opt.min_lesions < 0 || a.opt.max_lesions < a.opt.min_lesions) {
    throw UsageError("synth: need 0 <= --min-lesions <= --max-lesions");
  }
  if (!(a.opt.difficulty >= 0.0 && a.opt.difficulty <= 1.0)) {
    throw UsageError("synth: --difficulty must lie in [0,1]");
  }
  const Manifest m = synth_dataset(a.opt, a.out);
  ctx.out << "wrote " << m.records.size() << " samples\n"
          << "manifest " << (fs::path(a.out) / "manifest.jsonl").string() << "\n";
  return kExitOk;
}

struct GradcheckArgs {
  std::uint64_t seed = 2024;
  bool skip_model = false;
};

int cmd_gradcheck(const Context& ctx, const GradcheckArgs& a) {
  const auto report = run_gradient_suite(a.seed, !a.skip_model);
  for (const auto& c : report.cases) {
    char line[160];
    std::snprintf(line, sizeof line, "%-4s %-40s max_rel %.3e tol %.0e (%lld elements)\n",
                  c.passed ? "ok" : "FAIL", c.name.c_str(), c.max_rel_error, c.tolerance,
                  static_cast<long long>(c.elements_checked));
    ctx.out << line;
  }
  const auto failed = std::count_if(report.cases.begin(), report.cases.end(),
                                    [](const GradCheckCase& c) { return !c.passed; });
  ctx.out << report.cases.size() - failed << "/" << report.cases.size() << " cases passed in "
          << fmt_number(report.seconds) << " s\n";
  return report.all_passed() ? kExitOk : kExitFailure;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Breast-ultrasound lesion segmentation with adaptive attention U-nets", "aaunet"};
  app.footer(kPrecedence);
  app.set_version_flag("--version", AAUNET_VERSION);
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train one model and write checkpoints");
  train_args.flags.attach(train, false);
  train->add_option("--manifest", train_args.manifest, "Training manifest (JSON Lines)");
  train->add_option("--val-manifest", train_args.val_manifest,
                    "Validation manifest; defaults to the training set");
  train->add_option("--out", train_args.out, "Parent of the run directory")->capture_default_str();
  train->add_flag("--deterministic", train_args.deterministic, "Byte-reproducible artifacts");
  train->add_flag("--print-config", train_args.print_config, "Print resolved settings and exit");
  train->add_flag("--quiet", train_args.quiet, "No per-epoch progress");

  CrossValArgs cv_args;
  auto* cv = app.add_subcommand("crossval", "k-fold cross-validation with per-fold reports");
  cv_args.flags.attach(cv, true);
  cv->add_option("--manifest", cv_args.manifest, "Dataset manifest")->required();
  cv->add_option("--out", cv_args.out, "Parent of the run directory")->capture_default_str();
  cv->add_option("--compare-variant", cv_args.compare_variant,
                 "Second variant for a paired t-test on fold means");
  cv->add_flag("--deterministic", cv_args.deterministic, "Single worker, reproducible artifacts");
  cv->add_flag("--quiet", cv_args.quiet, "No per-epoch progress");

  AblateArgs ab_args;
  auto* ab = app.add_subcommand("ablate", "Cross-validate all five block variants on one split");
  ab_args.flags.attach(ab, true);
  ab->add_option("--manifest", ab_args.manifest, "Dataset manifest")->required();
  ab->add_option("--out", ab_args.out, "Parent of the run directory")->capture_default_str();
  ab->add_flag("--deterministic", ab_args.deterministic, "Single worker, reproducible artifacts");
  ab->add_flag("--quiet", ab_args.quiet, "No per-epoch progress");

  PredictArgs pr_args;
  auto* pr = app.add_subcommand("predict", "Masks, probability maps, overlays and attention maps");
  pr->add_option("--checkpoint", pr_args.checkpoint, "Model checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  pr->add_option("--manifest", pr_args.manifest, "Images to segment")->required();
  pr->add_option("--out", pr_args.out, "Parent of the run directory")->capture_default_str();
  pr->add_option("--threshold", pr_args.threshold, "Mask threshold")->capture_default_str();
  pr->add_flag("--no-attention", pr_args.no_attention, "Skip attention map export");
  pr->add_flag("--skip-normal", pr_args.skip_normal, "Drop lesion-free records");
  pr->add_flag("--deterministic", pr_args.deterministic, "Omit timestamps from the run record");

  EvaluateArgs ev_args;
  auto* ev = app.add_subcommand("evaluate", "Score probability PNGs against ground-truth masks");
  ev->add_option("--pred-dir", ev_args.pred_dir, "Directory of <id>.png probability maps")
      ->required()
      ->check(CLI::ExistingDirectory);
  ev->add_option("--manifest", ev_args.manifest, "Ground-truth manifest")->required();
  ev->add_option("--out", ev_args.out, "Parent of the run directory")->capture_default_str();
  ev->add_option("--threshold", ev_args.threshold, "Mask threshold")->capture_default_str();
  ev->add_option("--thresholds", ev_args.thresholds, "Curve sweep size")->capture_default_str();
  ev->add_flag("--pooled", ev_args.pooled, "Aggregate pooled pixel counts");
  ev->add_flag("--skip-normal", ev_args.skip_normal, "Drop lesion-free records");
  ev->add_flag("--deterministic", ev_args.deterministic, "Omit timestamps from the run record");

  SynthArgs sy_args;
  auto* sy = app.add_subcommand("synth", "Write a synthetic ultrasound-like dataset");
  sy->add_option("--out", sy_args.out, "Dataset directory")->required();
  sy->add_option("--count", sy_args.opt.count, "Images")->capture_default_str();
  sy->add_option("--height", sy_args.opt.height, "Image height")->capture_default_str();
  sy->add_option("--width", sy_args.opt.width, "Image width")->capture_default_str();
  sy->add_option("--seed", sy_args.opt.seed, "Generator seed")->capture_default_str();
  sy->add_option("--difficulty", sy_args.opt.difficulty, "0 crisp to 1 blurred and noisy")
      ->capture_default_str();
  sy->add_option("--min-lesions", sy_args.opt.min_lesions, "Fewest lesions per image")
      ->capture_default_str();
  sy->add_option("--max-lesions", sy_args.opt.max_lesions, "Most lesions per image")
      ->capture_default_str();

  GradcheckArgs gc_args;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every gradient");
  gc->add_option("--seed", gc_args.seed, "Input seed")->capture_default_str();
  gc->add_flag("--skip-model", gc_args.skip_model, "Skip the end-to-end network case");

  // CLI11 wants a C-style argv.
  std::vector<const char*> argv{"aaunet"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << AAUNET_VERSION << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\nrun 'aaunet --help' for usage\n";
    return kExitUsage;
  }

  const Context ctx{args, out};
  if (train->parsed()) return cmd_train(ctx, train_args);
  if (cv->parsed()) return cmd_crossval(ctx, cv_args);
  if (ab->parsed()) return cmd_ablate(ctx, ab_args);
  if (pr->parsed()) return cmd_predict(ctx, pr_args);
  if (ev->parsed()) return cmd_evaluate(ctx, ev_args);
  if (sy->parsed()) return cmd_synth(ctx, sy_args);
  return cmd_gradcheck(ctx, gc_args);
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << one_line(e.what()) << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return kExitFailure;
  }
}

}  // namespace aaunet::cli
