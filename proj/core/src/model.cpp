#include "aaunet/model.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>

namespace aaunet {

void ModelConfig::validate() const {
  if (depth < 1) throw std::invalid_argument("ModelConfig: depth must be >= 1");
  if (base_width < 1) throw std::invalid_argument("ModelConfig: base_width must be >= 1");
  if (in_channels < 1) throw std::invalid_argument("ModelConfig: in_channels must be >= 1");
  if (reduction_ratio < 1) throw std::invalid_argument("ModelConfig: reduction_ratio must be >= 1");
  if (has_channel_attention(variant) && base_width / reduction_ratio < 1) {
    throw std::invalid_argument("ModelConfig: base_width / reduction_ratio must be >= 1");
  }
  const std::int64_t factor = std::int64_t{1} << depth;
  if (height < 1 || width < 1 || height % factor != 0 || width % factor != 0) {
    throw std::invalid_argument("ModelConfig: input size " + std::to_string(height) + "x" +
                                std::to_string(width) + " must be divisible by 2^depth = " +
                                std::to_string(factor));
  }
}

std::string ModelConfig::serialize() const {
  nlohmann::json j;
  j["depth"] = depth;
  j["base_width"] = base_width;
  j["in_channels"] = in_channels;
  j["reduction_ratio"] = reduction_ratio;
  j["variant"] = std::string(variant_name(variant));
  j["height"] = height;
  j["width"] = width;
  return j.dump();
}

ModelConfig ModelConfig::deserialize(const std::string& text) {
  ModelConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    c.depth = j.at("depth").get<std::int64_t>();
    c.base_width = j.at("base_width").get<std::int64_t>();
    c.in_channels = j.at("in_channels").get<std::int64_t>();
    c.reduction_ratio = j.at("reduction_ratio").get<std::int64_t>();
    c.variant = parse_variant(j.at("variant").get<std::string>());
    c.height = j.at("height").get<std::int64_t>();
    c.width = j.at("width").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("ModelConfig: ") + e.what());
  }
  c.validate();
  return c;
}

template <typename T>
AauNet<T>::AauNet(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  auto add_pair = [&](const std::string& stage, std::int64_t in, std::int64_t out) {
    HaamConfig hc;
    hc.out_channels = out;
    hc.reduction_ratio = cfg_.reduction_ratio;
    hc.variant = cfg_.variant;
    for (int i = 1; i <= 2; ++i) {
      hc.in_channels = i == 1 ? in : out;
      const std::string name = stage + ".haam" + std::to_string(i);
      blocks_.emplace_back(name, build_variant(hc, params_, name, rng));
    }
  };
  std::int64_t in = cfg_.in_channels;
  for (std::int64_t l = 0; l < cfg_.depth; ++l) {
    add_pair("enc" + std::to_string(l + 1), in, cfg_.stage_width(l));
    in = cfg_.stage_width(l);
  }
  add_pair("bottleneck", in, cfg_.stage_width(cfg_.depth));
  for (std::int64_t l = cfg_.depth - 1; l >= 0; --l) {
    add_pair("dec" + std::to_string(l + 1), cfg_.stage_width(l) + cfg_.stage_width(l + 1),
             cfg_.stage_width(l));
  }
  head_ = make_conv(params_, "head.conv", cfg_.base_width, 1, 1, 1, rng);
}

template <typename T>
ForwardResult<T> AauNet<T>::forward_traced(const Var<T>& x) const {
  const Shape xs = x->value.shape();
  if (xs.c != cfg_.in_channels || xs.h != cfg_.height || xs.w != cfg_.width) {
    throw ShapeError("model input " + to_string(xs) + " does not match configured (n, " +
                     std::to_string(cfg_.in_channels) + ", " + std::to_string(cfg_.height) +
                     ", " + std::to_string(cfg_.width) + ")");
  }
  ForwardResult<T> r;
  std::size_t next = 0;
  auto run_pair = [&](Var<T> h) {
    for (int i = 0; i < 2; ++i, ++next) {
      const auto& [name, block] = blocks_[next];
      auto trace = block.forward_traced(h);
      h = trace.out;
      r.blocks.push_back({name, std::move(trace)});
    }
    return h;
  };

  std::vector<Var<T>> skips;
  Var<T> h = x;
  for (std::int64_t l = 0; l < cfg_.depth; ++l) {
    h = run_pair(h);
    skips.push_back(h);
    h = max_pool_2x2(h);
  }
  h = run_pair(h);
  r.bottleneck = h;
  for (std::int64_t l = cfg_.depth - 1; l >= 0; --l) {
    h = upsample_nearest_2x(h);
    h = concat_channels(skips[static_cast<std::size_t>(l)], h);
    h = run_pair(h);
  }
  r.output = sigmoid(head_.apply(h));
  return r;
}

template <typename T>
Tensor<T> AauNet<T>::predict(const Tensor<T>& x) const {
  NoGradGuard guard;
  return forward(constant(x))->value;
}

template <typename T>
std::vector<StageAttention<T>> AauNet<T>::attention_dump(const Tensor<T>& x) const {
  if (!has_channel_attention(cfg_.variant) && !has_spatial_attention(cfg_.variant)) {
    throw std::logic_error("attention_dump: variant '" + std::string(variant_name(cfg_.variant)) +
                           "' has no attention blocks");
  }
  NoGradGuard guard;
  auto r = forward_traced(constant(x));
  std::vector<StageAttention<T>> out;
  out.reserve(r.blocks.size());
  for (const auto& b : r.blocks) out.push_back({b.name, b.trace.maps()});
  return out;
}

// ---- checkpoint I/O ----

namespace {

constexpr char kMagic[8] = {'A', 'A', 'U', 'N', 'E', 'T', '0', '1'};

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void bytes(const std::string& s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  const std::vector<char>& buffer() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> data) : data_(std::move(data)) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{u8()} << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{u8()} << (8 * i);
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(data_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  data_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) {
      throw CheckpointError(CheckpointError::Kind::truncated_payload,
                            "checkpoint: truncated payload at byte " + std::to_string(pos_));
    }
  }
  std::vector<char> data_;
  std::size_t pos_ = 0;
};

template <typename T>
void write_payload(Writer& w, const Tensor<T>& t) {
  for (const T v : t.data()) w.f32(static_cast<float>(v));
}

template <typename T>
void read_payload(Reader& r, Tensor<T>& t) {
  for (auto& v : t.data()) v = static_cast<T>(r.f32());
}

}  // namespace

template <typename T>
void save_checkpoint(const AauNet<T>& model, const std::filesystem::path& path,
                     const std::optional<TrainerState>& state) {
  Writer w;
  w.bytes(std::string(kMagic, sizeof(kMagic)));
  const std::string cfg = model.config().serialize();
  w.u32(static_cast<std::uint32_t>(cfg.size()));
  w.bytes(cfg);
  const auto& params = model.params().all();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.u32(static_cast<std::uint32_t>(p.name.size()));
    w.bytes(p.name);
    for (const auto d : p.value().shape().dims()) w.u32(static_cast<std::uint32_t>(d));
    write_payload(w, p.value());
  }
  w.u8(state ? 1 : 0);
  if (state) {
    w.u64(state->epoch);
    w.u64(state->step);
    w.u64(state->seed);
    for (const auto& p : params) {
      write_payload(w, p.adam_m);
      write_payload(w, p.adam_v);
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw CheckpointError(CheckpointError::Kind::io,
                          "checkpoint: cannot open " + path.string() + " for writing");
  }
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw CheckpointError(CheckpointError::Kind::io, "checkpoint: write failed");
}

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path,
                                    const std::optional<ModelConfig>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw CheckpointError(CheckpointError::Kind::io, "checkpoint: cannot open " + path.string());
  }
  std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < sizeof(kMagic) || !std::equal(kMagic, kMagic + sizeof(kMagic), data.begin())) {
    throw CheckpointError(CheckpointError::Kind::bad_magic,
                          "checkpoint: bad magic in " + path.string());
  }
  Reader r(std::move(data));
  r.bytes(sizeof(kMagic));
  const std::string cfg_text = r.bytes(r.u32());
  ModelConfig cfg;
  try {
    cfg = ModelConfig::deserialize(cfg_text);
  } catch (const std::exception& e) {
    throw CheckpointError(CheckpointError::Kind::malformed,
                          std::string("checkpoint: unreadable config: ") + e.what());
  }
  if (expected && !(*expected == cfg)) {
    throw CheckpointError(CheckpointError::Kind::config_mismatch,
                          "checkpoint: config mismatch: file has " + cfg_text + ", expected " +
                              expected->serialize());
  }
  LoadedCheckpoint<T> loaded{AauNet<T>(cfg, 0), std::nullopt};
  auto& params = loaded.model.params().all();
  const std::uint32_t count = r.u32();
  if (count != params.size()) {
    throw CheckpointError(CheckpointError::Kind::config_mismatch,
                          "checkpoint: " + std::to_string(count) + " entries, model has " +
                              std::to_string(params.size()));
  }
  for (auto& p : params) {
    const std::string name = r.bytes(r.u32());
    Shape s;
    s.n = r.u32();
    s.c = r.u32();
    s.h = r.u32();
    s.w = r.u32();
    if (name != p.name || s != p.value().shape()) {
      throw CheckpointError(CheckpointError::Kind::config_mismatch,
                            "checkpoint: entry '" + name + "' " + to_string(s) +
                                " does not match parameter '" + p.name + "' " +
                                to_string(p.value().shape()));
    }
    read_payload(r, p.mutable_value());
  }
  if (r.u8() != 0) {
    TrainerState st;
    st.epoch = r.u64();
    st.step = r.u64();
    st.seed = r.u64();
    for (auto& p : params) {
      read_payload(r, p.adam_m);
      read_payload(r, p.adam_v);
    }
    loaded.state = st;
  }
  if (!r.at_end()) {
    throw CheckpointError(CheckpointError::Kind::malformed, "checkpoint: trailing bytes");
  }
  return loaded;
}

template class AauNet<float>;
template class AauNet<double>;
template void save_checkpoint(const AauNet<float>&, const std::filesystem::path&,
                              const std::optional<TrainerState>&);
template void save_checkpoint(const AauNet<double>&, const std::filesystem::path&,
                              const std::optional<TrainerState>&);
template LoadedCheckpoint<float> load_checkpoint(const std::filesystem::path&,
                                                 const std::optional<ModelConfig>&);
template LoadedCheckpoint<double> load_checkpoint(const std::filesystem::path&,
                                                  const std::optional<ModelConfig>&);

}  // namespace aaunet
