#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "aaunet/haam.hpp"

namespace aaunet {

/// Encoder-decoder hyperparameters.
struct ModelConfig {
  std::int64_t depth = 4;
  std::int64_t base_width = 16;
  std::int64_t in_channels = 1;
  std::int64_t reduction_ratio = 4;
  Variant variant = Variant::full;
  std::int64_t height = 256;
  std::int64_t width = 256;

  /// Channel count of encoder level `level` (0-based); level == depth is the bottleneck.
  std::int64_t stage_width(std::int64_t level) const { return base_width << level; }
  /// Throws std::invalid_argument when an invariant is broken.
  void validate() const;
  /// Canonical single-line text (sorted-key JSON).
  std::string serialize() const;
  static ModelConfig deserialize(const std::string& text);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename T>
struct BlockTrace {
  std::string name;
  HaamTrace<T> trace;
};

template <typename T>
struct ForwardResult {
  Var<T> output;      // (n, 1, h, w) probabilities
  Var<T> bottleneck;  // deepest feature map
  std::vector<BlockTrace<T>> blocks;
};

template <typename T>
struct StageAttention {
  std::string name;
  AttentionMaps<T> maps;
};

/// The adaptive-attention U-net (or an ablation of it).
///
/// Encoder: `depth` stages of two blocks and a 2x2 max-pool. Bottleneck: two
/// blocks at base_width * 2^depth. Decoder: nearest upsampling, concatenation
/// with the skip of matching resolution (skip first) and two blocks. Head: a
/// 1x1 convolution to one channel and a sigmoid.
template <typename T>
class AauNet {
 public:
  AauNet(const ModelConfig& cfg, std::uint64_t seed);
  AauNet(AauNet&&) noexcept = default;
  AauNet& operator=(AauNet&&) noexcept = default;
  AauNet(const AauNet&) = delete;
  AauNet& operator=(const AauNet&) = delete;

  Var<T> forward(const Var<T>& x) const { return forward_traced(x).output; }
  Tensor<T> predict(const Tensor<T>& x) const;
  ForwardResult<T> forward_traced(const Var<T>& x) const;

  /// Per-block attention maps in forward order. Throws std::logic_error for
  /// plain_conv, which has none.
  std::vector<StageAttention<T>> attention_dump(const Tensor<T>& x) const;

  const ModelConfig& config() const { return cfg_; }
  ParameterStore<T>& params() { return params_; }
  const ParameterStore<T>& params() const { return params_; }
  std::size_t block_count() const { return blocks_.size(); }

 private:
  ModelConfig cfg_;
  ParameterStore<T> params_;
  std::vector<std::pair<std::string, HaamBlock<T>>> blocks_;
  ConvParams<T> head_;
};

/// Builds a model with deterministic initialisation from `seed`.
template <typename T>
AauNet<T> build_model(const ModelConfig& cfg, std::uint64_t seed) {
  return AauNet<T>(cfg, seed);
}

/// Distinct failure modes of checkpoint loading.
class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { io, bad_magic, truncated_payload, config_mismatch, malformed };
  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Optimizer bookkeeping stored next to the weights. Adam moments live in
/// each Parameter.
struct TrainerState {
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
};

/// Writes the binary checkpoint:
///   "AAUNET01" | u32 len | config text | u32 count |
///   per entry: u32 len | name | 4 x u32 dims | f32 payload |
///   u8 has_state [| u64 epoch | u64 step | u64 seed | per entry: f32 m | f32 v]
/// All integers and floats little-endian.
template <typename T>
void save_checkpoint(const AauNet<T>& model, const std::filesystem::path& path,
                     const std::optional<TrainerState>& state = std::nullopt);

template <typename T>
struct LoadedCheckpoint {
  AauNet<T> model;
  std::optional<TrainerState> state;
};

/// Reads a checkpoint. When `expected` is given, a differing stored config
/// raises CheckpointError::Kind::config_mismatch.
template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path,
                                    const std::optional<ModelConfig>& expected = std::nullopt);

extern template class AauNet<float>;
extern template class AauNet<double>;

}  // namespace aaunet
