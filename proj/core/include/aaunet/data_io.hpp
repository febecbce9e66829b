#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "aaunet/tensor.hpp"

namespace aaunet {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Lesion class of a record. `normal` images carry no lesion.
enum class Label { benign, malignant, normal, unknown };

std::string_view label_name(Label l);
/// Throws DataError for names outside the closed set.
Label parse_label(std::string_view name);

struct ManifestRecord {
  std::filesystem::path image_path;
  std::filesystem::path mask_path;
  Label label = Label::unknown;
  std::optional<std::int64_t> fold;

  /// File stem of the image, used as the sample id.
  std::string id() const { return image_path.stem().string(); }
};

/// One JSON object per line:
///   {"image": "img/0001.png", "mask": "mask/0001.png", "label": "benign", "fold": 0}
/// `label` and `fold` are optional. Blank lines and lines starting with '#'
/// are ignored. Relative paths resolve against the manifest's directory.
struct Manifest {
  std::vector<ManifestRecord> records;
};

struct ManifestOptions {
  /// Drop `normal` records (lesion-free images).
  bool skip_normal = false;
  /// Check that every image and mask decodes.
  bool validate_files = true;
};

Manifest load_manifest(const std::filesystem::path& path, const ManifestOptions& opt = {});
/// Paths are written relative to the manifest directory when possible.
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

struct GrayImage {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<std::uint8_t> pixels;
};

struct RgbImage {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<std::uint8_t> pixels;  // interleaved RGB
};

/// Rec. 601 luma with integer rounding; gray input maps to itself.
inline std::uint8_t luminance(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  return static_cast<std::uint8_t>((299u * r + 587u * g + 114u * b + 500u) / 1000u);
}

/// Decodes any PNG to 8-bit gray. Colour input goes through `luminance`.
GrayImage read_png_gray(const std::filesystem::path& path);
void write_png_gray(const GrayImage& img, const std::filesystem::path& path);
void write_png_rgb(const RgbImage& img, const std::filesystem::path& path);

/// Half-pixel-centre bilinear resampling of a float plane.
std::vector<float> resize_bilinear(std::span<const float> src, std::int64_t h, std::int64_t w,
                                   std::int64_t out_h, std::int64_t out_w);
/// Nearest-neighbour resampling; identity when the size is unchanged.
std::vector<std::uint8_t> resize_nearest(std::span<const std::uint8_t> src, std::int64_t h,
                                         std::int64_t w, std::int64_t out_h, std::int64_t out_w);

/// Model-ready pair. image is (1,1,H,W) in [0,1]; mask is (1,1,H,W) in {0,1}.
struct Sample {
  std::string id;
  Tensor<float> image;
  Tensor<float> mask;
  Label label = Label::unknown;
};

/// Luminance, bilinear image resize, nearest mask resize, image / 255,
/// mask > 127.
Sample load_sample(const ManifestRecord& record, std::int64_t height, std::int64_t width);
std::vector<Sample> load_samples(const Manifest& manifest, std::int64_t height,
                                 std::int64_t width);

/// Mask pixels with at least one 4-neighbour outside the mask (the image
/// border counts as outside).
std::vector<std::uint8_t> mask_boundary(std::span<const std::uint8_t> mask, std::int64_t h,
                                        std::int64_t w);

/// Writes {0,255} where pred >= threshold. `pred` is (1,1,H,W).
template <typename T>
void write_mask(const Tensor<T>& pred, double threshold, const std::filesystem::path& path);

/// Writes round(255 * p) per pixel.
template <typename T>
void write_probability_map(const Tensor<T>& pred, const std::filesystem::path& path);

/// Gray image with the ground-truth boundary in red and the boundary of
/// pred >= threshold in yellow.
template <typename T>
void write_overlay(const Tensor<T>& image, const Tensor<T>& pred, const Tensor<T>& gt,
                   const std::filesystem::path& path, double threshold = 0.5);

}  // namespace aaunet
