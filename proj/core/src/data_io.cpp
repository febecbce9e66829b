#include "aaunet/data_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

namespace aaunet {

namespace fs = std::filesystem;

std::string_view label_name(Label l) {
  switch (l) {
    case Label::benign: return "benign";
    case Label::malignant: return "malignant";
    case Label::normal: return "normal";
    case Label::unknown: return "unknown";
  }
  return "unknown";
}

Label parse_label(std::string_view name) {
  for (Label l : {Label::benign, Label::malignant, Label::normal, Label::unknown}) {
    if (label_name(l) == name) return l;
  }
  throw DataError("unknown label '" + std::string(name) +
                  "' (expected benign, malignant, normal or unknown)");
}

Manifest load_manifest(const fs::path& path, const ManifestOptions& opt) {
  std::ifstream in(path);
  if (!in) throw DataError("manifest not found: " + path.string());
  const fs::path base = path.parent_path();
  Manifest m;
  std::string line;
  std::int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    ManifestRecord rec;
    try {
      const auto j = nlohmann::json::parse(line);
      if (!j.is_object()) throw DataError("record is not an object");
      if (!j.contains("image")) throw DataError("missing field 'image'");
      if (!j.contains("mask")) throw DataError("missing field 'mask'");
      rec.image_path = j.at("image").get<std::string>();
      rec.mask_path = j.at("mask").get<std::string>();
      if (j.contains("label")) rec.label = parse_label(j.at("label").get<std::string>());
      if (j.contains("fold") && !j.at("fold").is_null()) rec.fold = j.at("fold").get<std::int64_t>();
    } catch (const std::exception& e) {
      throw DataError("manifest parse error at " + where + ": " + e.what());
    }
    if (rec.image_path.is_relative()) rec.image_path = base / rec.image_path;
    if (rec.mask_path.is_relative()) rec.mask_path = base / rec.mask_path;
    if (opt.skip_normal && rec.label == Label::normal) continue;
    if (opt.validate_files) {
      for (const auto& p : {rec.image_path, rec.mask_path}) {
        try {
          read_png_gray(p);
        } catch (const DataError& e) {
          throw DataError("manifest " + where + ": " + e.what());
        }
      }
    }
    m.records.push_back(std::move(rec));
  }
  return m;
}

void write_manifest(const Manifest& manifest, const fs::path& path) {
  const fs::path base = path.parent_path();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest " + path.string());
  auto rel = [&](const fs::path& p) {
    if (base.empty()) return p.generic_string();
    const fs::path r = p.lexically_relative(base);
    return (r.empty() ? p : r).generic_string();
  };
  for (const auto& r : manifest.records) {
    nlohmann::ordered_json j;
    j["image"] = rel(r.image_path);
    j["mask"] = rel(r.mask_path);
    j["label"] = std::string(label_name(r.label));
    if (r.fold) j["fold"] = *r.fold;
    out << j.dump() << "\n";
  }
}

GrayImage read_png_gray(const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw DataError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  if (image.width == 0 || image.height == 0) {
    png_image_free(&image);
    throw DataError("zero-area image: " + path.string());
  }
  const bool gray_source = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
  image.format = gray_source ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw DataError("cannot decode PNG " + path.string() + ": " + msg);
  }
  GrayImage g;
  g.height = image.height;
  g.width = image.width;
  if (gray_source) {
    g.pixels = std::move(buf);
  } else {
    g.pixels.resize(static_cast<std::size_t>(g.height * g.width));
    for (std::size_t i = 0; i < g.pixels.size(); ++i) {
      g.pixels[i] = luminance(buf[3 * i], buf[3 * i + 1], buf[3 * i + 2]);
    }
  }
  return g;
}

namespace {

void write_png(const std::uint8_t* pixels, std::int64_t h, std::int64_t w, bool rgb,
               const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = rgb ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, pixels, 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw DataError("cannot write PNG " + path.string() + ": " + msg);
  }
}

}  // namespace

void write_png_gray(const GrayImage& img, const fs::path& path) {
  write_png(img.pixels.data(), img.height, img.width, false, path);
}

void write_png_rgb(const RgbImage& img, const fs::path& path) {
  write_png(img.pixels.data(), img.height, img.width, true, path);
}

std::vector<float> resize_bilinear(std::span<const float> src, std::int64_t h, std::int64_t w,
                                   std::int64_t out_h, std::int64_t out_w) {
  std::vector<float> out(static_cast<std::size_t>(out_h * out_w));
  const double sy = static_cast<double>(h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(w) / static_cast<double>(out_w);
  for (std::int64_t y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const std::int64_t y0 = static_cast<std::int64_t>(fy);
    const std::int64_t y1 = std::min(y0 + 1, h - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::int64_t x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const std::int64_t x0 = static_cast<std::int64_t>(fx);
      const std::int64_t x1 = std::min(x0 + 1, w - 1);
      const double tx = fx - static_cast<double>(x0);
      const auto at = [&](std::int64_t yy, std::int64_t xx) {
        return static_cast<double>(src[static_cast<std::size_t>(yy * w + xx)]);
      };
      const double top = at(y0, x0) + (at(y0, x1) - at(y0, x0)) * tx;
      const double bot = at(y1, x0) + (at(y1, x1) - at(y1, x0)) * tx;
      out[static_cast<std::size_t>(y * out_w + x)] = static_cast<float>(top + (bot - top) * ty);
    }
  }
  return out;
}

std::vector<std::uint8_t> resize_nearest(std::span<const std::uint8_t> src, std::int64_t h,
                                         std::int64_t w, std::int64_t out_h, std::int64_t out_w) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(out_h * out_w));
  for (std::int64_t y = 0; y < out_h; ++y) {
    const std::int64_t sy = std::min(h - 1, (2 * y + 1) * h / (2 * out_h));
    for (std::int64_t x = 0; x < out_w; ++x) {
      const std::int64_t sx = std::min(w - 1, (2 * x + 1) * w / (2 * out_w));
      out[static_cast<std::size_t>(y * out_w + x)] = src[static_cast<std::size_t>(sy * w + sx)];
    }
  }
  return out;
}

Sample load_sample(const ManifestRecord& record, std::int64_t height, std::int64_t width) {
  const GrayImage img = read_png_gray(record.image_path);
  const GrayImage mask = read_png_gray(record.mask_path);
  std::vector<float> plane(img.pixels.begin(), img.pixels.end());
  std::vector<float> resized = resize_bilinear(plane, img.height, img.width, height, width);
  for (auto& v : resized) v = std::clamp(v / 255.0f, 0.0f, 1.0f);
  const auto mres = resize_nearest(mask.pixels, mask.height, mask.width, height, width);
  std::vector<float> mvals(mres.size());
  for (std::size_t i = 0; i < mres.size(); ++i) mvals[i] = mres[i] > 127 ? 1.0f : 0.0f;
  Sample s;
  s.id = record.id();
  s.image = Tensor<float>(Shape{1, 1, height, width}, std::move(resized));
  s.mask = Tensor<float>(Shape{1, 1, height, width}, std::move(mvals));
  s.label = record.label;
  return s;
}

std::vector<Sample> load_samples(const Manifest& manifest, std::int64_t height,
                                 std::int64_t width) {
  std::vector<Sample> out;
  out.reserve(manifest.records.size());
  for (const auto& r : manifest.records) out.push_back(load_sample(r, height, width));
  return out;
}

std::vector<std::uint8_t> mask_boundary(std::span<const std::uint8_t> mask, std::int64_t h,
                                        std::int64_t w) {
  std::vector<std::uint8_t> out(mask.size(), 0);
  const auto inside = [&](std::int64_t y, std::int64_t x) {
    return y >= 0 && y < h && x >= 0 && x < w && mask[static_cast<std::size_t>(y * w + x)] != 0;
  };
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      if (!inside(y, x)) continue;
      if (!inside(y - 1, x) || !inside(y + 1, x) || !inside(y, x - 1) || !inside(y, x + 1)) {
        out[static_cast<std::size_t>(y * w + x)] = 1;
      }
    }
  }
  return out;
}

namespace {

template <typename T>
void require_single_plane(const Tensor<T>& t, const char* what) {
  if (t.shape().n != 1 || t.shape().c != 1) {
    throw DataError(std::string(what) + ": expected a (1,1,H,W) tensor, got " +
                    to_string(t.shape()));
  }
}

template <typename T>
std::vector<std::uint8_t> binarize(const Tensor<T>& t, double threshold) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(t.numel()));
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    out[static_cast<std::size_t>(i)] = static_cast<double>(t[i]) >= threshold ? 1 : 0;
  }
  return out;
}

}  // namespace

template <typename T>
void write_mask(const Tensor<T>& pred, double threshold, const fs::path& path) {
  require_single_plane(pred, "write_mask");
  GrayImage g{pred.shape().h, pred.shape().w, binarize(pred, threshold)};
  for (auto& v : g.pixels) v = v ? 255 : 0;
  write_png_gray(g, path);
}

template <typename T>
void write_probability_map(const Tensor<T>& pred, const fs::path& path) {
  require_single_plane(pred, "write_probability_map");
  GrayImage g{pred.shape().h, pred.shape().w, {}};
  g.pixels.resize(static_cast<std::size_t>(pred.numel()));
  for (std::int64_t i = 0; i < pred.numel(); ++i) {
    const double v = std::clamp(static_cast<double>(pred[i]), 0.0, 1.0);
    g.pixels[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  write_png_gray(g, path);
}

template <typename T>
void write_overlay(const Tensor<T>& image, const Tensor<T>& pred, const Tensor<T>& gt,
                   const fs::path& path, double threshold) {
  require_single_plane(image, "write_overlay");
  if (pred.shape() != image.shape() || gt.shape() != image.shape()) {
    throw DataError("write_overlay: image, prediction and ground truth shapes differ");
  }
  const std::int64_t h = image.shape().h;
  const std::int64_t w = image.shape().w;
  const auto pred_edge = mask_boundary(binarize(pred, threshold), h, w);
  const auto gt_edge = mask_boundary(binarize(gt, 0.5), h, w);
  RgbImage out{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(3 * h * w))};
  for (std::int64_t i = 0; i < h * w; ++i) {
    const double v = std::clamp(static_cast<double>(image[i]), 0.0, 1.0);
    std::uint8_t rgb[3];
    const auto g = static_cast<std::uint8_t>(std::lround(v * 255.0));
    rgb[0] = rgb[1] = rgb[2] = g;
    if (pred_edge[static_cast<std::size_t>(i)]) {
      rgb[0] = 255;
      rgb[1] = 255;
      rgb[2] = 0;
    }
    if (gt_edge[static_cast<std::size_t>(i)]) {
      rgb[0] = 255;
      rgb[1] = 0;
      rgb[2] = 0;
    }
    std::copy(rgb, rgb + 3, out.pixels.begin() + 3 * i);
  }
  write_png_rgb(out, path);
}

template void write_mask(const Tensor<float>&, double, const fs::path&);
template void write_mask(const Tensor<double>&, double, const fs::path&);
template void write_probability_map(const Tensor<float>&, const fs::path&);
template void write_probability_map(const Tensor<double>&, const fs::path&);
template void write_overlay(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                            const fs::path&, double);
template void write_overlay(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                            const fs::path&, double);

}  // namespace aaunet
