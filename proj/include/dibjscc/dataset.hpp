#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dibjscc/errors.hpp"
#include "dibjscc/hash.hpp"
#include "dibjscc/image.hpp"
#include "dibjscc/io.hpp"
#include "dibjscc/rng.hpp"
#include "dibjscc/tensor.hpp"
#include "dibjscc/version.hpp"

namespace dibjscc {

// Single example view. Pixels are channel-major {3, H, W} in [0,1].
struct LabeledImage {
  Tensor pixels;
  int public_label = 0;
  int private_label = 0;
};

struct DatasetSpec {
  std::string name;  // "colored_mnist" or "utkface"
  int private_classes = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  double train_fraction = 0.0;
  double val_fraction = 0.0;
  double test_fraction = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (name != "colored_mnist" && name != "utkface") {
      throw config_error("dataset spec: unknown name '" + name + "'");
    }
    if (!(train_fraction > 0.0 && val_fraction > 0.0 &&
          test_fraction > 0.0)) {
      throw config_error("dataset spec: split fractions must be positive");
    }
    double sum = train_fraction + val_fraction + test_fraction;
    if (std::abs(sum - 1.0) > 1e-9) {
      throw config_error("dataset spec: split fractions sum to " +
                         std::to_string(sum) + ", expected 1");
    }
    if (height == 0 || width == 0) {
      throw config_error("dataset spec: zero image dimension");
    }
  }
};

// Column-of-structs dataset: one contiguous {N,3,H,W} tensor plus parallel
// label vectors, so batches are plain row gathers.
struct Dataset {
  std::string name;
  int public_classes = 0;
  int private_classes = 0;
  Tensor images;  // {N, 3, H, W}
  std::vector<int> public_labels;
  std::vector<int> private_labels;

  std::size_t count() const {
    return images.rank() == 4 ? images.dim(0) : 0;
  }
  std::size_t height() const { return images.dim(2); }
  std::size_t width() const { return images.dim(3); }
  std::size_t pixels_per_image() const { return 3 * height() * width(); }

  LabeledImage image(std::size_t i) const {
    if (i >= count()) throw input_error("dataset: index out of range");
    LabeledImage out;
    out.pixels = Tensor({3, height(), width()});
    std::memcpy(out.pixels.data(), images.data() + i * pixels_per_image(),
                pixels_per_image() * sizeof(double));
    out.public_label = public_labels[i];
    out.private_label = private_labels[i];
    return out;
  }

  Dataset subset(const std::vector<std::size_t>& idx) const {
    Dataset out;
    out.name = name;
    out.public_classes = public_classes;
    out.private_classes = private_classes;
    out.images = Tensor({idx.size(), 3, height(), width()});
    out.public_labels.reserve(idx.size());
    out.private_labels.reserve(idx.size());
    std::size_t stride = pixels_per_image();
    for (std::size_t k = 0; k < idx.size(); ++k) {
      std::size_t i = idx[k];
      if (i >= count()) throw input_error("dataset subset: index out of range");
      std::memcpy(out.images.data() + k * stride, images.data() + i * stride,
                  stride * sizeof(double));
      out.public_labels.push_back(public_labels[i]);
      out.private_labels.push_back(private_labels[i]);
    }
    return out;
  }

  // Gathers a batch of images {B,3,H,W} plus both label vectors.
  Tensor gather_images(const std::vector<std::size_t>& idx) const {
    Tensor out({idx.size(), 3, height(), width()});
    std::size_t stride = pixels_per_image();
    for (std::size_t k = 0; k < idx.size(); ++k) {
      std::memcpy(out.data() + k * stride, images.data() + idx[k] * stride,
                  stride * sizeof(double));
    }
    return out;
  }

  void validate() const {
    if (count() == 0) throw input_error("dataset: empty");
    if (public_labels.size() != count() || private_labels.size() != count()) {
      throw input_error("dataset: label count mismatch");
    }
    for (std::size_t i = 0; i < images.size(); ++i) {
      double v = images[i];
      if (!(v >= 0.0 && v <= 1.0)) {
        throw input_error("dataset: pixel value " + std::to_string(v) +
                          " outside [0,1]");
      }
    }
    for (std::size_t i = 0; i < count(); ++i) {
      if (private_labels[i] < 0 || private_labels[i] >= private_classes) {
        throw input_error("dataset: private label out of range");
      }
      if (public_labels[i] < 0 || public_labels[i] >= public_classes) {
        throw input_error("dataset: public label out of range");
      }
    }
  }
};

struct SplitDataset {
  Dataset train;
  Dataset val;
  Dataset test;
};

// Grayscale digit images {N,1,H,W} with digit labels, the raw material for
// colorization.
struct GrayscaleDigits {
  Tensor images;
  std::vector<int> labels;
};

using Palette = std::vector<std::array<double, 3>>;

// ---------------------------------------------------------------------------
// Digit sources

namespace detail {

// 5x7 bitmap font, one string row per scanline.
inline const std::array<std::array<const char*, 7>, 10>& digit_font() {
  static const std::array<std::array<const char*, 7>, 10> font = {{
      {"01110", "10001", "10011", "10101", "11001", "10001", "01110"},
      {"00100", "01100", "00100", "00100", "00100", "00100", "01110"},
      {"01110", "10001", "00001", "00010", "00100", "01000", "11111"},
      {"11111", "00010", "00100", "00010", "00001", "10001", "01110"},
      {"00010", "00110", "01010", "10010", "11111", "00010", "00010"},
      {"11111", "10000", "11110", "00001", "00001", "10001", "01110"},
      {"00110", "01000", "10000", "11110", "10001", "10001", "01110"},
      {"11111", "00001", "00010", "00100", "01000", "01000", "01000"},
      {"01110", "10001", "10001", "01110", "10001", "10001", "01110"},
      {"01110", "10001", "10001", "01111", "00001", "00010", "01100"},
  }};
  return font;
}

// Upscaled, box-blurred 28x28 master image per digit. Built once.
inline const std::array<std::vector<double>, 10>& digit_masters() {
  static const std::array<std::vector<double>, 10> masters = [] {
    std::array<std::vector<double>, 10> out;
    const auto& font = digit_font();
    for (int d = 0; d < 10; ++d) {
      // 5x7 cells scaled by 4 -> 20x28, centered horizontally in 28.
      std::vector<double> hard(28 * 28, 0.0);
      for (int cy = 0; cy < 7; ++cy) {
        for (int cx = 0; cx < 5; ++cx) {
          if (font[std::size_t(d)][std::size_t(cy)][cx] != '1') continue;
          for (int py = 0; py < 4; ++py) {
            for (int px = 0; px < 4; ++px) {
              int y = cy * 4 + py;
              int x = 4 + cx * 4 + px;
              hard[std::size_t(y) * 28 + std::size_t(x)] = 1.0;
            }
          }
        }
      }
      // 3x3 box blur softens the stroke edges.
      std::vector<double> soft(28 * 28, 0.0);
      for (int y = 0; y < 28; ++y) {
        for (int x = 0; x < 28; ++x) {
          double acc = 0.0;
          int cnt = 0;
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              int yy = y + dy, xx = x + dx;
              if (yy >= 0 && yy < 28 && xx >= 0 && xx < 28) {
                acc += hard[std::size_t(yy) * 28 + std::size_t(xx)];
                ++cnt;
              }
            }
          }
          soft[std::size_t(y) * 28 + std::size_t(x)] = acc / cnt;
        }
      }
      out[std::size_t(d)] = std::move(soft);
    }
    return out;
  }();
  return masters;
}

// Bilinear read with zero outside the canvas.
inline double sample_master(const std::vector<double>& m, double y, double x) {
  if (y <= -1.0 || y >= 28.0 || x <= -1.0 || x >= 28.0) return 0.0;
  int y0 = int(std::floor(y)), x0 = int(std::floor(x));
  double wy = y - y0, wx = x - x0;
  auto at = [&](int yy, int xx) -> double {
    if (yy < 0 || yy >= 28 || xx < 0 || xx >= 28) return 0.0;
    return m[std::size_t(yy) * 28 + std::size_t(xx)];
  };
  double top = (1.0 - wx) * at(y0, x0) + wx * at(y0, x0 + 1);
  double bot = (1.0 - wx) * at(y0 + 1, x0) + wx * at(y0 + 1, x0 + 1);
  return (1.0 - wy) * top + wy * bot;
}

}  // namespace detail

// Procedural handwriting stand-in: each sample is a font glyph under a
// random affine warp (rotation, scale, shear, shift) with intensity jitter.
// Deterministic given seed.
inline GrayscaleDigits synthesize_digit_glyphs(std::size_t count,
                                               std::uint64_t seed) {
  if (count == 0) throw input_error("synthesize_digit_glyphs: zero count");
  const auto& masters = detail::digit_masters();
  Rng rng(derive_seed(seed, "digit-glyphs"));

  GrayscaleDigits out;
  out.images = Tensor({count, 1, 28, 28});
  out.labels.reserve(count);
  const double cx = 13.5, cy = 13.5;
  for (std::size_t i = 0; i < count; ++i) {
    int digit = int(rng.integer(10));
    out.labels.push_back(digit);

    double rot = (rng.uniform() * 2.0 - 1.0) * 0.12;
    double scale = 0.85 + rng.uniform() * 0.25;
    double shear = (rng.uniform() * 2.0 - 1.0) * 0.08;
    double tx = (rng.uniform() * 2.0 - 1.0) * 2.0;
    double ty = (rng.uniform() * 2.0 - 1.0) * 2.0;
    double gain = 0.75 + rng.uniform() * 0.25;

    // Inverse map: output pixel -> master coordinates.
    double cosr = std::cos(rot) / scale, sinr = std::sin(rot) / scale;
    double* img = out.images.data() + i * 28 * 28;
    const auto& m = masters[std::size_t(digit)];
    for (int y = 0; y < 28; ++y) {
      for (int x = 0; x < 28; ++x) {
        double dx = x - cx - tx;
        double dy = y - cy - ty;
        double sx = cosr * dx + sinr * dy;
        double sy = -sinr * dx + cosr * dy;
        sx += shear * sy;
        double v = gain * detail::sample_master(m, sy + cy, sx + cx);
        img[std::size_t(y) * 28 + std::size_t(x)] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return out;
}

// IDX-format loader (the classic big-endian digit archive layout), for use
// when real scans are available on disk.
inline GrayscaleDigits load_idx_digits(const std::filesystem::path& images,
                                       const std::filesystem::path& labels) {
  auto ib = read_binary_file(images);
  auto lb = read_binary_file(labels);
  auto be32 = [](const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
  };
  if (ib.size() < 16 || be32(ib.data()) != 0x803) {
    throw io_error("bad IDX image magic in " + images.string());
  }
  if (lb.size() < 8 || be32(lb.data()) != 0x801) {
    throw io_error("bad IDX label magic in " + labels.string());
  }
  std::size_t n = be32(ib.data() + 4);
  std::size_t h = be32(ib.data() + 8);
  std::size_t w = be32(ib.data() + 12);
  if (be32(lb.data() + 4) != n) {
    throw io_error("IDX image/label count mismatch");
  }
  if (ib.size() < 16 + n * h * w || lb.size() < 8 + n) {
    throw io_error("truncated IDX payload");
  }
  GrayscaleDigits out;
  out.images = Tensor({n, 1, h, w});
  out.labels.reserve(n);
  for (std::size_t i = 0; i < n * h * w; ++i) {
    out.images[i] = ib[16 + i] / 255.0;
  }
  for (std::size_t i = 0; i < n; ++i) out.labels.push_back(lb[8 + i]);
  return out;
}

// ---------------------------------------------------------------------------
// Colorization

// Ten equally spaced hues. Moderate default saturation keeps enough shared
// luminance structure for reconstruction while the hues stay separable.
inline Palette make_palette(double saturation = 0.55, double value = 1.0) {
  if (!(saturation > 0.0 && saturation <= 1.0) ||
      !(value > 0.0 && value <= 1.0)) {
    throw config_error("palette: saturation/value must be in (0,1]");
  }
  Palette pal;
  for (int k = 0; k < 10; ++k) {
    double h = 36.0 * k / 60.0;  // sector coordinate in [0,6)
    int sector = int(h) % 6;
    double f = h - std::floor(h);
    double p = value * (1.0 - saturation);
    double q = value * (1.0 - saturation * f);
    double t = value * (1.0 - saturation * (1.0 - f));
    switch (sector) {
      case 0: pal.push_back({value, t, p}); break;
      case 1: pal.push_back({q, value, p}); break;
      case 2: pal.push_back({p, value, t}); break;
      case 3: pal.push_back({p, q, value}); break;
      case 4: pal.push_back({t, p, value}); break;
      default: pal.push_back({value, p, q}); break;
    }
  }
  return pal;
}

// Tints each grayscale digit with a uniformly chosen palette color:
// out[c] = gray * color[c]. Digit label is public, color index private.
inline Dataset synthesize_colored_mnist(const GrayscaleDigits& source,
                                        const Palette& palette,
                                        std::uint64_t seed) {
  if (palette.size() != 10) {
    throw config_error("colored_mnist: palette must have exactly 10 colors, got " +
                       std::to_string(palette.size()));
  }
  for (std::size_t a = 0; a < palette.size(); ++a) {
    for (std::size_t b = a + 1; b < palette.size(); ++b) {
      if (palette[a] == palette[b]) {
        throw config_error("colored_mnist: palette colors must be distinct");
      }
    }
  }
  std::size_t n = source.images.rank() == 4 ? source.images.dim(0) : 0;
  if (n == 0) throw input_error("colored_mnist: empty grayscale source");
  if (source.images.dim(1) != 1) {
    throw input_error("colored_mnist: source must be single-channel");
  }
  if (source.labels.size() != n) {
    throw input_error("colored_mnist: source label count mismatch");
  }
  for (std::size_t i = 0; i < source.images.size(); ++i) {
    double v = source.images[i];
    if (!(v >= 0.0 && v <= 1.0)) {
      throw input_error("colored_mnist: source pixel outside [0,1]");
    }
  }

  std::size_t h = source.images.dim(2), w = source.images.dim(3);
  std::size_t plane = h * w;
  Rng rng(derive_seed(seed, "colorize"));

  Dataset out;
  out.name = "colored_mnist";
  out.public_classes = 10;
  out.private_classes = 10;
  out.images = Tensor({n, 3, h, w});
  out.public_labels = source.labels;
  out.private_labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    int color = int(rng.integer(10));
    out.private_labels.push_back(color);
    const double* gray = source.images.data() + i * plane;
    double* rgb = out.images.data() + i * 3 * plane;
    for (std::size_t c = 0; c < 3; ++c) {
      double scale = palette[std::size_t(color)][c];
      for (std::size_t p = 0; p < plane; ++p) rgb[c * plane + p] = scale * gray[p];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Face corpus

// Parses "<age>_<gender>_<race>_*.jpg" annotations. Returns false on any
// malformed field instead of throwing; callers count the skips.
inline bool parse_utkface_name(const std::string& stem, int& age, int& gender,
                               int& race) {
  std::size_t p1 = stem.find('_');
  if (p1 == std::string::npos) return false;
  std::size_t p2 = stem.find('_', p1 + 1);
  if (p2 == std::string::npos) return false;
  std::size_t p3 = stem.find('_', p2 + 1);
  if (p3 == std::string::npos) return false;
  auto to_int = [](const std::string& s, int& out) {
    if (s.empty() || s.size() > 3) return false;
    for (char c : s) {
      if (c < '0' || c > '9') return false;
    }
    out = std::stoi(s);
    return true;
  };
  if (!to_int(stem.substr(0, p1), age)) return false;
  if (!to_int(stem.substr(p1 + 1, p2 - p1 - 1), gender)) return false;
  if (!to_int(stem.substr(p2 + 1, p3 - p2 - 1), race)) return false;
  return age <= 120 && gender <= 1 && race <= 4;
}

// Loads the face corpus: ethnicity is the private label (5 classes), gender
// the public one (2 classes). Files are visited in sorted order so repeat
// loads agree. Unparseable or undecodable files are skipped and counted.
inline Dataset load_utkface(const std::filesystem::path& dir,
                            std::size_t height, std::size_t width,
                            std::size_t* skipped_out = nullptr) {
  if (!std::filesystem::is_directory(dir)) {
    throw input_error("utkface: not a directory: " + dir.string());
  }
  auto lower_ext = [](const std::filesystem::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return ext;
  };
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = lower_ext(e.path());
    if (ext == ".jpg" || ext == ".jpeg" || ext == ".ppm") {
      files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());

  std::size_t skipped = 0;
  std::vector<Tensor> pixels;
  std::vector<int> gender_labels, race_labels;
  for (const auto& f : files) {
    int age = 0, gender = 0, race = 0;
    if (!parse_utkface_name(f.stem().string(), age, gender, race)) {
      ++skipped;
      continue;
    }
    try {
      RgbImage raw = lower_ext(f) == ".ppm" ? decode_ppm(f) : decode_jpeg(f);
      pixels.push_back(resize_bilinear(to_unit_tensor(raw), height, width));
      gender_labels.push_back(gender);
      race_labels.push_back(race);
    } catch (const io_error&) {
      ++skipped;
    }
  }
  if (skipped_out) *skipped_out = skipped;
  if (pixels.empty()) {
    throw input_error("utkface: no loadable images in " + dir.string());
  }

  Dataset out;
  out.name = "utkface";
  out.public_classes = 2;
  out.private_classes = 5;
  out.images = Tensor({pixels.size(), 3, height, width});
  std::size_t stride = 3 * height * width;
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    std::memcpy(out.images.data() + i * stride, pixels[i].data(),
                stride * sizeof(double));
  }
  out.public_labels = std::move(gender_labels);
  out.private_labels = std::move(race_labels);
  return out;
}

// ---------------------------------------------------------------------------
// Splits

// Disjoint exhaustive partition: train and val take their floored shares,
// test absorbs the remainder.
inline SplitDataset split_dataset(const Dataset& data,
                                  const DatasetSpec& spec) {
  spec.validate();
  std::size_t n = data.count();
  auto n_train = std::size_t(std::floor(spec.train_fraction * double(n)));
  auto n_val = std::size_t(std::floor(spec.val_fraction * double(n)));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n) {
    throw config_error("split: fractions yield an empty split for n=" +
                       std::to_string(n));
  }
  Rng rng(derive_seed(spec.seed, "split"));
  std::vector<std::size_t> order = rng.permutation(n);

  SplitDataset out;
  out.train = data.subset(
      std::vector<std::size_t>(order.begin(), order.begin() + n_train));
  out.val = data.subset(std::vector<std::size_t>(
      order.begin() + n_train, order.begin() + n_train + n_val));
  out.test = data.subset(
      std::vector<std::size_t>(order.begin() + n_train + n_val, order.end()));
  return out;
}

// ---------------------------------------------------------------------------
// On-disk cache

namespace detail {

constexpr char kDatasetMagic[8] = {'D', 'I', 'B', 'D', 'A', 'T', 'A', '1'};

inline std::vector<std::uint8_t> encode_split(const Dataset& d) {
  nlohmann::json header;
  header["count"] = d.count();
  header["channels"] = 3;
  header["height"] = d.height();
  header["width"] = d.width();
  header["name"] = d.name;
  header["public_classes"] = d.public_classes;
  header["private_classes"] = d.private_classes;
  header["endianness"] = "little";
  std::string hs = header.dump();

  std::vector<std::uint8_t> buf;
  buf.reserve(8 + 4 + hs.size() + d.images.size() * 8 + d.count() * 8);
  buf.insert(buf.end(), kDatasetMagic, kDatasetMagic + 8);
  append_u32(buf, std::uint32_t(hs.size()));
  buf.insert(buf.end(), hs.begin(), hs.end());

  auto append_raw = [&buf](const void* p, std::size_t len) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf.insert(buf.end(), b, b + len);
  };
  append_raw(d.images.data(), d.images.size() * sizeof(double));
  std::vector<std::int32_t> labels(d.public_labels.begin(),
                                   d.public_labels.end());
  append_raw(labels.data(), labels.size() * sizeof(std::int32_t));
  labels.assign(d.private_labels.begin(), d.private_labels.end());
  append_raw(labels.data(), labels.size() * sizeof(std::int32_t));
  return buf;
}

inline Dataset decode_split(const std::vector<std::uint8_t>& buf,
                            const std::string& origin) {
  if (buf.size() < 12 || std::memcmp(buf.data(), kDatasetMagic, 8) != 0) {
    throw io_error("dataset cache: bad magic in " + origin);
  }
  std::uint32_t hlen = read_u32(buf.data() + 8);
  if (buf.size() < 12 + hlen) {
    throw io_error("dataset cache: truncated header in " + origin);
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(buf.begin() + 12, buf.begin() + 12 + hlen);
  } catch (const nlohmann::json::parse_error& e) {
    throw io_error("dataset cache: malformed header in " + origin + ": " +
                   e.what());
  }

  Dataset d;
  std::size_t n = header.at("count").get<std::size_t>();
  std::size_t h = header.at("height").get<std::size_t>();
  std::size_t w = header.at("width").get<std::size_t>();
  d.name = header.at("name").get<std::string>();
  d.public_classes = header.at("public_classes").get<int>();
  d.private_classes = header.at("private_classes").get<int>();

  std::size_t pix_bytes = n * 3 * h * w * sizeof(double);
  std::size_t lab_bytes = n * sizeof(std::int32_t);
  if (buf.size() != 12 + hlen + pix_bytes + 2 * lab_bytes) {
    throw io_error("dataset cache: payload size mismatch in " + origin);
  }
  const std::uint8_t* p = buf.data() + 12 + hlen;
  d.images = Tensor({n, 3, h, w});
  std::memcpy(d.images.data(), p, pix_bytes);
  p += pix_bytes;
  std::vector<std::int32_t> labels(n);
  std::memcpy(labels.data(), p, lab_bytes);
  d.public_labels.assign(labels.begin(), labels.end());
  p += lab_bytes;
  std::memcpy(labels.data(), p, lab_bytes);
  d.private_labels.assign(labels.begin(), labels.end());
  return d;
}

}  // namespace detail

// Writes manifest.json plus one binary file per split. `extra` lands in the
// manifest under "spec" so a cache is self-describing.
inline void save_dataset_cache(const std::filesystem::path& dir,
                               const SplitDataset& splits,
                               const nlohmann::json& extra) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["tool_version"] = kVersion;
  manifest["spec"] = extra;
  const std::pair<const char*, const Dataset*> parts[] = {
      {"train", &splits.train}, {"val", &splits.val}, {"test", &splits.test}};
  for (const auto& [label, d] : parts) {
    std::vector<std::uint8_t> bytes = detail::encode_split(*d);
    std::string file = std::string(label) + ".bin";
    write_binary_file(dir / file, bytes.data(), bytes.size());
    manifest["splits"][label] = {{"file", file},
                                 {"count", d->count()},
                                 {"sha256", sha256_hex(bytes.data(), bytes.size())}};
  }
  save_json_file(dir / "manifest.json", manifest);
}

// Loads a cache directory, verifying each split's recorded checksum.
inline SplitDataset load_dataset_cache(const std::filesystem::path& dir,
                                       nlohmann::json* manifest_out = nullptr) {
  nlohmann::json manifest = load_json_file(dir / "manifest.json");
  if (manifest.value("format_version", -1) != kFormatVersion) {
    throw io_error("dataset cache: unsupported format version in " +
                   dir.string());
  }
  SplitDataset out;
  const std::pair<const char*, Dataset*> parts[] = {
      {"train", &out.train}, {"val", &out.val}, {"test", &out.test}};
  for (const auto& [label, d] : parts) {
    const auto& entry = manifest.at("splits").at(label);
    auto path = dir / entry.at("file").get<std::string>();
    std::vector<std::uint8_t> bytes = read_binary_file(path);
    std::string digest = sha256_hex(bytes.data(), bytes.size());
    if (digest != entry.at("sha256").get<std::string>()) {
      throw io_error("dataset cache: checksum mismatch for " + path.string());
    }
    *d = detail::decode_split(bytes, path.string());
  }
  if (manifest_out) *manifest_out = manifest;
  return out;
}

}  // namespace dibjscc
