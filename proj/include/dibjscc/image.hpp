#pragma once

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <jpeglib.h>

#include "dibjscc/errors.hpp"
#include "dibjscc/io.hpp"
#include "dibjscc/tensor.hpp"

namespace dibjscc {

// Interleaved 8-bit RGB raster, the exchange format between codecs and the
// [0,1] channel-major tensors used everywhere else.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;  // height * width * 3
};

namespace detail {

struct JpegErrorTrap {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
  auto* trap = reinterpret_cast<JpegErrorTrap*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, trap->message);
  std::longjmp(trap->jump, 1);
}

}  // namespace detail

// Decodes a baseline or progressive JPEG into 8-bit RGB.
inline RgbImage decode_jpeg(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes = read_binary_file(path);

  jpeg_decompress_struct cinfo;
  detail::JpegErrorTrap trap;
  cinfo.err = jpeg_std_error(&trap.mgr);
  trap.mgr.error_exit = detail::jpeg_error_exit;
  if (setjmp(trap.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw io_error("jpeg decode failed for " + path.string() + ": " +
                   trap.message);
  }

  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);

  RgbImage img;
  img.width = cinfo.output_width;
  img.height = cinfo.output_height;
  img.rgb.resize(img.width * img.height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW rowp = img.rgb.data() + std::size_t(cinfo.output_scanline) *
                                         img.width * 3;
    jpeg_read_scanlines(&cinfo, &rowp, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return img;
}

// Binary PPM (P6), maxval 255.
inline RgbImage decode_ppm(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes = read_binary_file(path);
  std::size_t pos = 0;
  auto token = [&]() -> std::string {
    while (pos < bytes.size()) {
      if (std::isspace(bytes[pos])) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) ++pos;
    return std::string(bytes.begin() + start, bytes.begin() + pos);
  };
  if (token() != "P6") throw io_error("not a P6 PPM: " + path.string());
  RgbImage img;
  img.width = std::stoul(token());
  img.height = std::stoul(token());
  if (token() != "255") {
    throw io_error("unsupported PPM maxval in " + path.string());
  }
  ++pos;  // single whitespace after maxval
  std::size_t need = img.width * img.height * 3;
  if (bytes.size() - pos < need) {
    throw io_error("truncated PPM payload in " + path.string());
  }
  img.rgb.assign(bytes.begin() + pos, bytes.begin() + pos + need);
  return img;
}

inline void write_ppm(const std::filesystem::path& path, const RgbImage& img) {
  std::string header = "P6\n" + std::to_string(img.width) + " " +
                       std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.rgb.begin(), img.rgb.end());
  write_binary_file(path, out.data(), out.size());
}

// 8-bit interleaved -> channel-major [0,1] tensor {3, H, W}.
inline Tensor to_unit_tensor(const RgbImage& img) {
  Tensor t({3, img.height, img.width});
  std::size_t plane = img.height * img.width;
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      t[c * plane + p] = img.rgb[p * 3 + c] / 255.0;
    }
  }
  return t;
}

// Channel-major [0,1] tensor {3, H, W} -> 8-bit interleaved, clamping.
inline RgbImage to_rgb8(const Tensor& t) {
  if (t.rank() != 3 || t.dim(0) != 3) {
    throw input_error("to_rgb8: expected {3,H,W}, got " + t.shape_string());
  }
  RgbImage img;
  img.height = t.dim(1);
  img.width = t.dim(2);
  img.rgb.resize(img.height * img.width * 3);
  std::size_t plane = img.height * img.width;
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      double v = std::clamp(t[c * plane + p], 0.0, 1.0);
      img.rgb[p * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
  return img;
}

// Channel mean of an RGB batch {N, 3, H, W} -> {N, 1, H, W}. Color-blind
// view used by classifiers that must judge shape regardless of palette.
inline Tensor to_luminance(const Tensor& batch) {
  if (batch.rank() != 4 || batch.dim(1) != 3) {
    throw input_error("to_luminance: expected {N,3,H,W}, got " +
                      batch.shape_string());
  }
  std::size_t n = batch.dim(0), h = batch.dim(2), w = batch.dim(3);
  std::size_t plane = h * w;
  Tensor out({n, 1, h, w});
  for (std::size_t i = 0; i < n; ++i) {
    const double* src = batch.data() + i * 3 * plane;
    double* dst = out.data() + i * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      dst[p] = (src[p] + src[plane + p] + src[2 * plane + p]) / 3.0;
    }
  }
  return out;
}

// Bilinear resample of a {C, H, W} tensor to {C, out_h, out_w} with
// edge-clamped sampling.
inline Tensor resize_bilinear(const Tensor& src, std::size_t out_h,
                              std::size_t out_w) {
  if (src.rank() != 3) {
    throw input_error("resize_bilinear: expected {C,H,W}, got " +
                      src.shape_string());
  }
  std::size_t C = src.dim(0), H = src.dim(1), W = src.dim(2);
  if (out_h == 0 || out_w == 0) {
    throw input_error("resize_bilinear: zero output size");
  }
  Tensor out({C, out_h, out_w});
  double sy = static_cast<double>(H) / static_cast<double>(out_h);
  double sx = static_cast<double>(W) / static_cast<double>(out_w);
  for (std::size_t c = 0; c < C; ++c) {
    const double* plane = src.data() + c * H * W;
    double* oplane = out.data() + c * out_h * out_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      double fy = (oy + 0.5) * sy - 0.5;
      double y0f = std::floor(fy);
      double wy = fy - y0f;
      std::ptrdiff_t y0 = std::clamp<std::ptrdiff_t>(
          static_cast<std::ptrdiff_t>(y0f), 0, std::ptrdiff_t(H) - 1);
      std::ptrdiff_t y1 = std::min<std::ptrdiff_t>(y0 + 1, std::ptrdiff_t(H) - 1);
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        double fx = (ox + 0.5) * sx - 0.5;
        double x0f = std::floor(fx);
        double wx = fx - x0f;
        std::ptrdiff_t x0 = std::clamp<std::ptrdiff_t>(
            static_cast<std::ptrdiff_t>(x0f), 0, std::ptrdiff_t(W) - 1);
        std::ptrdiff_t x1 =
            std::min<std::ptrdiff_t>(x0 + 1, std::ptrdiff_t(W) - 1);
        double top = (1.0 - wx) * plane[y0 * W + x0] + wx * plane[y0 * W + x1];
        double bot = (1.0 - wx) * plane[y1 * W + x0] + wx * plane[y1 * W + x1];
        oplane[oy * out_w + ox] = (1.0 - wy) * top + wy * bot;
      }
    }
  }
  return out;
}

// Tiles a list of {3,H,W} images into a rows x cols grid with a 2-pixel
// gutter, for visual inspection artifacts.
inline RgbImage compose_grid(const std::vector<Tensor>& images,
                             std::size_t cols) {
  if (images.empty()) throw input_error("compose_grid: no images");
  std::size_t H = images[0].dim(1), W = images[0].dim(2);
  for (const auto& t : images) {
    if (t.rank() != 3 || t.dim(0) != 3 || t.dim(1) != H || t.dim(2) != W) {
      throw input_error("compose_grid: inconsistent image shapes");
    }
  }
  const std::size_t gap = 2;
  std::size_t rows = (images.size() + cols - 1) / cols;
  RgbImage grid;
  grid.width = cols * W + (cols + 1) * gap;
  grid.height = rows * H + (rows + 1) * gap;
  grid.rgb.assign(grid.width * grid.height * 3, 32);  // dark gutter
  for (std::size_t i = 0; i < images.size(); ++i) {
    RgbImage img = to_rgb8(images[i]);
    std::size_t r = i / cols, c = i % cols;
    std::size_t oy = gap + r * (H + gap);
    std::size_t ox = gap + c * (W + gap);
    for (std::size_t y = 0; y < H; ++y) {
      std::memcpy(grid.rgb.data() + ((oy + y) * grid.width + ox) * 3,
                  img.rgb.data() + y * W * 3, W * 3);
    }
  }
  return grid;
}

}  // namespace dibjscc
