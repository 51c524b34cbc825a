#pragma once

#include <cstring>

#include "dibjscc/nn/layers.hpp"

namespace dibjscc::nn {

namespace detail {

// Shared geometry for the conv/conv-transpose pair. C/H/W always describe the
// "image side" of the map (conv input, conv-transpose output); OH/OW the
// lattice of kernel placements.
struct ConvGeom {
  std::size_t C, H, W;
  std::size_t k, s, p;
  std::size_t OH, OW;

  static ConvGeom for_conv(std::size_t c, std::size_t h, std::size_t w,
                           std::size_t k, std::size_t s, std::size_t p) {
    if (h + 2 * p < k || w + 2 * p < k) {
      throw input_error("conv: kernel larger than padded input");
    }
    ConvGeom g{c, h, w, k, s, p, 0, 0};
    g.OH = (h + 2 * p - k) / s + 1;
    g.OW = (w + 2 * p - k) / s + 1;
    return g;
  }

  std::size_t patch_rows() const { return C * k * k; }
  std::size_t placements() const { return OH * OW; }
};

// Unfolds src (N x C x H x W) into cols (C*k*k x N*OH*OW); out-of-bounds taps
// read zero.
inline void im2col(const double* src, std::size_t n_batch, const ConvGeom& g,
                   Tensor& cols) {
  const std::size_t rows = g.patch_rows();
  const std::size_t ncols = n_batch * g.placements();
  if (cols.rank() != 2 || cols.dim(0) != rows || cols.dim(1) != ncols) {
    cols = Tensor({rows, ncols});
  }
  const std::size_t img = g.C * g.H * g.W;
  for (std::size_t c = 0; c < g.C; ++c) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        double* dst = row(cols, (c * g.k + ki) * g.k + kj);
        for (std::size_t n = 0; n < n_batch; ++n) {
          const double* plane = src + n * img + c * g.H * g.W;
          for (std::size_t oh = 0; oh < g.OH; ++oh) {
            const long ih = static_cast<long>(oh * g.s + ki) - static_cast<long>(g.p);
            double* drow = dst + (n * g.placements()) + oh * g.OW;
            if (ih < 0 || ih >= static_cast<long>(g.H)) {
              std::memset(drow, 0, g.OW * sizeof(double));
              continue;
            }
            const double* srow = plane + static_cast<std::size_t>(ih) * g.W;
            for (std::size_t ow = 0; ow < g.OW; ++ow) {
              const long iw = static_cast<long>(ow * g.s + kj) - static_cast<long>(g.p);
              drow[ow] = (iw < 0 || iw >= static_cast<long>(g.W))
                             ? 0.0
                             : srow[static_cast<std::size_t>(iw)];
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: folds cols back into dst (N x C x H x W), accumulating
// overlapping taps. dst must be pre-zeroed by the caller.
inline void col2im(const Tensor& cols, std::size_t n_batch, const ConvGeom& g,
                   double* dst) {
  const std::size_t img = g.C * g.H * g.W;
  for (std::size_t c = 0; c < g.C; ++c) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const double* src = row(cols, (c * g.k + ki) * g.k + kj);
        for (std::size_t n = 0; n < n_batch; ++n) {
          double* plane = dst + n * img + c * g.H * g.W;
          for (std::size_t oh = 0; oh < g.OH; ++oh) {
            const long ih = static_cast<long>(oh * g.s + ki) - static_cast<long>(g.p);
            if (ih < 0 || ih >= static_cast<long>(g.H)) continue;
            const double* srow = src + (n * g.placements()) + oh * g.OW;
            double* drow = plane + static_cast<std::size_t>(ih) * g.W;
            for (std::size_t ow = 0; ow < g.OW; ++ow) {
              const long iw = static_cast<long>(ow * g.s + kj) - static_cast<long>(g.p);
              if (iw < 0 || iw >= static_cast<long>(g.W)) continue;
              drow[static_cast<std::size_t>(iw)] += srow[ow];
            }
          }
        }
      }
    }
  }
}

// Copies between the batch-major tensor layout (N x C x P) and the
// channel-major GEMM layout (C x N*P).
inline void gather_channel_major(const double* src, std::size_t n_batch,
                                 std::size_t channels, std::size_t plane,
                                 Tensor& mat) {
  if (mat.rank() != 2 || mat.dim(0) != channels || mat.dim(1) != n_batch * plane) {
    mat = Tensor({channels, n_batch * plane});
  }
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      std::memcpy(row(mat, c) + n * plane, src + (n * channels + c) * plane,
                  plane * sizeof(double));
    }
  }
}

inline void scatter_channel_major(const Tensor& mat, std::size_t n_batch,
                                  std::size_t channels, std::size_t plane,
                                  double* dst) {
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      std::memcpy(dst + (n * channels + c) * plane, row(mat, c) + n * plane,
                  plane * sizeof(double));
    }
  }
}

}  // namespace detail

// 2-D convolution, NCHW, floor output size: OH = (H + 2p - k) / s + 1.
class Conv2d : public Layer {
 public:
  Conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t k, std::size_t s,
         std::size_t p)
      : in_ch_(in_ch), out_ch_(out_ch), k_(k), s_(s), p_(p),
        w_({out_ch, in_ch * k * k}), gw_({out_ch, in_ch * k * k}),
        b_({out_ch}), gb_({out_ch}) {}

  void init(Rng& rng) override {
    detail::glorot_uniform(w_, in_ch_ * k_ * k_, out_ch_ * k_ * k_, rng);
    b_.fill(0.0);
  }

  Tensor forward(const Tensor& x, bool train) override {
    check_input(x);
    n_ = x.dim(0);
    geom_ = detail::ConvGeom::for_conv(in_ch_, x.dim(2), x.dim(3), k_, s_, p_);
    detail::im2col(x.data(), n_, geom_, cols_);

    const std::size_t plane = geom_.placements();
    Tensor out_mat({out_ch_, n_ * plane});
    ConstMatMap wm(w_.data(), out_ch_, geom_.patch_rows());
    ConstMatMap cm(cols_.data(), geom_.patch_rows(), n_ * plane);
    MatMap om(out_mat.data(), out_ch_, n_ * plane);
    om.noalias() = wm * cm;
    for (std::size_t c = 0; c < out_ch_; ++c) {
      double* r = row(out_mat, c);
      const double bias = b_[c];
      for (std::size_t i = 0; i < n_ * plane; ++i) r[i] += bias;
    }

    Tensor y({n_, out_ch_, geom_.OH, geom_.OW});
    detail::scatter_channel_major(out_mat, n_, out_ch_, plane, y.data());
    if (!train) cols_ = Tensor();  // drop the unfold cache in eval mode
    return y;
  }

  Tensor backward(const Tensor& g) override {
    const std::size_t plane = geom_.placements();
    Tensor g_mat;
    detail::gather_channel_major(g.data(), n_, out_ch_, plane, g_mat);

    ConstMatMap gm(g_mat.data(), out_ch_, n_ * plane);
    ConstMatMap cm(cols_.data(), geom_.patch_rows(), n_ * plane);
    MatMap gwm(gw_.data(), out_ch_, geom_.patch_rows());
    gwm.noalias() += gm * cm.transpose();
    for (std::size_t c = 0; c < out_ch_; ++c) {
      const double* r = row(g_mat, c);
      double s = 0.0;
      for (std::size_t i = 0; i < n_ * plane; ++i) s += r[i];
      gb_[c] += s;
    }

    Tensor d_cols({geom_.patch_rows(), n_ * plane});
    ConstMatMap wm(w_.data(), out_ch_, geom_.patch_rows());
    MatMap dcm(d_cols.data(), geom_.patch_rows(), n_ * plane);
    dcm.noalias() = wm.transpose() * gm;

    Tensor gx({n_, in_ch_, geom_.H, geom_.W});
    detail::col2im(d_cols, n_, geom_, gx.data());
    return gx;
  }

  void collect_params(const std::string& prefix, std::vector<ParamView>& out) override {
    out.push_back({prefix + ".weight", &w_, &gw_});
    out.push_back({prefix + ".bias", &b_, &gb_});
  }

  json descriptor() const override {
    return {{"kind", "conv"}, {"in", in_ch_}, {"out", out_ch_},
            {"k", k_}, {"s", s_}, {"p", p_}};
  }
  std::string kind() const override { return "conv"; }

 private:
  void check_input(const Tensor& x) const {
    if (x.rank() != 4 || x.dim(1) != in_ch_) {
      throw input_error("conv: expected N x " + std::to_string(in_ch_) +
                        " x H x W input, got " + x.shape_string());
    }
  }

  std::size_t in_ch_, out_ch_, k_, s_, p_;
  Tensor w_, gw_, b_, gb_;
  detail::ConvGeom geom_{};
  std::size_t n_ = 0;
  Tensor cols_;
};

// Transposed 2-D convolution, NCHW: OH = (IH - 1) * s + k - 2p. The exact
// adjoint of Conv2d with the same (k, s, p).
class ConvTranspose2d : public Layer {
 public:
  ConvTranspose2d(std::size_t in_ch, std::size_t out_ch, std::size_t k,
                  std::size_t s, std::size_t p)
      : in_ch_(in_ch), out_ch_(out_ch), k_(k), s_(s), p_(p),
        w_({in_ch, out_ch * k * k}), gw_({in_ch, out_ch * k * k}),
        b_({out_ch}), gb_({out_ch}) {}

  void init(Rng& rng) override {
    detail::glorot_uniform(w_, in_ch_ * k_ * k_, out_ch_ * k_ * k_, rng);
    b_.fill(0.0);
  }

  Tensor forward(const Tensor& x, bool train) override {
    if (x.rank() != 4 || x.dim(1) != in_ch_) {
      throw input_error("convt: expected N x " + std::to_string(in_ch_) +
                        " x H x W input, got " + x.shape_string());
    }
    n_ = x.dim(0);
    const std::size_t ih = x.dim(2), iw = x.dim(3);
    const std::size_t oh = (ih - 1) * s_ + k_ - 2 * p_;
    const std::size_t ow = (iw - 1) * s_ + k_ - 2 * p_;
    geom_ = detail::ConvGeom{out_ch_, oh, ow, k_, s_, p_, ih, iw};

    detail::gather_channel_major(x.data(), n_, in_ch_, ih * iw, in_mat_);

    Tensor cols({geom_.patch_rows(), n_ * ih * iw});
    ConstMatMap wm(w_.data(), in_ch_, geom_.patch_rows());
    ConstMatMap im(in_mat_.data(), in_ch_, n_ * ih * iw);
    MatMap cm(cols.data(), geom_.patch_rows(), n_ * ih * iw);
    cm.noalias() = wm.transpose() * im;

    Tensor y({n_, out_ch_, oh, ow});
    detail::col2im(cols, n_, geom_, y.data());
    const std::size_t plane = oh * ow;
    for (std::size_t n = 0; n < n_; ++n) {
      for (std::size_t c = 0; c < out_ch_; ++c) {
        double* d = y.data() + (n * out_ch_ + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) d[i] += b_[c];
      }
    }
    if (!train) in_mat_ = Tensor();
    return y;
  }

  Tensor backward(const Tensor& g) override {
    const std::size_t ih = geom_.OH, iw = geom_.OW;
    Tensor cols_g;
    detail::im2col(g.data(), n_, geom_, cols_g);

    ConstMatMap im(in_mat_.data(), in_ch_, n_ * ih * iw);
    ConstMatMap cgm(cols_g.data(), geom_.patch_rows(), n_ * ih * iw);
    MatMap gwm(gw_.data(), in_ch_, geom_.patch_rows());
    gwm.noalias() += im * cgm.transpose();

    const std::size_t plane = geom_.H * geom_.W;
    for (std::size_t n = 0; n < n_; ++n) {
      for (std::size_t c = 0; c < out_ch_; ++c) {
        const double* r = g.data() + (n * out_ch_ + c) * plane;
        double s = 0.0;
        for (std::size_t i = 0; i < plane; ++i) s += r[i];
        gb_[c] += s;
      }
    }

    Tensor d_in_mat({in_ch_, n_ * ih * iw});
    ConstMatMap wm(w_.data(), in_ch_, geom_.patch_rows());
    MatMap dim(d_in_mat.data(), in_ch_, n_ * ih * iw);
    dim.noalias() = wm * cgm;

    Tensor gx({n_, in_ch_, ih, iw});
    detail::scatter_channel_major(d_in_mat, n_, in_ch_, ih * iw, gx.data());
    return gx;
  }

  void collect_params(const std::string& prefix, std::vector<ParamView>& out) override {
    out.push_back({prefix + ".weight", &w_, &gw_});
    out.push_back({prefix + ".bias", &b_, &gb_});
  }

  json descriptor() const override {
    return {{"kind", "convt"}, {"in", in_ch_}, {"out", out_ch_},
            {"k", k_}, {"s", s_}, {"p", p_}};
  }
  std::string kind() const override { return "convt"; }

 private:
  std::size_t in_ch_, out_ch_, k_, s_, p_;
  Tensor w_, gw_, b_, gb_;
  detail::ConvGeom geom_{};
  std::size_t n_ = 0;
  Tensor in_mat_;
};

}  // namespace dibjscc::nn
