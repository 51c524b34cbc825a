#pragma once

#include <json.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "dibjscc/errors.hpp"
#include "dibjscc/rng.hpp"
#include "dibjscc/tensor.hpp"

namespace dibjscc::nn {

using json = nlohmann::json;

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// Named view into a layer-owned parameter tensor and its gradient buffer.
struct ParamView {
  std::string name;
  Tensor* value;
  Tensor* grad;
};

// A differentiable map with cached state. forward(x, train=true) must be
// followed by at most one backward(); caches are overwritten by the next
// training forward. Evaluation passes (train=false) leave no cache.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, bool train) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual void collect_params(const std::string& prefix, std::vector<ParamView>& out) {}
  virtual void init(Rng& rng) {}
  virtual json descriptor() const = 0;
  virtual std::string kind() const = 0;
};

namespace detail {

inline void glorot_uniform(Tensor& w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-limit, limit);
}

inline void require_rank2(const Tensor& x, std::size_t cols, const char* who) {
  if (x.rank() != 2 || x.dim(1) != cols) {
    throw input_error(std::string(who) + ": expected N x " + std::to_string(cols) +
                      " input, got " + x.shape_string());
  }
}

}  // namespace detail

// Fully connected layer: y = x W^T + b with x of shape N x in.
class Dense : public Layer {
 public:
  Dense(std::size_t in, std::size_t out)
      : in_(in), out_(out), w_({out, in}), gw_({out, in}), b_({out}), gb_({out}) {}

  void init(Rng& rng) override {
    detail::glorot_uniform(w_, in_, out_, rng);
    b_.fill(0.0);
  }

  Tensor forward(const Tensor& x, bool train) override {
    detail::require_rank2(x, in_, "dense");
    const std::size_t n = x.dim(0);
    Tensor y({n, out_});
    ConstMatMap xm(x.data(), n, in_);
    ConstMatMap wm(w_.data(), out_, in_);
    MatMap ym(y.data(), n, out_);
    ym.noalias() = xm * wm.transpose();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < out_; ++j) y(i, j) += b_[j];
    }
    if (train) x_ = x;
    return y;
  }

  Tensor backward(const Tensor& g) override {
    const std::size_t n = x_.dim(0);
    if (g.rank() != 2 || g.dim(0) != n || g.dim(1) != out_) {
      throw input_error("dense backward: gradient shape mismatch");
    }
    ConstMatMap gm(g.data(), n, out_);
    ConstMatMap xm(x_.data(), n, in_);
    MatMap gwm(gw_.data(), out_, in_);
    gwm.noalias() += gm.transpose() * xm;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < out_; ++j) gb_[j] += g(i, j);
    }
    Tensor gx({n, in_});
    MatMap gxm(gx.data(), n, in_);
    ConstMatMap wm(w_.data(), out_, in_);
    gxm.noalias() = gm * wm;
    return gx;
  }

  void collect_params(const std::string& prefix, std::vector<ParamView>& out) override {
    out.push_back({prefix + ".weight", &w_, &gw_});
    out.push_back({prefix + ".bias", &b_, &gb_});
  }

  json descriptor() const override {
    return {{"kind", "dense"}, {"in", in_}, {"out", out_}};
  }
  std::string kind() const override { return "dense"; }

 private:
  std::size_t in_, out_;
  Tensor w_, gw_, b_, gb_;
  Tensor x_;
};

class ReLU : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override {
    Tensor y = x;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = y[i] > 0.0 ? y[i] : 0.0;
    if (train) x_ = x;
    return y;
  }
  Tensor backward(const Tensor& g) override {
    Tensor gx = g;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (x_[i] <= 0.0) gx[i] = 0.0;
    }
    return gx;
  }
  json descriptor() const override { return {{"kind", "relu"}}; }
  std::string kind() const override { return "relu"; }

 private:
  Tensor x_;
};

class LeakyReLU : public Layer {
 public:
  explicit LeakyReLU(double slope = 0.2) : slope_(slope) {}
  Tensor forward(const Tensor& x, bool train) override {
    Tensor y = x;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] < 0.0) y[i] *= slope_;
    }
    if (train) x_ = x;
    return y;
  }
  Tensor backward(const Tensor& g) override {
    Tensor gx = g;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (x_[i] < 0.0) gx[i] *= slope_;
    }
    return gx;
  }
  json descriptor() const override { return {{"kind", "lrelu"}, {"slope", slope_}}; }
  std::string kind() const override { return "lrelu"; }

 private:
  double slope_;
  Tensor x_;
};

// Logistic output. With a positive floor the output is clamped into
// [floor, 1 - floor]; the clamped region is flat, so its gradient is zero.
class Sigmoid : public Layer {
 public:
  explicit Sigmoid(double floor = 0.0) : floor_(floor) {}

  Tensor forward(const Tensor& x, bool train) override {
    Tensor y = x;
    for (std::size_t i = 0; i < y.size(); ++i) {
      double v = 1.0 / (1.0 + std::exp(-y[i]));
      if (floor_ > 0.0) {
        v = std::min(std::max(v, floor_), 1.0 - floor_);
      }
      y[i] = v;
    }
    if (train) x_ = x;
    return y;
  }

  Tensor backward(const Tensor& g) override {
    Tensor gx = g;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      double s = 1.0 / (1.0 + std::exp(-x_[i]));
      if (floor_ > 0.0 && (s < floor_ || s > 1.0 - floor_)) {
        gx[i] = 0.0;
      } else {
        gx[i] *= s * (1.0 - s);
      }
    }
    return gx;
  }

  json descriptor() const override { return {{"kind", "sigmoid"}, {"floor", floor_}}; }
  std::string kind() const override { return "sigmoid"; }

 private:
  double floor_;
  Tensor x_;
};

class Tanh : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override {
    Tensor y = x;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(y[i]);
    if (train) y_ = y;
    return y;
  }
  Tensor backward(const Tensor& g) override {
    Tensor gx = g;
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= 1.0 - y_[i] * y_[i];
    return gx;
  }
  json descriptor() const override { return {{"kind", "tanh"}}; }
  std::string kind() const override { return "tanh"; }

 private:
  Tensor y_;
};

// Row-wise softmax over N x S.
class Softmax : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override {
    if (x.rank() != 2) throw input_error("softmax: expected 2-D input");
    Tensor y = x;
    const std::size_t n = x.dim(0), s = x.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
      double* r = row(y, i);
      double mx = r[0];
      for (std::size_t j = 1; j < s; ++j) mx = std::max(mx, r[j]);
      double sum = 0.0;
      for (std::size_t j = 0; j < s; ++j) {
        r[j] = std::exp(r[j] - mx);
        sum += r[j];
      }
      for (std::size_t j = 0; j < s; ++j) r[j] /= sum;
    }
    if (train) y_ = y;
    return y;
  }

  Tensor backward(const Tensor& g) override {
    Tensor gx = g;
    const std::size_t n = y_.dim(0), s = y_.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
      const double* yr = row(y_, i);
      const double* gr = row(g, i);
      double dot = 0.0;
      for (std::size_t j = 0; j < s; ++j) dot += gr[j] * yr[j];
      double* gxr = row(gx, i);
      for (std::size_t j = 0; j < s; ++j) gxr[j] = yr[j] * (gr[j] - dot);
    }
    return gx;
  }

  json descriptor() const override { return {{"kind", "softmax"}}; }
  std::string kind() const override { return "softmax"; }

 private:
  Tensor y_;
};

// N x C x H x W  ->  N x (C*H*W)
class Flatten : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override {
    if (x.rank() < 2) throw input_error("flatten: expected batched input");
    if (train) in_shape_ = x.shape();
    return x.reshaped({x.dim(0), x.size() / x.dim(0)});
  }
  Tensor backward(const Tensor& g) override { return g.reshaped(in_shape_); }
  json descriptor() const override { return {{"kind", "flatten"}}; }
  std::string kind() const override { return "flatten"; }

 private:
  std::vector<std::size_t> in_shape_;
};

// N x (C*H*W)  ->  N x C x H x W
class Reshape : public Layer {
 public:
  Reshape(std::size_t c, std::size_t h, std::size_t w) : c_(c), h_(h), w_(w) {}
  Tensor forward(const Tensor& x, bool train) override {
    return x.reshaped({x.dim(0), c_, h_, w_});
  }
  Tensor backward(const Tensor& g) override {
    return g.reshaped({g.dim(0), c_ * h_ * w_});
  }
  json descriptor() const override {
    return {{"kind", "reshape"}, {"c", c_}, {"h", h_}, {"w", w_}};
  }
  std::string kind() const override { return "reshape"; }

 private:
  std::size_t c_, h_, w_;
};

}  // namespace dibjscc::nn
