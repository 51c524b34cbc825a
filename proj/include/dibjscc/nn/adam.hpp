#pragma once

#include <cmath>
#include <vector>

#include "dibjscc/nn/layers.hpp"

namespace dibjscc::nn {

// Adaptive-moment optimizer over a fixed set of parameter views. Freezing a
// parameter group means simply not handing it to any optimizer.
class Adam {
 public:
  explicit Adam(std::vector<ParamView> params, double lr = 1e-3,
                double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto& p : params_) {
      m_.emplace_back(p.value->shape());
      v_.emplace_back(p.value->shape());
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.grad->fill(0.0);
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      double* w = params_[k].value->data();
      const double* g = params_[k].grad->data();
      double* m = m_[k].data();
      double* v = v_[k].data();
      const std::size_t n = params_[k].value->size();
      for (std::size_t i = 0; i < n; ++i) {
        m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
        v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        w[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  std::vector<ParamView> params_;
  std::vector<Tensor> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

}  // namespace dibjscc::nn
