#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dibjscc/errors.hpp"
#include "dibjscc/rng.hpp"
#include "dibjscc/tensor.hpp"

namespace dibjscc {

// One optimization step's loss breakdown. `total` is always recomputable
// from the components and the weights that produced it.
struct LossReport {
  double total = 0.0;
  std::map<std::string, double> components;
  std::size_t batch_size = 0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["total"] = total;
    j["batch_size"] = batch_size;
    for (const auto& [k, v] : components) j[k] = v;
    return j;
  }
};

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b,
                               const char* what) {
  if (!a.same_shape(b)) {
    throw input_error(std::string(what) + ": shape mismatch " +
                      a.shape_string() + " vs " + b.shape_string());
  }
}

// Scores feed log() and log1p(); anything outside the open interval would
// produce inf/NaN, so reject instead of silently clamping here.
inline void require_open_unit(const Tensor& scores, const char* what) {
  for (std::size_t i = 0; i < scores.size(); ++i) {
    double s = scores[i];
    if (!(s > 0.0 && s < 1.0)) {
      throw numeric_error(std::string(what) + ": score " + std::to_string(s) +
                          " outside (0,1); clamp upstream");
    }
  }
  if (scores.size() == 0) {
    throw input_error(std::string(what) + ": empty score batch");
  }
}

// Probability floor for classifier outputs inside log/1-over-p paths.
// Keeps gradients finite when a softmax output underflows.
constexpr double kProbFloor = 1e-12;

}  // namespace detail

// Mean squared error over every element of the batch.
inline double reconstruction_loss(const Tensor& x, const Tensor& x_hat) {
  detail::require_same_shape(x, x_hat, "reconstruction_loss");
  if (x.size() == 0) throw input_error("reconstruction_loss: empty batch");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double d = x_hat[i] - x[i];
    acc += d * d;
  }
  return acc / static_cast<double>(x.size());
}

// d(reconstruction_loss)/d(x_hat).
inline Tensor reconstruction_loss_grad(const Tensor& x, const Tensor& x_hat) {
  detail::require_same_shape(x, x_hat, "reconstruction_loss_grad");
  Tensor g(x.shape());
  double inv = 2.0 / static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = inv * (x_hat[i] - x[i]);
  return g;
}

// Mean log-probability assigned to the true label. Always <= 0; equals 0
// only when every row puts probability 1 on its label. Maximizing this is
// the private-branch training objective.
inline double private_info_bound(const Tensor& probs,
                                 const std::vector<int>& labels) {
  if (probs.rank() != 2) {
    throw input_error("private_info_bound: probs must be rank 2, got " +
                      probs.shape_string());
  }
  std::size_t n = probs.shape()[0];
  std::size_t classes = probs.shape()[1];
  if (n == 0) throw input_error("private_info_bound: empty batch");
  if (labels.size() != n) {
    throw input_error("private_info_bound: " + std::to_string(labels.size()) +
                      " labels for batch of " + std::to_string(n));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    int s = labels[i];
    if (s < 0 || static_cast<std::size_t>(s) >= classes) {
      throw input_error("private_info_bound: label " + std::to_string(s) +
                        " out of range [0," + std::to_string(classes) + ")");
    }
    acc += std::log(std::max(probs(i, static_cast<std::size_t>(s)),
                             detail::kProbFloor));
  }
  return acc / static_cast<double>(n);
}

// Negative of private_info_bound, the quantity actually minimized.
inline double cross_entropy(const Tensor& probs,
                            const std::vector<int>& labels) {
  return -private_info_bound(probs, labels);
}

// d(cross_entropy)/d(probs): nonzero only at the label column.
inline Tensor cross_entropy_grad(const Tensor& probs,
                                 const std::vector<int>& labels) {
  (void)private_info_bound(probs, labels);  // validation
  std::size_t n = probs.shape()[0];
  Tensor g(probs.shape());
  for (std::size_t i = 0; i < n; ++i) {
    auto s = static_cast<std::size_t>(labels[i]);
    g(i, s) = -1.0 / (static_cast<double>(n) *
                      std::max(probs(i, s), detail::kProbFloor));
  }
  return g;
}

// Breaks the pairing between the two streams: each is row-shuffled by its
// own permutation, so the output pairs sample the product of marginals
// while preserving each stream's row multiset.
inline std::pair<Tensor, Tensor> permute_marginals(const Tensor& y_t,
                                                   const Tensor& y_s,
                                                   std::uint64_t seed) {
  if (y_t.rank() != 2 || y_s.rank() != 2) {
    throw input_error("permute_marginals: inputs must be rank 2");
  }
  std::size_t n = y_t.shape()[0];
  if (y_s.shape()[0] != n) {
    throw input_error("permute_marginals: batch sizes differ");
  }
  if (n < 2) throw input_error("permute_marginals: batch size must be >= 2");

  Rng rng_t(derive_seed(seed, "permute-marginals-t"));
  Rng rng_s(derive_seed(seed, "permute-marginals-s"));
  std::vector<std::size_t> pt = rng_t.permutation(n);
  std::vector<std::size_t> ps = rng_s.permutation(n);
  return {take_rows(y_t, pt), take_rows(y_s, ps)};
}

// Binary cross-entropy that pushes scores toward 1 on jointly drawn pairs
// and toward 0 on permuted pairs.
inline double discriminator_loss(const Tensor& joint_scores,
                                 const Tensor& perm_scores) {
  detail::require_open_unit(joint_scores, "discriminator_loss");
  detail::require_open_unit(perm_scores, "discriminator_loss");
  double a = 0.0;
  for (std::size_t i = 0; i < joint_scores.size(); ++i) {
    a -= std::log(joint_scores[i]);
  }
  double b = 0.0;
  for (std::size_t i = 0; i < perm_scores.size(); ++i) {
    b -= std::log1p(-perm_scores[i]);
  }
  return a / static_cast<double>(joint_scores.size()) +
         b / static_cast<double>(perm_scores.size());
}

// Gradients of discriminator_loss w.r.t. (joint_scores, perm_scores).
inline std::pair<Tensor, Tensor> discriminator_loss_grads(
    const Tensor& joint_scores, const Tensor& perm_scores) {
  detail::require_open_unit(joint_scores, "discriminator_loss_grads");
  detail::require_open_unit(perm_scores, "discriminator_loss_grads");
  Tensor gj(joint_scores.shape());
  Tensor gp(perm_scores.shape());
  double nj = static_cast<double>(joint_scores.size());
  double np = static_cast<double>(perm_scores.size());
  for (std::size_t i = 0; i < joint_scores.size(); ++i) {
    gj[i] = -1.0 / (nj * joint_scores[i]);
  }
  for (std::size_t i = 0; i < perm_scores.size(); ++i) {
    gp[i] = 1.0 / (np * (1.0 - perm_scores[i]));
  }
  return {std::move(gj), std::move(gp)};
}

// Density-ratio estimate of the dependence between the two streams:
// mean log-odds of the discriminator on jointly drawn pairs. Zero when the
// discriminator is uninformative, unbounded in either direction otherwise.
inline double mi_ts_estimate(const Tensor& joint_scores) {
  detail::require_open_unit(joint_scores, "mi_ts_estimate");
  double acc = 0.0;
  for (std::size_t i = 0; i < joint_scores.size(); ++i) {
    double s = joint_scores[i];
    acc += std::log(s) - std::log1p(-s);
  }
  return acc / static_cast<double>(joint_scores.size());
}

// d(mi_ts_estimate)/d(joint_scores).
inline Tensor mi_ts_estimate_grad(const Tensor& joint_scores) {
  detail::require_open_unit(joint_scores, "mi_ts_estimate_grad");
  Tensor g(joint_scores.shape());
  double n = static_cast<double>(joint_scores.size());
  for (std::size_t i = 0; i < joint_scores.size(); ++i) {
    double s = joint_scores[i];
    g[i] = 1.0 / (n * s * (1.0 - s));
  }
  return g;
}

// Composite encoder/decoder objective for the second training stage:
// distortion plus alpha-weighted dependence estimate. The private-branch
// term is handled entirely by stage 1, so it does not appear here.
inline LossReport step2_objective(const Tensor& x, const Tensor& x_hat,
                                  const Tensor& joint_scores, double alpha) {
  if (!(alpha >= 0.0)) {
    throw input_error("step2_objective: alpha must be >= 0, got " +
                      std::to_string(alpha));
  }
  LossReport report;
  double mse = reconstruction_loss(x, x_hat);
  double mi = mi_ts_estimate(joint_scores);
  report.components["mse"] = mse;
  report.components["mi_ts_estimate"] = mi;
  report.total = mse + alpha * mi;
  report.batch_size = x.shape().empty() ? 0 : x.shape()[0];
  return report;
}

}  // namespace dibjscc
