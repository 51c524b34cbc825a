#pragma once

// Fast runtime invariant checks, exposed through the `selftest` CLI verb.
// Each check is self-contained and deterministic given its seed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "dibjscc/channel.hpp"
#include "dibjscc/nn/adam.hpp"
#include "dibjscc/nn/gradcheck.hpp"
#include "dibjscc/nn/network.hpp"
#include "dibjscc/objectives.hpp"
#include "dibjscc/rng.hpp"
#include "dibjscc/tensor.hpp"

namespace dibjscc::selftest {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct GaussianMiResult {
  double rho = 0.0;
  double expected_nats = 0.0;
  double estimate_nats = 0.0;
};

namespace detail {

// (a, b) with unit marginals and correlation rho, stacked as two n x 1
// tensors.
inline std::pair<Tensor, Tensor> correlated_pair(double rho, std::size_t n,
                                                 Rng& rng) {
  Tensor a({n, 1});
  Tensor b({n, 1});
  double mix = std::sqrt(1.0 - rho * rho);
  for (std::size_t i = 0; i < n; ++i) {
    double z1 = rng.gaussian();
    double z2 = rng.gaussian();
    a[i] = z1;
    b[i] = rho * z1 + mix * z2;
  }
  return {std::move(a), std::move(b)};
}

}  // namespace detail

// Small dense discriminator over concatenated stream pairs. Output in
// (floor, 1-floor) so downstream log-odds stay finite.
inline nn::Sequential make_pair_discriminator(std::size_t in_dim,
                                              std::size_t hidden = 64) {
  nn::Sequential net;
  net.add(std::make_unique<nn::Dense>(in_dim, hidden));
  net.add(std::make_unique<nn::ReLU>());
  net.add(std::make_unique<nn::Dense>(hidden, hidden));
  net.add(std::make_unique<nn::ReLU>());
  net.add(std::make_unique<nn::Dense>(hidden, 1));
  net.add(std::make_unique<nn::Sigmoid>(1e-6));
  return net;
}

// One discriminator update on a (joint, permuted) pair of batches. Both
// halves go through a single forward so layer caches stay consistent for
// the backward pass. Returns the discriminator loss.
inline double discriminator_step(nn::Sequential& dis, nn::Adam& opt,
                                 const Tensor& yt, const Tensor& ys,
                                 std::uint64_t perm_seed) {
  auto [yt_p, ys_p] = permute_marginals(yt, ys, perm_seed);
  std::size_t n = yt.shape()[0];

  Tensor joint = hconcat(yt, ys);
  Tensor perm = hconcat(yt_p, ys_p);
  Tensor both({2 * n, joint.shape()[1]});
  std::copy(joint.data(), joint.data() + joint.size(), both.data());
  std::copy(perm.data(), perm.data() + perm.size(),
            both.data() + joint.size());

  opt.zero_grad();
  Tensor scores = dis.forward(both, true);
  Tensor js({n, 1});
  Tensor ps({n, 1});
  std::copy(scores.data(), scores.data() + n, js.data());
  std::copy(scores.data() + n, scores.data() + 2 * n, ps.data());

  double loss = discriminator_loss(js, ps);
  auto [gj, gp] = discriminator_loss_grads(js, ps);
  Tensor g({2 * n, 1});
  std::copy(gj.data(), gj.data() + n, g.data());
  std::copy(gp.data(), gp.data() + n, g.data() + n);
  dis.backward(g);
  opt.step();
  return loss;
}

// Trains a discriminator on correlated Gaussian pairs and reads the
// density-ratio estimate back on fresh pairs. The closed-form target is
// -0.5 * ln(1 - rho^2).
inline GaussianMiResult gaussian_mi_estimate(double rho, std::uint64_t seed,
                                             std::size_t n_train = 100000,
                                             std::size_t n_eval = 100000,
                                             int epochs = 15,
                                             std::size_t batch = 500,
                                             double lr = 1e-3) {
  Rng data_rng(derive_seed(seed, "mi-check-data"));
  auto [a, b] = detail::correlated_pair(rho, n_train, data_rng);

  nn::Sequential dis = make_pair_discriminator(2);
  Rng init_rng(derive_seed(seed, "mi-check-init"));
  dis.init(init_rng);
  nn::Adam opt(dis.parameters(), lr);

  Rng shuffle_rng(derive_seed(seed, "mi-check-shuffle"));
  std::size_t steps_per_epoch = n_train / batch;
  std::uint64_t perm_counter = 0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::vector<std::size_t> order = shuffle_rng.permutation(n_train);
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      std::vector<std::size_t> idx(order.begin() + s * batch,
                                   order.begin() + (s + 1) * batch);
      Tensor yt = take_rows(a, idx);
      Tensor ys = take_rows(b, idx);
      discriminator_step(dis, opt, yt, ys,
                         derive_seed(seed, "mi-check-perm", perm_counter++));
    }
  }

  Rng eval_rng(derive_seed(seed, "mi-check-eval"));
  auto [ae, be] = detail::correlated_pair(rho, n_eval, eval_rng);
  Tensor scores = dis.forward(hconcat(ae, be), false);

  GaussianMiResult out;
  out.rho = rho;
  out.expected_nats = -0.5 * std::log1p(-rho * rho);
  out.estimate_nats = mi_ts_estimate(scores);
  return out;
}

// Deliberate breakage hooks for mutation smoke tests: a flipped
// discriminator loss must make the analytic and gradient checks fail, or
// the checks prove nothing.
struct FaultPlan {
  bool flip_discriminator_sign = false;
};

namespace detail {

inline double checked_disc_loss(const Tensor& js, const Tensor& ps,
                                const FaultPlan& fault) {
  double v = discriminator_loss(js, ps);
  return fault.flip_discriminator_sign ? -v : v;
}

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace detail

// Empirical SNR of the additive noise path at three grid points, one
// million unit-power symbols each.
inline CheckResult check_channel_calibration(std::uint64_t seed) {
  constexpr double kTolDb = 0.2;
  constexpr std::size_t kSymbols = 1000000;
  Tensor x({kSymbols});
  x.fill(1.0);

  CheckResult r;
  r.name = "channel_snr_calibration";
  r.pass = true;
  for (double snr_db : {-5.0, 0.0, 10.0}) {
    AwgnChannel chan({snr_db, derive_seed(seed, "chan-cal",
                                          std::uint64_t(snr_db + 100))});
    Tensor y = chan.transmit(x);
    double var = 0.0;
    for (std::size_t i = 0; i < kSymbols; ++i) {
      double d = y[i] - x[i];
      var += d * d;
    }
    var /= double(kSymbols);
    double measured = 10.0 * std::log10(1.0 / var);
    if (std::abs(measured - snr_db) > kTolDb) r.pass = false;
    if (!r.detail.empty()) r.detail += "; ";
    r.detail += detail::fmt(snr_db) + " dB -> measured " +
                detail::fmt(measured) + " dB";
  }
  r.detail += " (tol +/- " + detail::fmt(kTolDb) + " dB)";
  return r;
}

// Infinite SNR must be the identity map, bit for bit.
inline CheckResult check_noiseless_identity(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "chan-identity"));
  Tensor x({4096});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.gaussian();
  AwgnChannel chan({std::numeric_limits<double>::infinity(), seed});
  Tensor y = chan.transmit(x);
  std::size_t diffs = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::memcmp(&x[i], &y[i], sizeof(double)) != 0) ++diffs;
  }
  CheckResult r;
  r.name = "channel_noiseless_identity";
  r.pass = diffs == 0;
  r.detail = std::to_string(diffs) + " of " + std::to_string(x.size()) +
             " symbols differ (want 0)";
  return r;
}

// Closed-form values at distinguished inputs: uniform 10-class posterior,
// an undecided discriminator, a perfect reconstruction.
inline CheckResult check_loss_analytics(const FaultPlan& fault) {
  Tensor uniform({4, 10});
  uniform.fill(0.1);
  double ce = cross_entropy(uniform, {0, 3, 7, 9});
  double want_ce = std::log(10.0);

  Tensor half({6, 1});
  half.fill(0.5);
  double disc = detail::checked_disc_loss(half, half, fault);
  double want_disc = 2.0 * std::log(2.0);

  double mi = mi_ts_estimate(half);

  Tensor x({2, 5});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.1 * double(i);
  double recon = reconstruction_loss(x, x);

  CheckResult r;
  r.name = "loss_analytics";
  r.pass = std::abs(ce - want_ce) < 1e-12 &&
           std::abs(disc - want_disc) < 1e-12 && std::abs(mi) < 1e-12 &&
           recon == 0.0;
  r.detail = "uniform ce " + detail::fmt(ce) + " want " +
             detail::fmt(want_ce) + "; undecided disc " + detail::fmt(disc) +
             " want " + detail::fmt(want_disc) + "; undecided mi " +
             detail::fmt(mi) + " want 0; self recon " + detail::fmt(recon) +
             " want 0";
  return r;
}

// Central-difference check of every analytic gradient the training loops
// consume: the three losses, the density-ratio estimate, and a full
// backward pass through a small classifier.
inline CheckResult check_gradients(std::uint64_t seed,
                                   const FaultPlan& fault) {
  constexpr double kTol = 1e-4;
  Rng rng(derive_seed(seed, "grad-check"));
  double worst_recon, worst_ce, worst_disc, worst_mi, worst_net;

  {
    Tensor x({3, 7}), x_hat({3, 7});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.gaussian();
    for (std::size_t i = 0; i < x.size(); ++i) x_hat[i] = rng.gaussian();
    Tensor g = reconstruction_loss_grad(x, x_hat);
    worst_recon = nn::max_rel_error_fd(
        [&] { return reconstruction_loss(x, x_hat); }, x_hat.data(),
        x_hat.size(), g.data());
  }
  {
    Tensor probs({4, 5});
    for (std::size_t i = 0; i < probs.size(); ++i) {
      probs[i] = 0.05 + 0.9 * rng.uniform();
    }
    std::vector<int> labels = {1, 0, 4, 2};
    Tensor g = cross_entropy_grad(probs, labels);
    worst_ce = nn::max_rel_error_fd(
        [&] { return cross_entropy(probs, labels); }, probs.data(),
        probs.size(), g.data());
  }
  {
    Tensor js({6, 1}), ps({6, 1});
    for (std::size_t i = 0; i < js.size(); ++i) {
      js[i] = 0.1 + 0.8 * rng.uniform();
      ps[i] = 0.1 + 0.8 * rng.uniform();
    }
    auto [gj, gp] = discriminator_loss_grads(js, ps);
    double worst_j = nn::max_rel_error_fd(
        [&] { return detail::checked_disc_loss(js, ps, fault); }, js.data(),
        js.size(), gj.data());
    double worst_p = nn::max_rel_error_fd(
        [&] { return detail::checked_disc_loss(js, ps, fault); }, ps.data(),
        ps.size(), gp.data());
    worst_disc = std::max(worst_j, worst_p);

    Tensor gm = mi_ts_estimate_grad(js);
    worst_mi = nn::max_rel_error_fd([&] { return mi_ts_estimate(js); },
                                    js.data(), js.size(), gm.data());
  }
  {
    nn::Sequential net;
    net.add(std::make_unique<nn::Dense>(6, 8));
    net.add(std::make_unique<nn::ReLU>());
    net.add(std::make_unique<nn::Dense>(8, 4));
    net.add(std::make_unique<nn::Softmax>());
    Rng init_rng(derive_seed(seed, "grad-check-init"));
    net.init(init_rng);

    Tensor x({5, 6});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.gaussian();
    std::vector<int> labels = {0, 3, 1, 2, 3};
    net.zero_grad();
    Tensor probs = net.forward(x, true);
    Tensor gx = net.backward(cross_entropy_grad(probs, labels));

    auto loss = [&] { return cross_entropy(net.forward(x, false), labels); };
    worst_net =
        nn::max_rel_error_fd(loss, x.data(), x.size(), gx.data(), 1e-5);
    for (auto& p : net.parameters()) {
      worst_net = std::max(
          worst_net, nn::max_rel_error_fd(loss, p.value->data(),
                                          p.value->size(), p.grad->data(),
                                          1e-5));
    }
  }

  CheckResult r;
  r.name = "gradient_finite_difference";
  r.pass = worst_recon < kTol && worst_ce < kTol && worst_disc < kTol &&
           worst_mi < kTol && worst_net < kTol;
  r.detail = "max rel err: recon " + detail::fmt(worst_recon) + ", ce " +
             detail::fmt(worst_ce) + ", disc " + detail::fmt(worst_disc) +
             ", mi " + detail::fmt(worst_mi) + ", net " +
             detail::fmt(worst_net) + " (tol " + detail::fmt(kTol) + ")";
  return r;
}

// Power normalization backpropagates through its batch statistic; the
// scale must not be treated as a constant.
inline CheckResult check_normalization_gradient(std::uint64_t seed) {
  constexpr double kTol = 1e-4;
  Rng rng(derive_seed(seed, "norm-grad"));
  Tensor y({4, 5});
  std::vector<double> coeff(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = rng.gaussian();
    coeff[i] = rng.gaussian();
  }
  auto loss = [&] {
    Tensor out = normalize_power(y);
    double acc = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) acc += coeff[i] * out[i];
    return acc;
  };
  auto [out, scale] = normalize_power_with_scale(y);
  Tensor g_out({4, 5});
  for (std::size_t i = 0; i < g_out.size(); ++i) g_out[i] = coeff[i];
  Tensor g_in = normalize_power_backward(g_out, out, scale);
  double worst =
      nn::max_rel_error_fd(loss, y.data(), y.size(), g_in.data(), 1e-6);

  CheckResult r;
  r.name = "power_normalization_gradient";
  r.pass = worst < kTol;
  r.detail = "max rel err " + detail::fmt(worst) + " (tol " +
             detail::fmt(kTol) + ")";
  return r;
}

// Exhaustive discrete oracle: over a small joint distribution the
// classifier-based bound equals mutual information at the true posterior
// and sits strictly below it anywhere else.
inline CheckResult check_private_bound_enumeration() {
  // p(y, s) on 3 x 2 support, in 24ths so expectations are exact row
  // replication counts.
  const int counts[3][2] = {{6, 2}, {3, 9}, {1, 3}};
  double p[3][2], py[3] = {0, 0, 0}, ps[2] = {0, 0};
  for (int y = 0; y < 3; ++y) {
    for (int s = 0; s < 2; ++s) {
      p[y][s] = counts[y][s] / 24.0;
      py[y] += counts[y][s] / 24.0;
      ps[s] += counts[y][s] / 24.0;
    }
  }
  double info = 0.0;
  for (int y = 0; y < 3; ++y) {
    for (int s = 0; s < 2; ++s) {
      info += p[y][s] * std::log(p[y][s] / (py[y] * ps[s]));
    }
  }
  double entropy_s = -(ps[0] * std::log(ps[0]) + ps[1] * std::log(ps[1]));

  // One probs row per 24th of mass; bound = H(s) + mean log q(s_i | y_i).
  auto bound_for = [&](auto posterior) {
    Tensor probs({24, 2});
    std::vector<int> labels;
    std::size_t row = 0;
    for (int y = 0; y < 3; ++y) {
      for (int s = 0; s < 2; ++s) {
        for (int k = 0; k < counts[y][s]; ++k) {
          probs(row, 0) = posterior(0, y);
          probs(row, 1) = posterior(1, y);
          labels.push_back(s);
          ++row;
        }
      }
    }
    return entropy_s + private_info_bound(probs, labels);
  };

  double at_true =
      bound_for([&](int s, int y) { return p[y][s] / py[y]; });
  double mixed =
      bound_for([&](int s, int y) {
        return 0.7 * (p[y][s] / py[y]) + 0.3 * ps[s];
      });

  CheckResult r;
  r.name = "private_bound_enumeration";
  r.pass = std::abs(at_true - info) < 1e-9 && mixed <= info + 1e-9 &&
           mixed < at_true;
  r.detail = "info " + detail::fmt(info) + ", bound at true posterior " +
             detail::fmt(at_true) + ", at blurred posterior " +
             detail::fmt(mixed);
  return r;
}

// The marginal-product surrogate must keep each stream's rows intact while
// destroying the pairing.
inline CheckResult check_marginal_permutation(std::uint64_t seed) {
  constexpr std::size_t n = 1000;
  Tensor yt({n, 2}), ys({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    yt(i, 0) = double(i);
    yt(i, 1) = double(i) + 0.5;
    ys(i, 0) = double(i);
    ys(i, 1) = double(i) + 0.25;
  }
  auto [pt, ps] = permute_marginals(yt, ys, derive_seed(seed, "perm-check"));

  auto row_ids = [](const Tensor& t) {
    std::vector<std::size_t> ids(t.dim(0));
    for (std::size_t i = 0; i < t.dim(0); ++i) {
      ids[i] = std::size_t(t(i, 0));
    }
    return ids;
  };
  std::vector<std::size_t> ids_t = row_ids(pt);
  std::vector<std::size_t> ids_s = row_ids(ps);

  auto is_permutation = [&](std::vector<std::size_t> ids) {
    std::sort(ids.begin(), ids.end());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] != i) return false;
    }
    return true;
  };
  std::size_t preserved_pairs = 0;
  std::size_t fixed_t = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (ids_t[i] == ids_s[i]) ++preserved_pairs;
    if (ids_t[i] == i) ++fixed_t;
  }

  CheckResult r;
  r.name = "marginal_permutation";
  // A uniform random pairing preserves ~1 pair in expectation; 2% means
  // the permutation is broken, not unlucky.
  r.pass = is_permutation(ids_t) && is_permutation(ids_s) &&
           preserved_pairs < n / 50 && fixed_t < n / 50 &&
           ids_t != ids_s;
  r.detail = "rows intact " + std::string(is_permutation(ids_t) ? "yes" : "no") +
             "/" + std::string(is_permutation(ids_s) ? "yes" : "no") +
             ", preserved pairs " + std::to_string(preserved_pairs) + " of " +
             std::to_string(n);
  return r;
}

inline CheckResult check_mi_gaussian(double rho, double tol,
                                     std::uint64_t seed) {
  GaussianMiResult g = gaussian_mi_estimate(rho, seed);
  CheckResult r;
  r.name = "mi_gaussian_rho_" + detail::fmt(rho);
  r.pass = std::abs(g.estimate_nats - g.expected_nats) <= tol;
  r.detail = "estimate " + detail::fmt(g.estimate_nats) + " nats, expected " +
             detail::fmt(g.expected_nats) + " (tol +/- " + detail::fmt(tol) +
             ")";
  return r;
}

// The whole fast invariant suite, cheapest checks first. Deterministic
// given the seed.
inline std::vector<CheckResult> run_all_checks(std::uint64_t seed,
                                               const FaultPlan& fault = {}) {
  std::vector<CheckResult> out;
  out.push_back(check_loss_analytics(fault));
  out.push_back(check_gradients(seed, fault));
  out.push_back(check_normalization_gradient(seed));
  out.push_back(check_private_bound_enumeration());
  out.push_back(check_marginal_permutation(seed));
  out.push_back(check_noiseless_identity(seed));
  out.push_back(check_channel_calibration(seed));
  out.push_back(check_mi_gaussian(0.0, 0.05, seed));
  out.push_back(check_mi_gaussian(0.8, 0.10, seed));
  return out;
}

inline bool all_passed(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(),
                     [](const CheckResult& r) { return r.pass; });
}

inline std::string format_report(const std::vector<CheckResult>& results) {
  std::string out;
  for (const CheckResult& r : results) {
    out += (r.pass ? "[PASS] " : "[FAIL] ") + r.name + ": " + r.detail + "\n";
  }
  std::size_t failed = 0;
  for (const CheckResult& r : results) {
    if (!r.pass) ++failed;
  }
  out += failed == 0 ? std::to_string(results.size()) + " checks passed\n"
                     : std::to_string(failed) + " of " +
                           std::to_string(results.size()) +
                           " checks FAILED\n";
  return out;
}

}  // namespace dibjscc::selftest
