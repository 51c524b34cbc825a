#pragma once

// Brute-force information-theoretic oracles for small discrete spaces.
// Deliberately naive: plain joint-count enumeration, no estimator tricks,
// so test expectations are independent of the library under test.

#include <cmath>
#include <cstddef>
#include <vector>

namespace oracles {

// H(s) in nats from a label sequence.
inline double entropy(const std::vector<int>& labels, int num_classes) {
  std::vector<double> counts(static_cast<std::size_t>(num_classes), 0.0);
  for (int s : labels) counts[static_cast<std::size_t>(s)] += 1.0;
  double n = static_cast<double>(labels.size());
  double h = 0.0;
  for (double c : counts) {
    if (c > 0.0) {
      double p = c / n;
      h -= p * std::log(p);
    }
  }
  return h;
}

// I(y; s) in nats from paired discrete sequences, by joint-count
// enumeration over the full contingency table.
inline double mutual_information(const std::vector<int>& y, int num_y,
                                 const std::vector<int>& s, int num_s) {
  std::vector<double> joint(
      static_cast<std::size_t>(num_y) * static_cast<std::size_t>(num_s), 0.0);
  std::vector<double> py(static_cast<std::size_t>(num_y), 0.0);
  std::vector<double> ps(static_cast<std::size_t>(num_s), 0.0);
  double n = static_cast<double>(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    joint[static_cast<std::size_t>(y[i]) * num_s +
          static_cast<std::size_t>(s[i])] += 1.0;
    py[static_cast<std::size_t>(y[i])] += 1.0;
    ps[static_cast<std::size_t>(s[i])] += 1.0;
  }
  double mi = 0.0;
  for (int a = 0; a < num_y; ++a) {
    for (int b = 0; b < num_s; ++b) {
      double pj = joint[static_cast<std::size_t>(a) * num_s + b] / n;
      if (pj > 0.0) {
        mi += pj * std::log(pj / ((py[static_cast<std::size_t>(a)] / n) *
                                  (ps[static_cast<std::size_t>(b)] / n)));
      }
    }
  }
  return mi;
}

// Empirical posterior p(s | y) from paired sequences, rows indexed by y.
inline std::vector<std::vector<double>> empirical_posterior(
    const std::vector<int>& y, int num_y, const std::vector<int>& s,
    int num_s) {
  std::vector<std::vector<double>> post(
      static_cast<std::size_t>(num_y),
      std::vector<double>(static_cast<std::size_t>(num_s), 0.0));
  std::vector<double> counts(static_cast<std::size_t>(num_y), 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    post[static_cast<std::size_t>(y[i])][static_cast<std::size_t>(s[i])] +=
        1.0;
    counts[static_cast<std::size_t>(y[i])] += 1.0;
  }
  for (int a = 0; a < num_y; ++a) {
    if (counts[static_cast<std::size_t>(a)] > 0.0) {
      for (int b = 0; b < num_s; ++b) {
        post[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] /=
            counts[static_cast<std::size_t>(a)];
      }
    }
  }
  return post;
}

}  // namespace oracles
