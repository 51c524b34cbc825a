#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

#include "dibjscc/errors.hpp"
#include "dibjscc/rng.hpp"
#include "dibjscc/tensor.hpp"

namespace dibjscc {

// One AWGN channel realization: SNR in dB (may be +infinity for the
// noiseless channel) plus the seed of its noise stream.
struct ChannelSpec {
  double snr_db = 10.0;
  std::uint64_t seed = 0;
};

// sigma = sqrt(signal_power * 10^(-snr_db / 10)); 0 for the noiseless channel.
inline double noise_sigma(const ChannelSpec& spec, double signal_power) {
  if (!(signal_power > 0.0)) {
    throw input_error("noise_sigma: signal power must be positive");
  }
  if (std::isinf(spec.snr_db) && spec.snr_db > 0.0) return 0.0;
  if (!std::isfinite(spec.snr_db)) {
    throw input_error("noise_sigma: snr_db must be finite or +inf");
  }
  return std::sqrt(signal_power * std::pow(10.0, -spec.snr_db / 10.0));
}

// Scales a batch of codewords by one batch-level scalar so the mean squared
// amplitude per symbol is 1. SNR is defined against this unit signal power.
inline Tensor normalize_power(const Tensor& batch) {
  if (batch.empty()) throw input_error("normalize_power: empty batch");
  const double p = batch.mean_square();
  if (p <= 0.0) {
    throw input_error("normalize_power: degenerate all-zero batch");
  }
  const double scale = 1.0 / std::sqrt(p);
  Tensor out = batch;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= scale;
  return out;
}

// As normalize_power, also reporting the applied scale (the training loop
// needs it to route gradients back through the scaling).
inline std::pair<Tensor, double> normalize_power_with_scale(const Tensor& batch) {
  if (batch.empty()) throw input_error("normalize_power: empty batch");
  const double p = batch.mean_square();
  if (p <= 0.0) {
    throw input_error("normalize_power: degenerate all-zero batch");
  }
  const double scale = 1.0 / std::sqrt(p);
  Tensor out = batch;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= scale;
  return {out, scale};
}

// Gradient of normalize_power at the point where it produced (out, scale).
// The batch-level scale depends on every input element, so the full
// derivative removes the component of the upstream gradient along the
// normalized batch: g_in = scale * (g_out - out * <g_out, out> / K).
// Detaching the scale instead leaves a spurious radial term that lets the
// optimizer inflate raw codeword amplitude without changing the transmitted
// signal, drowning per-sample contrast.
inline Tensor normalize_power_backward(const Tensor& g_out, const Tensor& out,
                                       double scale) {
  if (!g_out.same_shape(out)) {
    throw input_error("normalize_power_backward: gradient shape " +
                      g_out.shape_string() + " does not match output " +
                      out.shape_string());
  }
  double dot = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) dot += g_out[i] * out[i];
  const double radial = dot / static_cast<double>(out.size());
  Tensor g_in = g_out;
  for (std::size_t i = 0; i < g_in.size(); ++i) {
    g_in[i] = scale * (g_out[i] - out[i] * radial);
  }
  return g_in;
}

// Stateful AWGN channel. Each transmit() call advances the seeded noise
// stream; constructing two channels with distinct seeds yields independent
// noise (Bob and Eve must never share a stream). Inputs are expected at unit
// signal power (see normalize_power).
class AwgnChannel {
 public:
  explicit AwgnChannel(const ChannelSpec& spec)
      : sigma_(noise_sigma(spec, 1.0)), rng_(spec.seed) {}

  double sigma() const { return sigma_; }

  Tensor transmit(const Tensor& y) {
    if (!y.all_finite()) throw input_error("awgn: non-finite codeword");
    if (sigma_ == 0.0) return y;  // bit-exact noiseless path
    Tensor out = y;
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] += sigma_ * rng_.gaussian();
    }
    return out;
  }

 private:
  double sigma_;
  Rng rng_;
};

// Single-shot transmission: y + z with z ~ N(0, sigma^2 I), deterministic in
// spec.seed.
inline Tensor awgn_transmit(const Tensor& y, const ChannelSpec& spec) {
  AwgnChannel ch(spec);
  return ch.transmit(y);
}

}  // namespace dibjscc
