// Transmits a power-normalized batch through the additive-noise channel at
// a few SNR settings and prints the measured noise level next to the
// configured one.

#include <cstdio>

#include "dibjscc/channel.hpp"
#include "dibjscc/rng.hpp"

using namespace dibjscc;

int main() {
  Rng rng(7);
  Tensor y({256, 64});
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = 2.5 * rng.gaussian() + 1.0;

  auto [x, scale] = normalize_power_with_scale(y);
  double power = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) power += x[i] * x[i];
  power /= double(x.size());
  std::printf("normalized power %.6f (scale %.4f)\n", power, scale);

  for (double snr_db : {-5.0, 0.0, 10.0, 20.0}) {
    AwgnChannel chan({snr_db, derive_seed(7, "demo", std::uint64_t(snr_db + 50))});
    Tensor heard = chan.transmit(x);
    double noise = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double d = heard[i] - x[i];
      noise += d * d;
    }
    noise /= double(x.size());
    std::printf("configured %+6.1f dB -> measured %+6.2f dB\n", snr_db,
                10.0 * std::log10(power / noise));
  }
  return 0;
}
