#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "dibjscc/channel.hpp"
#include "dibjscc/rng.hpp"

using namespace dibjscc;

namespace {

Tensor random_batch(std::size_t n, std::size_t m, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t({n, m});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.gaussian() * 2.3 + 0.4;
  return t;
}

}  // namespace

TEST_CASE("noise_sigma matches the SNR definition", "[channel]") {
  REQUIRE(noise_sigma({.snr_db = 0.0, .seed = 0}, 1.0) == Catch::Approx(1.0));
  REQUIRE(noise_sigma({.snr_db = std::numeric_limits<double>::infinity(), .seed = 0}, 1.0) == 0.0);
  double s10 = noise_sigma({.snr_db = 10.0, .seed = 0}, 1.0);
  REQUIRE(s10 * s10 == Catch::Approx(0.1).epsilon(1e-12));
  REQUIRE_THROWS_AS(noise_sigma({.snr_db = 0.0, .seed = 0}, 0.0), input_error);
}

TEST_CASE("normalize_power yields unit mean-square power", "[channel]") {
  Tensor batch = random_batch(64, 24, 5);
  Tensor normed = normalize_power(batch);
  REQUIRE(normed.mean_square() == Catch::Approx(1.0).margin(1e-6));

  SECTION("idempotent on unit-power batches") {
    Tensor again = normalize_power(normed);
    for (std::size_t i = 0; i < again.size(); ++i) {
      REQUIRE(again[i] == Catch::Approx(normed[i]).margin(1e-6));
    }
  }

  SECTION("invariant to global scaling") {
    Tensor scaled = batch;
    for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] *= 3.0;
    Tensor n2 = normalize_power(scaled);
    for (std::size_t i = 0; i < n2.size(); ++i) {
      REQUIRE(n2[i] == Catch::Approx(normed[i]).margin(1e-9));
    }
  }

  SECTION("all-zero batch is degenerate") {
    Tensor zeros({4, 8});
    REQUIRE_THROWS_AS(normalize_power(zeros), input_error);
  }
}

TEST_CASE("noiseless channel is bit-exact", "[channel]") {
  Tensor y = random_batch(16, 32, 9);
  ChannelSpec spec{.snr_db = std::numeric_limits<double>::infinity(), .seed = 1};
  Tensor out = awgn_transmit(y, spec);
  for (std::size_t i = 0; i < y.size(); ++i) {
    REQUIRE(out[i] == y[i]);  // exact, including sign of zero
  }
}

TEST_CASE("awgn noise statistics match sigma", "[channel]") {
  const std::size_t n = 1'000'000;
  Tensor y({1, n});
  ChannelSpec spec{.snr_db = 0.0, .seed = 77};  // sigma = 1 at unit power
  Tensor out = awgn_transmit(y, spec);
  double sum = 0.0, sumsq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double z = out[i] - y[i];
    sum += z;
    sumsq += z * z;
  }
  double mean = sum / n;
  double var = sumsq / n - mean * mean;
  REQUIRE(std::abs(mean) < 0.005);
  REQUIRE(std::abs(var - 1.0) < 0.01);
}

TEST_CASE("transmission is deterministic per seed and advances per call", "[channel]") {
  Tensor y = random_batch(8, 16, 2);
  ChannelSpec spec{.snr_db = 5.0, .seed = 123};
  Tensor a = awgn_transmit(y, spec);
  Tensor b = awgn_transmit(y, spec);
  for (std::size_t i = 0; i < y.size(); ++i) REQUIRE(a[i] == b[i]);

  AwgnChannel ch(spec);
  Tensor first = ch.transmit(y);
  Tensor second = ch.transmit(y);
  bool differs = false;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (first[i] != second[i]) differs = true;
  }
  REQUIRE(differs);
}

TEST_CASE("empirical SNR matches the configured value", "[channel]") {
  const std::size_t n = 1'000'000;
  for (double snr_db : {-5.0, 0.0, 10.0}) {
    Tensor batch = normalize_power(random_batch(1, n, 31));
    ChannelSpec spec{.snr_db = snr_db, .seed = 1000 + static_cast<std::uint64_t>(snr_db + 5)};
    Tensor out = awgn_transmit(batch, spec);
    double noise_power = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double z = out[i] - batch[i];
      noise_power += z * z;
    }
    noise_power /= static_cast<double>(n);
    double measured_db = 10.0 * std::log10(1.0 / noise_power);
    REQUIRE(std::abs(measured_db - snr_db) < 0.2);
  }
}

TEST_CASE("distinct seeds give independent noise for Bob and Eve", "[channel]") {
  const std::size_t n = 1'000'000;
  Tensor y({1, n});
  Tensor bob = awgn_transmit(y, {.snr_db = 0.0, .seed = 424242});
  Tensor eve = awgn_transmit(y, {.snr_db = 0.0, .seed = 171717});
  double sb = 0.0, se = 0.0, sbe = 0.0, sb2 = 0.0, se2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sb += bob[i];
    se += eve[i];
    sbe += bob[i] * eve[i];
    sb2 += bob[i] * bob[i];
    se2 += eve[i] * eve[i];
  }
  double mb = sb / n, me = se / n;
  double cov = sbe / n - mb * me;
  double corr = cov / std::sqrt((sb2 / n - mb * mb) * (se2 / n - me * me));
  REQUIRE(std::abs(corr) < 0.01);
}

TEST_CASE("normalization backward matches finite differences", "[channel]") {
  // Downstream loss L(out) = sum(c * out + 0.5 * d * out^2) with fixed
  // random coefficients; the composed map y -> L(normalize(y)) exercises the
  // batch-coupled scale derivative.
  Rng rng(20240615);
  const std::size_t rows = 6, cols = 5;
  Tensor y({rows, cols});
  std::vector<double> c(y.size()), d(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = rng.gaussian() * 2.0 + 0.5;
    c[i] = rng.gaussian();
    d[i] = rng.gaussian();
  }

  auto loss = [&](const Tensor& in) {
    Tensor out = normalize_power(in);
    double l = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      l += c[i] * out[i] + 0.5 * d[i] * out[i] * out[i];
    }
    return l;
  };

  auto [out, scale] = normalize_power_with_scale(y);
  Tensor g_out({rows, cols});
  for (std::size_t i = 0; i < out.size(); ++i) {
    g_out[i] = c[i] + d[i] * out[i];
  }
  Tensor g_in = normalize_power_backward(g_out, out, scale);

  const double eps = 1e-6;
  for (std::size_t i = 0; i < y.size(); ++i) {
    Tensor yp = y, ym = y;
    yp[i] += eps;
    ym[i] -= eps;
    double fd = (loss(yp) - loss(ym)) / (2.0 * eps);
    REQUIRE(g_in[i] == Catch::Approx(fd).epsilon(1e-6).margin(1e-9));
  }

  REQUIRE_THROWS_AS(normalize_power_backward(Tensor({2, 2}), out, scale),
                    input_error);
}
