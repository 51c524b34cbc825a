#include <catch2/catch_amalgamated.hpp>

#include <string>
#include <vector>

#include "dibjscc/selftest.hpp"

using namespace dibjscc;
using selftest::CheckResult;

namespace {

const CheckResult& find_check(const std::vector<CheckResult>& rs,
                              const std::string& name) {
  for (const CheckResult& r : rs) {
    if (r.name == name) return r;
  }
  FAIL("no check named " + name);
  return rs.front();
}

}  // namespace

TEST_CASE("fast checks pass on a healthy build", "[selftest]") {
  // MI checks are exercised by the objectives suite; keep this one fast.
  selftest::FaultPlan healthy;
  std::vector<CheckResult> rs = {
      selftest::check_loss_analytics(healthy),
      selftest::check_gradients(5, healthy),
      selftest::check_normalization_gradient(5),
      selftest::check_private_bound_enumeration(),
      selftest::check_marginal_permutation(5),
      selftest::check_noiseless_identity(5),
      selftest::check_channel_calibration(5),
  };
  for (const CheckResult& r : rs) {
    CAPTURE(r.name, r.detail);
    CHECK(r.pass);
    CHECK_FALSE(r.detail.empty());
  }
  REQUIRE(selftest::all_passed(rs));
}

TEST_CASE("flipped discriminator sign trips analytic and gradient checks",
          "[selftest]") {
  selftest::FaultPlan broken;
  broken.flip_discriminator_sign = true;

  CheckResult analytics = selftest::check_loss_analytics(broken);
  CHECK_FALSE(analytics.pass);
  CheckResult grads = selftest::check_gradients(5, broken);
  CHECK_FALSE(grads.pass);

  // Checks that never touch the discriminator loss stay green, so the
  // fault is localized in the report rather than cascading.
  CHECK(selftest::check_normalization_gradient(5).pass);
  CHECK(selftest::check_private_bound_enumeration().pass);
}

TEST_CASE("report names every check with measured values", "[selftest]") {
  std::vector<CheckResult> rs = {
      selftest::check_loss_analytics({}),
      selftest::check_private_bound_enumeration(),
  };
  std::string report = selftest::format_report(rs);
  CHECK(report.find("[PASS] loss_analytics:") != std::string::npos);
  CHECK(report.find("[PASS] private_bound_enumeration:") != std::string::npos);
  CHECK(report.find("want 2.30259") != std::string::npos);  // measured vs expected
  CHECK(report.find("2 checks passed") != std::string::npos);

  rs[0].pass = false;
  std::string failing = selftest::format_report(rs);
  CHECK(failing.find("[FAIL] loss_analytics:") != std::string::npos);
  CHECK(failing.find("1 of 2 checks FAILED") != std::string::npos);
  CHECK_FALSE(selftest::all_passed(rs));
}

TEST_CASE("bound enumeration oracle pins the information value",
          "[selftest]") {
  CheckResult r = selftest::check_private_bound_enumeration();
  REQUIRE(r.pass);
  // I(y;s) of the 3x2 table, computed independently: sum p log p/(py ps).
  CHECK(r.detail.find("info 0.116858") != std::string::npos);
}

TEST_CASE("full check list covers every invariant family",
          "[selftest][slow]") {
  std::vector<CheckResult> rs = selftest::run_all_checks(5);
  REQUIRE(selftest::all_passed(rs));
  for (const char* name :
       {"loss_analytics", "gradient_finite_difference",
        "power_normalization_gradient", "private_bound_enumeration",
        "marginal_permutation", "channel_noiseless_identity",
        "channel_snr_calibration", "mi_gaussian_rho_0",
        "mi_gaussian_rho_0.8"}) {
    CAPTURE(name);
    CHECK(find_check(rs, name).pass);
  }
}
