#include <doctest.h>

#include <cmath>
#include <sstream>

#include "advobj/schedule.hpp"

using namespace advobj;

TEST_CASE("linear-beta table hits its pinned values") {
  NoiseSchedule s = build_schedule(ScheduleKind::kLinearBeta, 50, 0.0, 1e-4, 0.2);
  REQUIRE(s.T == 50);
  CHECK(s.alpha_bar[0] == 1.0);
  CHECK(s.sigma[0] == 0.0);
  CHECK(s.alpha[1] == doctest::Approx(1.0 - 1e-4).epsilon(1e-15));
  CHECK(s.alpha[50] == doctest::Approx(0.8).epsilon(1e-15));

  // Cumulative products frozen from an independent high-precision evaluation.
  CHECK(s.abar(25) == doctest::Approx(0.2809855127647834).epsilon(1e-12));
  CHECK(s.abar(50) == doctest::Approx(0.0046161110112669978).epsilon(1e-12));

  // The running product is built by the exact recurrence.
  for (int t = 1; t <= 50; ++t)
    CHECK(s.abar(t) == s.abar(t - 1) * s.alpha[static_cast<size_t>(t)]);

  for (int t = 1; t <= 50; ++t) CHECK(s.sigma[static_cast<size_t>(t)] == 0.0);
}

TEST_CASE("eta interpolates toward the ancestral noise scale") {
  NoiseSchedule s = build_schedule(ScheduleKind::kLinearBeta, 50, 1.0, 1e-4, 0.2);
  for (int t = 2; t <= 50; ++t) {
    double abt = s.abar(t), abp = s.abar(t - 1);
    double at = s.alpha[static_cast<size_t>(t)];
    double want = std::sqrt((1.0 - abp) / (1.0 - abt)) * std::sqrt(1.0 - at);
    CHECK(s.sigma[static_cast<size_t>(t)] == doctest::Approx(want).epsilon(1e-13));
    CHECK(s.sigma[static_cast<size_t>(t)] * s.sigma[static_cast<size_t>(t)] <=
          1.0 - abp + 1e-15);
  }

  NoiseSchedule h = build_schedule(ScheduleKind::kLinearBeta, 50, 0.5, 1e-4, 0.2);
  for (int t = 1; t <= 50; ++t)
    CHECK(h.sigma[static_cast<size_t>(t)] ==
          doctest::Approx(0.5 * s.sigma[static_cast<size_t>(t)]).epsilon(1e-13));
}

TEST_CASE("cosine schedule stays inside the open unit interval") {
  NoiseSchedule s = build_schedule(ScheduleKind::kCosine, 100, 0.0, 0.0, 0.0);
  for (int t = 1; t <= 100; ++t) {
    double a = s.alpha[static_cast<size_t>(t)];
    CHECK(a > 0.0);
    CHECK(a < 1.0);
    CHECK(s.abar(t) < s.abar(t - 1));
    CHECK(s.abar(t) == s.abar(t - 1) * a);
  }
  CHECK(s.abar(100) > 0.0);
}

TEST_CASE("bad parameters are rejected") {
  CHECK_THROWS_AS(build_schedule(ScheduleKind::kLinearBeta, 0, 0.0, 1e-4, 0.2),
                  std::invalid_argument);
  CHECK_THROWS_AS(build_schedule(ScheduleKind::kLinearBeta, 50, -0.1, 1e-4, 0.2),
                  std::invalid_argument);
  CHECK_THROWS_AS(build_schedule(ScheduleKind::kLinearBeta, 50, 1.5, 1e-4, 0.2),
                  std::invalid_argument);
  CHECK_THROWS_AS(build_schedule(ScheduleKind::kLinearBeta, 50, 0.0, 0.3, 0.2),
                  std::invalid_argument);
  CHECK_THROWS_AS(build_schedule(ScheduleKind::kLinearBeta, 50, 0.0, 1e-4, 1.5),
                  std::invalid_argument);

  NoiseSchedule s = build_schedule(ScheduleKind::kLinearBeta, 10, 0.0, 1e-4, 0.2);
  CHECK_THROWS_AS(s.require_step(0), std::invalid_argument);
  CHECK_THROWS_AS(s.require_step(11), std::invalid_argument);
  CHECK_NOTHROW(s.require_step(10));
}

TEST_CASE("forward noising applies the closed form") {
  NoiseSchedule s = build_schedule(ScheduleKind::kLinearBeta, 50, 0.0, 1e-4, 0.2);
  Tensor z0({2}, {1.0, -2.0});
  Tensor eps({2}, {0.5, 0.25});
  int t = 30;
  Tensor zt = forward_noise(z0, t, eps, s);
  double sa = std::sqrt(s.abar(t)), sn = std::sqrt(1.0 - s.abar(t));
  CHECK(zt.data[0] == doctest::Approx(sa * 1.0 + sn * 0.5).epsilon(1e-15));
  CHECK(zt.data[1] == doctest::Approx(sa * -2.0 + sn * 0.25).epsilon(1e-15));
  CHECK_THROWS_AS(forward_noise(z0, 0, eps, s), std::invalid_argument);
}

TEST_CASE("score coefficient closes the last step onto clean data") {
  NoiseSchedule s = build_schedule(ScheduleKind::kLinearBeta, 50, 0.0, 1e-4, 0.2);
  for (int t : {1, 25, 50}) {
    double at = s.alpha[static_cast<size_t>(t)];
    double want = (1.0 - s.abar(t)) / std::sqrt(at) -
                  std::sqrt(1.0 - s.abar(t - 1)) * std::sqrt(1.0 - s.abar(t));
    CHECK(ddim_score_coeff(s, t) == doctest::Approx(want).epsilon(1e-14));
  }
  // At t = 1 the previous index is the clean-data slot: abar = 1, so the
  // epsilon branch vanishes and only the denoising term remains.
  CHECK(ddim_score_coeff(s, 1) ==
        doctest::Approx((1.0 - s.abar(1)) / std::sqrt(s.alpha[1])).epsilon(1e-14));
}

TEST_CASE("table dump is one full-precision row per step") {
  NoiseSchedule s = build_schedule(ScheduleKind::kLinearBeta, 5, 0.0, 1e-4, 0.2);
  std::string table = schedule_table(s);
  std::istringstream in(table);
  std::string line;
  int rows = 0, header = 0;
  while (std::getline(in, line)) {
    if (line.rfind("t ", 0) == 0 || line.find("alpha") != std::string::npos) {
      ++header;
      continue;
    }
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 5);
  // Full precision: parsing the abar column back reproduces the double.
  CHECK(table.find("0.99990000000000001") != std::string::npos);
}
