#include <doctest.h>

#include <cmath>

#include "advobj/rng.hpp"
#include "advobj/spectra.hpp"
#include "support/testmodels.hpp"

using namespace advobj;
namespace tt = advobj::testing;

namespace {

NoiseSchedule sched50() { return build_schedule(ScheduleKind::kLinearBeta, 50, 0.0, 1e-4, 0.2); }

}  // namespace

TEST_CASE("explicit jacobian recovers a linear score exactly") {
  NoiseSchedule s = sched50();
  Rng rng(1);
  Tensor a = rng.normal_tensor({4, 4});
  tt::LinearScore m(a, s);
  Tensor zt = rng.normal_tensor({4});
  Tensor j = full_jacobian(m, zt, 10, Condition::none());
  CHECK(bit_equal(j, a));
}

TEST_CASE("gaussian score jacobian has eigenvalues -1/(abar*var + 1 - abar)") {
  NoiseSchedule s = sched50();
  MixtureComponent c;
  c.weight = 1.0;
  c.mean = Tensor({3}, {0.0, 1.0, -1.0});
  c.var = Tensor({3}, {4.0, 1.0, 0.25});
  GaussianMixtureScore m({c}, s);

  Rng rng(2);
  for (int t : {1, 25, 50}) {
    double ab = s.abar(t);
    Tensor zt = rng.normal_tensor({3});
    Tensor j = full_jacobian(m, zt, t, Condition::none());
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k) {
        double want = i == k ? -1.0 / (ab * c.var.data[static_cast<size_t>(i)] + 1.0 - ab) : 0.0;
        CHECK(std::abs(j.data[static_cast<size_t>(i) * 3 + k] - want) < 1e-10);
      }
  }
}

TEST_CASE("oversized states are pushed to the matrix-free path") {
  NoiseSchedule s = sched50();
  GaussianMixtureScore m = make_unit_gaussian_score({2048}, s);
  Tensor z = Tensor::zeros({2048});
  CHECK_THROWS_AS(full_jacobian(m, z, 10, Condition::none()), std::invalid_argument);
}

TEST_CASE("dense svd factors a hand matrix") {
  Tensor a({2, 2}, {3.0, 0.0, 0.0, -2.0});
  SpectralResult r = full_svd(a);
  REQUIRE(r.sigma.size() == 2);
  CHECK(r.sigma[0] == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(r.sigma[1] == doctest::Approx(2.0).epsilon(1e-14));

  // Each pair satisfies A*v = sigma*u.
  for (int i = 0; i < 2; ++i) {
    Tensor av = Tensor::zeros({2});
    for (int r_ = 0; r_ < 2; ++r_)
      for (int c_ = 0; c_ < 2; ++c_)
        av.data[static_cast<size_t>(r_)] +=
            a.data[static_cast<size_t>(r_) * 2 + c_] * r.v[static_cast<size_t>(i)].data[static_cast<size_t>(c_)];
    CHECK(norm2(sub(av, scale(r.u[static_cast<size_t>(i)], r.sigma[static_cast<size_t>(i)]))) <
          1e-12);
  }
  CHECK_THROWS_AS(full_svd(Tensor::zeros({2, 3})), std::invalid_argument);
}

TEST_CASE("power iteration finds both spectral ends of a diagonal score") {
  NoiseSchedule s = sched50();
  tt::LinearScore m = tt::LinearScore::diagonal({4.0, 1.0, 0.25}, s);
  Tensor zt = Tensor::zeros({3});

  SpectralResult top =
      extremal_singular(m, zt, 10, Condition::none(), SingularEnd::kTop, 5000, 1e-12, 3);
  CHECK(top.converged);
  CHECK(top.sigma[0] == doctest::Approx(4.0).epsilon(1e-9));
  CHECK(std::abs(top.v[0].data[0]) == doctest::Approx(1.0).epsilon(1e-6));

  SpectralResult bot =
      extremal_singular(m, zt, 10, Condition::none(), SingularEnd::kBottom, 20000, 1e-13, 3);
  CHECK(bot.converged);
  CHECK(bot.sigma[0] == doctest::Approx(0.25).epsilon(1e-8));
  CHECK(std::abs(bot.v[0].data[2]) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(top.sigma[0] >= bot.sigma[0]);

  // The returned pair satisfies J*v = sigma*u to working precision.
  Tensor jv = m.score_jvp(zt, 10, Condition::none(), top.v[0]);
  CHECK(norm2(sub(jv, scale(top.u[0], top.sigma[0]))) < 1e-8);

  CHECK_THROWS_AS(extremal_singular(m, zt, 10, Condition::none(), SingularEnd::kTop, 0, 1e-9, 3),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      extremal_singular(m, zt, 10, Condition::none(), SingularEnd::kTop, 10, 0.0, 3),
      std::invalid_argument);
}

TEST_CASE("matrix-free ends agree with the dense factorization on a network") {
  NoiseSchedule s = sched50();
  MlpScore m({3, 3}, 12, 1, s, 2025);
  Rng rng(4);
  Tensor zt = rng.normal_tensor({3, 3});
  int t = 20;

  Tensor j = full_jacobian(m, zt, t, Condition::none());
  SpectralResult dense = full_svd(j);

  SpectralResult top =
      extremal_singular(m, zt, t, Condition::none(), SingularEnd::kTop, 100000, 1e-12, 5);
  CHECK(top.converged);
  CHECK(std::abs(top.sigma[0] - dense.sigma.front()) < 1e-6);

  SpectralResult bot =
      extremal_singular(m, zt, t, Condition::none(), SingularEnd::kBottom, 200000, 1e-12, 5);
  CHECK(bot.converged);
  CHECK(std::abs(bot.sigma[0] - dense.sigma.back()) < 1e-6);
  CHECK(top.sigma[0] >= bot.sigma[0]);
}

TEST_CASE("isotropic scores make every direction singular") {
  NoiseSchedule s = sched50();
  GaussianMixtureScore m = make_unit_gaussian_score({4}, s);
  Tensor zt = Tensor::zeros({4});
  SpectralResult top =
      extremal_singular(m, zt, 30, Condition::none(), SingularEnd::kTop, 100, 1e-12, 6);
  SpectralResult bot =
      extremal_singular(m, zt, 30, Condition::none(), SingularEnd::kBottom, 5000, 1e-12, 6);
  CHECK(top.sigma[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(bot.sigma[0] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("direction injection replays the sampler exactly at magnitude zero") {
  NoiseSchedule s = sched50();
  MixtureComponent c;
  c.weight = 1.0;
  c.mean = Tensor({2}, {1.0, -1.0});
  c.var = Tensor({2}, {2.0, 0.5});
  GaussianMixtureScore m({c}, s);

  SamplerConfig cfg;
  cfg.sched = &s;
  cfg.seed = 91;

  Tensor dir({2}, {1.0, 0.0});
  InjectionRecord rec = inject_direction(m, Condition::none(), cfg, 25, dir, 0.0);
  Trajectory traj = sample(m, Condition::none(), cfg);
  CHECK(bit_equal(rec.terminal, traj.terminal()));
  CHECK(rec.log_density == doctest::Approx(m.log_density0(traj.terminal())).epsilon(1e-15));

  // A real kick changes the terminal and its density.
  InjectionRecord kicked = inject_direction(m, Condition::none(), cfg, 25, dir, 3.0);
  CHECK_FALSE(bit_equal(kicked.terminal, rec.terminal));

  // Opposite kicks land on opposite sides; along the low-variance axis the
  // density penalty is symmetric and strictly worse than no kick.
  Tensor dir1({2}, {0.0, 1.0});
  InjectionRecord up = inject_direction(m, Condition::none(), cfg, 25, dir1, 4.0);
  InjectionRecord dn = inject_direction(m, Condition::none(), cfg, 25, dir1, -4.0);
  CHECK(up.log_density < rec.log_density);
  CHECK(dn.log_density < rec.log_density);
}

TEST_CASE("injection rejects malformed requests") {
  NoiseSchedule s = sched50();
  GaussianMixtureScore m = make_unit_gaussian_score({2}, s);
  SamplerConfig cfg;
  cfg.sched = &s;
  cfg.seed = 1;
  Tensor dir({2}, {1.0, 0.0});

  SamplerConfig guided = cfg;
  guided.mode = GuidanceMode::kJvpg;
  CHECK_THROWS_AS(inject_direction(m, Condition::none(), guided, 10, dir, 1.0),
                  std::invalid_argument);
  SamplerConfig reproj = cfg;
  reproj.mask_reproject = true;
  CHECK_THROWS_AS(inject_direction(m, Condition::none(), reproj, 10, dir, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(inject_direction(m, Condition::none(), cfg, 0, dir, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(inject_direction(m, Condition::none(), cfg, 51, dir, 1.0),
                  std::invalid_argument);
  Tensor long_dir({2}, {2.0, 0.0});
  CHECK_THROWS_AS(inject_direction(m, Condition::none(), cfg, 10, long_dir, 1.0),
                  std::invalid_argument);

  NoiseSchedule s2 = sched50();
  MlpScore nn({2}, 4, 1, s2, 3);
  CHECK_THROWS_AS(inject_direction(nn, Condition::none(), cfg, 10, dir, 1.0),
                  std::logic_error);
}
