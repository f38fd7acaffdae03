#include "advobj/schedule.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "advobj/io.hpp"

namespace advobj {
namespace {

constexpr double kPi = 3.14159265358979323846;

void validate(const NoiseSchedule& s) {
  for (int t = 1; t <= s.T; ++t) {
    double a = s.alpha[static_cast<size_t>(t)];
    if (!(a > 0.0 && a < 1.0))
      throw std::invalid_argument("schedule: alpha_" + std::to_string(t) + " = " + fmt_g17(a) +
                                  " outside (0,1)");
    if (!(s.abar(t) < s.abar(t - 1)))
      throw std::invalid_argument("schedule: alpha_bar not strictly decreasing at t = " +
                                  std::to_string(t));
    double limit = 1.0 - s.abar(t - 1);
    double sg = s.sigma[static_cast<size_t>(t)];
    if (sg * sg > limit)
      throw std::invalid_argument("schedule: sigma_" + std::to_string(t) +
                                  " exceeds sqrt(1-alpha_bar_{t-1})");
  }
}

}  // namespace

NoiseSchedule build_schedule(ScheduleKind kind, int T, double eta_ddim, double p1, double p2) {
  if (T < 1) throw std::invalid_argument("schedule: T must be >= 1");
  if (eta_ddim < 0.0 || eta_ddim > 1.0)
    throw std::invalid_argument("schedule: eta must lie in [0,1]");

  NoiseSchedule s;
  s.T = T;
  s.alpha.assign(static_cast<size_t>(T) + 1, 1.0);
  s.alpha_bar.assign(static_cast<size_t>(T) + 1, 1.0);
  s.sigma.assign(static_cast<size_t>(T) + 1, 0.0);

  if (kind == ScheduleKind::kLinearBeta) {
    double b0 = p1, b1 = p2;
    if (!(b0 > 0.0 && b0 <= b1 && b1 < 1.0))
      throw std::invalid_argument("schedule: need 0 < beta_start <= beta_end < 1");
    for (int t = 1; t <= T; ++t) {
      double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / (T - 1);
      s.alpha[static_cast<size_t>(t)] = 1.0 - (b0 + (b1 - b0) * frac);
    }
  } else {
    double off = p1 > 0.0 ? p1 : 0.008;  // p2 unused for cosine
    (void)p2;
    auto profile = [&](double u) {
      double c = std::cos((u + off) / (1.0 + off) * kPi / 2.0);
      return c * c;
    };
    double f0 = profile(0.0);
    double prev = 1.0;
    for (int t = 1; t <= T; ++t) {
      double cur = profile(static_cast<double>(t) / T) / f0;
      double a = cur / prev;
      s.alpha[static_cast<size_t>(t)] = std::min(std::max(a, 1e-3), 1.0 - 1e-5);
      prev = cur;
    }
  }

  for (int t = 1; t <= T; ++t) {
    s.alpha_bar[static_cast<size_t>(t)] = s.abar(t - 1) * s.alpha[static_cast<size_t>(t)];
    double num = 1.0 - s.abar(t - 1);
    double den = 1.0 - s.abar(t);
    s.sigma[static_cast<size_t>(t)] =
        eta_ddim * std::sqrt(num / den) * std::sqrt(1.0 - s.alpha[static_cast<size_t>(t)]);
  }

  validate(s);
  return s;
}

Tensor forward_noise(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& sched) {
  sched.require_step(t);
  require_same_shape(z0, eps, "forward_noise");
  double ab = sched.abar(t);
  Tensor out = scale(z0, std::sqrt(ab));
  axpy(out, std::sqrt(1.0 - ab), eps);
  return out;
}

double ddim_score_coeff(const NoiseSchedule& sched, int t) {
  sched.require_step(t);
  double at = sched.alpha[static_cast<size_t>(t)];
  double abt = sched.abar(t);
  double abp = sched.abar(t - 1);
  double sg = sched.sigma[static_cast<size_t>(t)];
  double under = 1.0 - abp - sg * sg;
  if (under < 0.0)
    throw std::invalid_argument("ddim: sigma_t^2 exceeds 1-alpha_bar_{t-1} at t = " +
                                std::to_string(t));
  return (1.0 - abt) / std::sqrt(at) - std::sqrt(under) * std::sqrt(1.0 - abt);
}

std::string schedule_table(const NoiseSchedule& sched) {
  std::ostringstream out;
  out << "t alpha alpha_bar sigma\n";
  for (int t = 1; t <= sched.T; ++t)
    out << t << " " << fmt_g17(sched.alpha[static_cast<size_t>(t)]) << " "
        << fmt_g17(sched.abar(t)) << " " << fmt_g17(sched.sigma[static_cast<size_t>(t)]) << "\n";
  return out.str();
}

}  // namespace advobj
