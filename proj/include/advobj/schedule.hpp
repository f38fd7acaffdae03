#pragma once

#include <string>
#include <vector>

#include "advobj/tensor.hpp"

namespace advobj {

enum class ScheduleKind { kLinearBeta, kCosine };

// Per-step diffusion coefficient tables, indexed by t = 1..T. Index 0 is the
// clean-data convention slot: alpha_bar[0] = 1 and sigma[0] = 0, so the final
// reverse step lands on clean data.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> alpha;      // alpha[t], t = 1..T; alpha[0] = 1 unused
  std::vector<double> alpha_bar;  // running product, alpha_bar[0] = 1
  std::vector<double> sigma;      // per-step noise scale, sigma[0] = 0

  double abar(int t) const { return alpha_bar[static_cast<size_t>(t)]; }

  void require_step(int t) const {
    if (t < 1 || t > T)
      throw std::invalid_argument("schedule: step " + std::to_string(t) + " outside 1.." +
                                  std::to_string(T));
  }
};

// linear_beta: params = (beta_start, beta_end), betas linearly spaced over T
// steps, alpha_t = 1 - beta_t. cosine: squared-cosine cumulative profile with
// smoothing offset params.first (0 selects the standard 0.008); per-step alphas
// clamped away from {0,1} before the running product is rebuilt, so the
// alpha_bar recurrence holds exactly. The per-step noise scale follows the
// deterministic-to-ancestral interpolation sigma_t =
// eta*sqrt((1-abar_{t-1})/(1-abar_t))*sqrt(1-alpha_t), eta in [0,1].
NoiseSchedule build_schedule(ScheduleKind kind, int T, double eta_ddim, double p1, double p2);

// z_t = sqrt(abar_t)*z0 + sqrt(1-abar_t)*eps, t = 1..T.
Tensor forward_noise(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& sched);

// Coefficient on the score in the reverse update at step t (the bracket of the
// update rule); exposed so closed-form guidance tests can reuse it.
double ddim_score_coeff(const NoiseSchedule& sched, int t);

// Plain text table "t alpha alpha_bar sigma", one row per step, full precision.
std::string schedule_table(const NoiseSchedule& sched);

}  // namespace advobj
