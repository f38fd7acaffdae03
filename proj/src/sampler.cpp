#include "advobj/sampler.hpp"

#include <cmath>

#include "advobj/rng.hpp"

namespace advobj {

const char* guidance_mode_name(GuidanceMode m) {
  switch (m) {
    case GuidanceMode::kNone: return "none";
    case GuidanceMode::kEnergyDps: return "energy_dps";
    case GuidanceMode::kMpgd: return "mpgd";
    case GuidanceMode::kJvpg: return "jvpg";
  }
  return "?";
}

GuidanceMode parse_guidance_mode(const std::string& name) {
  if (name == "none") return GuidanceMode::kNone;
  if (name == "energy_dps") return GuidanceMode::kEnergyDps;
  if (name == "mpgd") return GuidanceMode::kMpgd;
  if (name == "jvpg") return GuidanceMode::kJvpg;
  throw std::invalid_argument("guidance mode '" + name +
                              "' not one of none|energy_dps|mpgd|jvpg");
}

Tensor ddim_step(const Tensor& z_t, int t, const Tensor& score, const Tensor& eps,
                 const NoiseSchedule& sched) {
  sched.require_step(t);
  require_same_shape(z_t, score, "ddim_step score");
  require_same_shape(z_t, eps, "ddim_step eps");
  double at = sched.alpha[static_cast<size_t>(t)];
  double sg = sched.sigma[static_cast<size_t>(t)];
  double coeff = ddim_score_coeff(sched, t);  // rejects sigma_t^2 > 1-abar_{t-1}
  Tensor out = scale(z_t, 1.0 / std::sqrt(at));
  if (sg != 0.0) axpy(out, sg, eps);
  axpy(out, coeff, score);
  return out;
}

Tensor posterior_mean_from_score(const Tensor& z_t, int t, const Tensor& score,
                                 const NoiseSchedule& sched) {
  sched.require_step(t);
  require_same_shape(z_t, score, "posterior_mean score");
  double ab = sched.abar(t);
  Tensor out = z_t;
  axpy(out, 1.0 - ab, score);
  return scale(out, 1.0 / std::sqrt(ab));
}

Tensor posterior_mean(const Tensor& z_t, int t, const ScoreModel& model, const Condition& c,
                      const NoiseSchedule& sched) {
  return posterior_mean_from_score(z_t, t, model.score(z_t, t, c), sched);
}

Trajectory sample(const ScoreModel& model, const Condition& c, const SamplerConfig& cfg,
                  GuidanceHook* hook) {
  if (cfg.sched == nullptr) throw std::invalid_argument("sample: config carries no schedule");
  const NoiseSchedule& sched = *cfg.sched;
  const Shape& shape = model.state_shape();
  bool reproject = cfg.mask_reproject;
  const Tensor* bg = hook ? hook->background() : nullptr;
  const Tensor* region = hook ? hook->region_mask() : nullptr;
  if (reproject && (bg == nullptr || region == nullptr))
    throw std::invalid_argument("sample: mask re-projection needs a hook with background and mask");

  Trajectory traj;
  traj.states.resize(static_cast<size_t>(sched.T) + 1);
  traj.steps.resize(static_cast<size_t>(sched.T) + 1);

  Rng rng(derive_seed(cfg.seed, "trajectory"));
  Tensor z = rng.normal_tensor(shape);
  traj.states[static_cast<size_t>(sched.T)] = z;

  for (int t = sched.T; t >= 1; --t) {
    Tensor eps = rng.normal_tensor(shape);
    StepRecord rec;
    if (hook) {
      rec = hook->step(z, t, eps);
    } else {
      Tensor s = model.score(z, t, c);
      rec.z0_hat = posterior_mean_from_score(z, t, s, sched);
      rec.z_next = ddim_step(z, t, s, eps, sched);
      rec.effective_score = std::move(s);
    }
    if (reproject) {
      Tensor eps2 = rng.normal_tensor(shape);
      Tensor filled = t - 1 == 0 ? *bg : forward_noise(*bg, t - 1, eps2, sched);
      for (size_t i = 0; i < rec.z_next.data.size(); ++i) {
        double m = region->data[i];
        rec.z_next.data[i] = m * rec.z_next.data[i] + (1.0 - m) * filled.data[i];
      }
    }
    if (!rec.z_next.all_finite()) {
      traj.steps[static_cast<size_t>(t)] = std::move(rec);
      throw SampleAbort(t, std::move(traj),
                        "sample: non-finite state after step t = " + std::to_string(t));
    }
    z = rec.z_next;
    traj.states[static_cast<size_t>(t - 1)] = z;
    traj.steps[static_cast<size_t>(t)] = std::move(rec);
  }
  return traj;
}

}  // namespace advobj
