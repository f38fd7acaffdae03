#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "advobj/schedule.hpp"
#include "advobj/scoremodels.hpp"
#include "advobj/tensor.hpp"

namespace advobj {

enum class GuidanceMode { kNone, kEnergyDps, kMpgd, kJvpg };

const char* guidance_mode_name(GuidanceMode m);
GuidanceMode parse_guidance_mode(const std::string& name);

struct SamplerConfig {
  const NoiseSchedule* sched = nullptr;
  GuidanceMode mode = GuidanceMode::kNone;
  double gamma = 0.0;
  std::uint64_t seed = 0;
  bool mask_reproject = false;
};

// Everything one reverse transition produced. effective_score is the tensor
// actually fed to the update rule, so tests can assert the guidance
// decomposition exactly; z0_guided is filled only by the clean-space guidance
// variant (the shifted clean state before renoising).
struct StepRecord {
  Tensor z_next;
  Tensor effective_score;
  Tensor z0_hat;
  Tensor z0_guided;
  double energy = std::numeric_limits<double>::quiet_NaN();
  double guidance_norm = 0.0;
  double delta_norm = 0.0;
  double jdelta_norm = 0.0;
};

// Strategy plugged into sample(): owns the whole t -> t-1 transition so that
// score-space and clean-space guidance variants fit one interface. When gamma
// is zero or the guidance direction vanishes, implementations must reproduce
// the unguided update bit for bit.
class GuidanceHook {
 public:
  virtual ~GuidanceHook() = default;
  virtual StepRecord step(const Tensor& z_t, int t, const Tensor& eps) = 0;
  // Inpainting context for per-step mask re-projection; both non-null enables.
  virtual const Tensor* background() const { return nullptr; }       // original image
  virtual const Tensor* region_mask() const { return nullptr; }      // 1 where content may change
};

struct Trajectory {
  std::vector<Tensor> states;     // states[t] = z_t for t = 0..T
  std::vector<StepRecord> steps;  // steps[t] covers the t -> t-1 transition; steps[0] unused

  const Tensor& terminal() const { return states.front(); }
  int num_steps() const { return static_cast<int>(states.size()) - 1; }
};

// Thrown when a state goes non-finite mid-run; carries everything produced up
// to the failing step.
struct SampleAbort : std::runtime_error {
  SampleAbort(int step_in, Trajectory prefix_in, const std::string& msg)
      : std::runtime_error(msg), step(step_in), prefix(std::move(prefix_in)) {}
  int step;
  Trajectory prefix;
};

// One reverse transition: z_{t-1} = z_t/sqrt(alpha_t) + sigma_t*eps + c_t*score
// with c_t the schedule's score coefficient and alpha_bar_0 = 1 closing the
// last step.
Tensor ddim_step(const Tensor& z_t, int t, const Tensor& score, const Tensor& eps,
                 const NoiseSchedule& sched);

// Denoised estimate z_{0|t} = (z_t + (1-abar_t)*score)/sqrt(abar_t).
Tensor posterior_mean_from_score(const Tensor& z_t, int t, const Tensor& score,
                                 const NoiseSchedule& sched);
Tensor posterior_mean(const Tensor& z_t, int t, const ScoreModel& model, const Condition& c,
                      const NoiseSchedule& sched);

// Reverse run from a fresh standard-normal draw. Randomness is one stream
// derived from cfg.seed with a fixed draw order: the initial state, then one
// eps per step, then one extra draw per step while re-projection is active —
// so replayers can reproduce trajectories draw for draw. With re-projection
// on, content outside the hook's region mask is overwritten each step by the
// forward-noised background (the background itself at t = 0).
Trajectory sample(const ScoreModel& model, const Condition& c, const SamplerConfig& cfg,
                  GuidanceHook* hook = nullptr);

}  // namespace advobj
