#pragma once

#include <optional>

#include "advobj/sampler.hpp"
#include "advobj/schedule.hpp"
#include "advobj/scoremodels.hpp"
#include "advobj/tensor.hpp"
#include "advobj/victim.hpp"

namespace advobj {

// Scalar objective over clean-space states, differentiated by its recorded
// graph. The condition rides along as metadata for class-aware objectives.
struct EnergyFunction {
  DifferentiableFn fn;  // clean tensor -> scalar
  Condition condition = Condition::none();

  double value(const Tensor& z0) const;
  Tensor gradient(const Tensor& z0) const;
};

// h(z0) = 0.5*||z0 - center||^2.
EnergyFunction quadratic_energy(const Tensor& center, Condition c = Condition::none());

// Depth-attack objective ||m.(f(z) - lambda*f(x))||^2 over candidates z.
// Holds the original image and the cached masked reference depth; both are
// baked into the recorded graph, so any change to x or the target mask
// rebuilds it. With a region mask set, the candidate is composited onto the
// original outside the region before the victim sees it, so the gradient
// lives only inside the region.
class AdversarialEnergy {
 public:
  // victim must outlive this object.
  AdversarialEnergy(const VictimModel& victim, Tensor x, Mask target, double lambda,
                    std::optional<Mask> region = std::nullopt,
                    Condition c = Condition::none());

  void set_original(Tensor x);
  void set_target(Mask target);

  const VictimModel& victim() const { return *victim_; }
  const Tensor& original() const { return x_; }
  const Mask& target() const { return target_; }
  double lambda() const { return lambda_; }
  const Tensor& reference_depth() const { return ref_depth_; }
  const EnergyFunction& energy() const { return energy_; }

  double loss(const Tensor& z0) const { return energy_.value(z0); }

 private:
  void rebuild();

  const VictimModel* victim_;
  Tensor x_;
  Mask target_;
  double lambda_;
  std::optional<Mask> region_;
  Tensor ref_depth_;  // masked depth of x, refreshed by rebuild()
  EnergyFunction energy_;
};

// Gradient of z_t -> h(posterior_mean(z_t)); the chain rule runs through the
// score model: (g0 + (1-abar)*vjp(g0)) / sqrt(abar) with g0 the clean-space
// gradient at z_{0|t}.
Tensor energy_gradient(const EnergyFunction& energy, const Tensor& z_t, int t,
                       const ScoreModel& model, const Condition& c, const NoiseSchedule& sched);

// Same chain, with the depth-attack objective: the direction the guided
// samplers reshape.
Tensor adv_delta(const AdversarialEnergy& energy, const Tensor& z_t, int t,
                 const ScoreModel& model, const Condition& c, const NoiseSchedule& sched);

// J_s(z_t, t | c) * delta, the score-Jacobian image of the raw direction.
// Built ADVOBJ_SHIFTED_LINEARIZATION-on, the Jacobian is taken at z_t + delta
// instead (experimental alternative reading; off by default).
Tensor jvpg_direction(const ScoreModel& model, const Tensor& z_t, int t, const Condition& c,
                      const Tensor& delta);

// One reverse transition with the chosen guidance applied. Returns the full
// record (next state, effective score, diagnostics). gamma = 0 and a vanishing
// direction both reproduce the unguided transition bit for bit. energy may be
// null only for mode none. norm_match rescales gamma per step by
// ||score|| / ||J*delta|| (Jacobian-modulated mode only).
StepRecord guided_step_record(const ScoreModel& model, const Condition& c, GuidanceMode mode,
                              double gamma, const EnergyFunction* energy, const Tensor& z_t,
                              int t, const Tensor& eps, const NoiseSchedule& sched,
                              bool norm_match = false);

// Convenience wrappers returning just z_{t-1}.
Tensor jvpg_step(const Tensor& z_t, int t, const ScoreModel& model, const Condition& c,
                 const EnergyFunction& energy, double gamma, const Tensor& eps,
                 const NoiseSchedule& sched);
Tensor baseline_dps_step(const Tensor& z_t, int t, const ScoreModel& model, const Condition& c,
                         const EnergyFunction& energy, double gamma, const Tensor& eps,
                         const NoiseSchedule& sched);
Tensor baseline_mpgd_step(const Tensor& z_t, int t, const ScoreModel& model, const Condition& c,
                          const EnergyFunction& energy, double gamma, const Tensor& eps,
                          const NoiseSchedule& sched);

// sample() strategy driving guided_step_record each step. Optionally carries
// the inpainting context (background + changeable-region mask) consumed when
// the sampler re-projects.
class EnergyGuidanceHook : public GuidanceHook {
 public:
  EnergyGuidanceHook(const ScoreModel& model, Condition c, GuidanceMode mode, double gamma,
                     const EnergyFunction* energy, bool norm_match = false);

  // Both tensors must outlive the hook; mask is broadcast to the state shape.
  void set_inpaint_context(const Tensor* background, const Tensor* mask);

  StepRecord step(const Tensor& z_t, int t, const Tensor& eps) override;
  const Tensor* background() const override { return background_; }
  const Tensor* region_mask() const override { return mask_ ? &mask_bc_ : nullptr; }

  GuidanceMode mode() const { return mode_; }
  double gamma() const { return gamma_; }

 private:
  const ScoreModel* model_;
  Condition c_;
  GuidanceMode mode_;
  double gamma_;
  const EnergyFunction* energy_;
  bool norm_match_;
  const Tensor* background_ = nullptr;
  const Tensor* mask_ = nullptr;
  Tensor mask_bc_;
};

}  // namespace advobj
