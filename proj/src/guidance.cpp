#include "advobj/guidance.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include "advobj/io.hpp"

namespace advobj {

double EnergyFunction::value(const Tensor& z0) const {
  Tensor out = fn.evaluate(z0);
  if (out.shape != Shape{1}) throw std::logic_error("energy: graph output is not scalar");
  return out.data[0];
}

Tensor EnergyFunction::gradient(const Tensor& z0) const { return fn.grad(z0); }

EnergyFunction quadratic_energy(const Tensor& center, Condition c) {
  FnBuilder fb;
  auto z = fb.input(center.shape);
  auto h = fb.scale(fb.sum(fb.square(fb.sub(z, fb.constant(center)))), 0.5);
  return EnergyFunction{fb.build(h), c};
}

AdversarialEnergy::AdversarialEnergy(const VictimModel& victim, Tensor x, Mask target,
                                     double lambda, std::optional<Mask> region, Condition c)
    : victim_(&victim),
      x_(std::move(x)),
      target_(std::move(target)),
      lambda_(lambda),
      region_(std::move(region)),
      ref_depth_(Tensor::scalar(0.0)),
      energy_{DifferentiableFn(), c} {
  rebuild();
}

void AdversarialEnergy::set_original(Tensor x) {
  x_ = std::move(x);
  rebuild();
}

void AdversarialEnergy::set_target(Mask target) {
  target_ = std::move(target);
  rebuild();
}

void AdversarialEnergy::rebuild() {
  ref_depth_ = masked_depth(*victim_, x_, target_);
  const Mask* region = region_ ? &*region_ : nullptr;
  energy_.fn = adv_loss_fn(*victim_, x_, target_, lambda_, region);
}

Tensor energy_gradient(const EnergyFunction& energy, const Tensor& z_t, int t,
                       const ScoreModel& model, const Condition& c,
                       const NoiseSchedule& sched) {
  sched.require_step(t);
  Tensor s = model.score(z_t, t, c);
  Tensor z0 = posterior_mean_from_score(z_t, t, s, sched);
  Tensor g0 = energy.gradient(z0);
  double abar = sched.abar(t);
  // d z_{0|t} / d z_t = (I + (1-abar) J_s) / sqrt(abar), applied transposed
  Tensor g = g0;
  axpy(g, 1.0 - abar, model.score_vjp(z_t, t, c, g0));
  g = scale(g, 1.0 / std::sqrt(abar));
  if (!g.all_finite()) {
    throw std::runtime_error("energy_gradient: non-finite gradient at energy value " +
                             fmt_g17(energy.value(z0)));
  }
  return g;
}

Tensor adv_delta(const AdversarialEnergy& energy, const Tensor& z_t, int t,
                 const ScoreModel& model, const Condition& c, const NoiseSchedule& sched) {
  return energy_gradient(energy.energy(), z_t, t, model, c, sched);
}

Tensor jvpg_direction(const ScoreModel& model, const Tensor& z_t, int t, const Condition& c,
                      const Tensor& delta) {
  require_same_shape(delta, z_t, "jvpg_direction");
#ifdef ADVOBJ_SHIFTED_LINEARIZATION
  return model.score_jvp(add(z_t, delta), t, c, delta);
#else
  return model.score_jvp(z_t, t, c, delta);
#endif
}

namespace {

StepRecord unguided_record(const ScoreModel& model, const Condition& c, const Tensor& z_t,
                           int t, const Tensor& eps, const NoiseSchedule& sched,
                           const EnergyFunction* energy) {
  StepRecord rec;
  rec.effective_score = model.score(z_t, t, c);
  rec.z0_hat = posterior_mean_from_score(z_t, t, rec.effective_score, sched);
  if (energy != nullptr) rec.energy = energy->value(rec.z0_hat);
  rec.z_next = ddim_step(z_t, t, rec.effective_score, eps, sched);
  return rec;
}

}  // namespace

StepRecord guided_step_record(const ScoreModel& model, const Condition& c, GuidanceMode mode,
                              double gamma, const EnergyFunction* energy, const Tensor& z_t,
                              int t, const Tensor& eps, const NoiseSchedule& sched,
                              bool norm_match) {
  sched.require_step(t);
  if (mode != GuidanceMode::kNone && energy == nullptr)
    throw std::invalid_argument("guided step: mode needs an energy function");
  if (mode == GuidanceMode::kNone || gamma == 0.0)
    return unguided_record(model, c, z_t, t, eps, sched, energy);

  StepRecord rec;
  Tensor s = model.score(z_t, t, c);
  rec.z0_hat = posterior_mean_from_score(z_t, t, s, sched);
  rec.energy = energy->value(rec.z0_hat);
  double abar = sched.abar(t);

  switch (mode) {
    case GuidanceMode::kEnergyDps: {
      Tensor g = energy_gradient(*energy, z_t, t, model, c, sched);
      rec.delta_norm = norm2(g);
      if (rec.delta_norm == 0.0) {
        rec.effective_score = std::move(s);
        break;
      }
      rec.guidance_norm = std::abs(gamma) * rec.delta_norm;
      rec.effective_score = std::move(s);
      axpy(rec.effective_score, -gamma, g);
      break;
    }
    case GuidanceMode::kJvpg: {
      Tensor delta = energy_gradient(*energy, z_t, t, model, c, sched);
      rec.delta_norm = norm2(delta);
      if (rec.delta_norm == 0.0) {
        rec.effective_score = std::move(s);
        break;
      }
      Tensor jdelta = jvpg_direction(model, z_t, t, c, delta);
      rec.jdelta_norm = norm2(jdelta);
      double g = gamma;
      if (norm_match && rec.jdelta_norm > 0.0) g = gamma * norm2(s) / rec.jdelta_norm;
      rec.guidance_norm = std::abs(g) * rec.jdelta_norm;
      rec.effective_score = std::move(s);
      axpy(rec.effective_score, -g, jdelta);
      break;
    }
    case GuidanceMode::kMpgd: {
      Tensor g0 = energy->gradient(rec.z0_hat);
      rec.delta_norm = norm2(g0);
      if (rec.delta_norm == 0.0) {
        rec.effective_score = std::move(s);
        break;
      }
      // shift the clean estimate, keep the model-implied noise, renoise:
      // z_t' = sqrt(abar)*(z0 - gamma*g0) + (z_t - sqrt(abar)*z0) = z_t - sqrt(abar)*gamma*g0
      rec.z0_guided = rec.z0_hat;
      axpy(rec.z0_guided, -gamma, g0);
      Tensor z_shift = z_t;
      axpy(z_shift, -std::sqrt(abar) * gamma, g0);
      rec.guidance_norm = std::sqrt(abar) * std::abs(gamma) * rec.delta_norm;
      rec.effective_score = model.score(z_shift, t, c);
      rec.z_next = ddim_step(z_shift, t, rec.effective_score, eps, sched);
      return rec;
    }
    case GuidanceMode::kNone:
      break;  // handled above
  }
  rec.z_next = ddim_step(z_t, t, rec.effective_score, eps, sched);
  return rec;
}

Tensor jvpg_step(const Tensor& z_t, int t, const ScoreModel& model, const Condition& c,
                 const EnergyFunction& energy, double gamma, const Tensor& eps,
                 const NoiseSchedule& sched) {
  return guided_step_record(model, c, GuidanceMode::kJvpg, gamma, &energy, z_t, t, eps, sched)
      .z_next;
}

Tensor baseline_dps_step(const Tensor& z_t, int t, const ScoreModel& model, const Condition& c,
                         const EnergyFunction& energy, double gamma, const Tensor& eps,
                         const NoiseSchedule& sched) {
  return guided_step_record(model, c, GuidanceMode::kEnergyDps, gamma, &energy, z_t, t, eps,
                            sched)
      .z_next;
}

Tensor baseline_mpgd_step(const Tensor& z_t, int t, const ScoreModel& model, const Condition& c,
                          const EnergyFunction& energy, double gamma, const Tensor& eps,
                          const NoiseSchedule& sched) {
  return guided_step_record(model, c, GuidanceMode::kMpgd, gamma, &energy, z_t, t, eps, sched)
      .z_next;
}

EnergyGuidanceHook::EnergyGuidanceHook(const ScoreModel& model, Condition c, GuidanceMode mode,
                                       double gamma, const EnergyFunction* energy,
                                       bool norm_match)
    : model_(&model),
      c_(c),
      mode_(mode),
      gamma_(gamma),
      energy_(energy),
      norm_match_(norm_match) {
  if (mode_ != GuidanceMode::kNone && energy_ == nullptr)
    throw std::invalid_argument("guidance hook: mode needs an energy function");
}

void EnergyGuidanceHook::set_inpaint_context(const Tensor* background, const Tensor* mask) {
  if ((background == nullptr) != (mask == nullptr))
    throw std::invalid_argument("guidance hook: background and mask must be set together");
  background_ = background;
  mask_ = mask;
  if (mask_ != nullptr) {
    if (mask_->shape.size() == 2 && model_->state_shape().size() == 3 &&
        mask_->shape[0] == model_->state_shape()[1] &&
        mask_->shape[1] == model_->state_shape()[2]) {
      mask_bc_ = broadcast_mask(*mask_, model_->state_shape()[0]);
    } else if (mask_->shape == model_->state_shape()) {
      mask_bc_ = *mask_;
    } else {
      throw std::invalid_argument("guidance hook: mask shape does not match the state");
    }
    if (background_->shape != model_->state_shape())
      throw std::invalid_argument("guidance hook: background shape does not match the state");
  }
}

StepRecord EnergyGuidanceHook::step(const Tensor& z_t, int t, const Tensor& eps) {
  return guided_step_record(*model_, c_, mode_, gamma_, energy_, z_t, t, eps,
                            model_->schedule(), norm_match_);
}

}  // namespace advobj
