#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "advobj/graph.hpp"
#include "advobj/schedule.hpp"
#include "advobj/tensor.hpp"

namespace advobj {

// Discrete stand-in for a text condition: a class index selecting one mixture
// component / scene template; empty means unconditional.
struct Condition {
  std::optional<int> label;

  static Condition none() { return {}; }
  static Condition cls(int k) { return Condition{k}; }
};

// Score network interface: s(z_t, t | c) plus directional derivatives through
// it. Implementations are immutable after construction and safe to evaluate
// concurrently.
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;
  virtual const Shape& state_shape() const = 0;
  virtual const NoiseSchedule& schedule() const = 0;
  virtual Tensor score(const Tensor& z, int t, const Condition& c) const = 0;
  // J_s(z,t|c) * v
  virtual Tensor score_jvp(const Tensor& z, int t, const Condition& c, const Tensor& v) const = 0;
  // J_s(z,t|c)^T * w
  virtual Tensor score_vjp(const Tensor& z, int t, const Condition& c, const Tensor& w) const = 0;
  // log density of the clean-data law; only analytic models can provide it.
  virtual double log_density0(const Tensor& z0) const;
};

struct MixtureComponent {
  double weight = 1.0;
  Tensor mean;
  Tensor var;  // diagonal covariance entries, shaped like mean, all > 0
};

// Exact score of a diagonal-covariance Gaussian mixture noised to step t: the
// marginal of component k is Gaussian with diag covariance
// abar_t*var_k + (1-abar_t) and mean sqrt(abar_t)*mu_k, so responsibilities,
// score, and the (symmetric) score Jacobian all have closed forms. With a class
// label only that component contributes.
class GaussianMixtureScore : public ScoreModel {
 public:
  GaussianMixtureScore(std::vector<MixtureComponent> components, NoiseSchedule sched);

  const Shape& state_shape() const override { return components_[0].mean.shape; }
  const NoiseSchedule& schedule() const override { return sched_; }
  Tensor score(const Tensor& z, int t, const Condition& c) const override;
  Tensor score_jvp(const Tensor& z, int t, const Condition& c, const Tensor& v) const override;
  Tensor score_vjp(const Tensor& z, int t, const Condition& c, const Tensor& w) const override;
  double log_density0(const Tensor& z0) const override;

  int num_components() const { return static_cast<int>(components_.size()); }
  const MixtureComponent& component(int k) const { return components_[static_cast<size_t>(k)]; }
  // Draw z0 from the data law (component by weight unless conditioned).
  Tensor sample_data(class Rng& rng, const Condition& c) const;

 private:
  struct Posterior {
    std::vector<double> resp;        // responsibilities over active components
    std::vector<int> active;         // component indices
    std::vector<Tensor> comp_score;  // per active component
    Tensor score;
  };
  Posterior posterior(const Tensor& z, int t, const Condition& c) const;
  void check_condition(const Condition& c) const;

  std::vector<MixtureComponent> components_;
  NoiseSchedule sched_;
};

// Unit-Gaussian convenience (score -z at every step).
GaussianMixtureScore make_unit_gaussian_score(const Shape& shape, NoiseSchedule sched);

// Small dense score network: per (t, c) the map z -> score is the recorded
// graph tanh layer between two affine maps, with step and class entering
// through extra input coordinates held constant. Exposing that graph gives
// exact jvp/vjp through the network.
class MlpScore : public ScoreModel {
 public:
  MlpScore(Shape state_shape, int hidden, int num_classes, NoiseSchedule sched,
           std::uint64_t init_seed, double init_scale = 0.1);

  const Shape& state_shape() const override { return shape_; }
  const NoiseSchedule& schedule() const override { return sched_; }
  Tensor score(const Tensor& z, int t, const Condition& c) const override;
  Tensor score_jvp(const Tensor& z, int t, const Condition& c, const Tensor& v) const override;
  Tensor score_vjp(const Tensor& z, int t, const Condition& c, const Tensor& w) const override;

  // z -> s(z, t | c) with the current weights baked in as constants.
  DifferentiableFn score_fn(int t, const Condition& c) const;

  int hidden() const { return hidden_; }
  int num_classes() const { return num_classes_; }
  int state_dim() const { return n_; }
  int feature_dim() const { return 4 + num_classes_; }
  // Step/class feature vector appended to the flattened state.
  Tensor features(int t, const Condition& c) const;

  // Weight tensors: w1 (hidden, n+F), b1 (hidden), w2 (n, hidden), b2 (n).
  const Tensor& w1() const { return w1_; }
  const Tensor& b1() const { return b1_; }
  const Tensor& w2() const { return w2_; }
  const Tensor& b2() const { return b2_; }
  void set_weights(Tensor w1, Tensor b1, Tensor w2, Tensor b2);

 private:
  Shape shape_;
  int n_ = 0, hidden_ = 0, num_classes_ = 0;
  NoiseSchedule sched_;
  Tensor w1_, b1_, w2_, b2_;
};

struct DsmResult {
  MlpScore model;
  std::vector<double> loss_trace;  // one entry per optimization step
};

// Stochastic denoising-score-matching: each step draws (z0, t, eps), forms
// z_t, and regresses the model output toward -eps/sqrt(1-abar_t) under the
// squared loss weighted by (1-abar_t), by one plain SGD update on all weights.
// Non-finite loss aborts with the trace tail in the message.
DsmResult dsm_train(const MlpScore& init, const std::vector<Tensor>& dataset,
                    const NoiseSchedule& sched, int steps, double lr, std::uint64_t seed);

}  // namespace advobj
