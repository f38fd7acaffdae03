#include "advobj/scoremodels.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "advobj/rng.hpp"

namespace advobj {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

}  // namespace

double ScoreModel::log_density0(const Tensor&) const {
  throw std::logic_error("log_density0: unavailable for non-analytic score models");
}

// ---------------------------------------------------------------------------
// GaussianMixtureScore

GaussianMixtureScore::GaussianMixtureScore(std::vector<MixtureComponent> components,
                                           NoiseSchedule sched)
    : components_(std::move(components)), sched_(std::move(sched)) {
  if (components_.empty()) throw std::invalid_argument("mixture: needs at least one component");
  double total = 0.0;
  for (const auto& comp : components_) {
    if (comp.weight <= 0.0) throw std::invalid_argument("mixture: weights must be positive");
    require_same_shape(comp.mean, components_[0].mean, "mixture component mean");
    require_same_shape(comp.var, comp.mean, "mixture component var");
    for (double v : comp.var.data)
      if (v <= 0.0) throw std::invalid_argument("mixture: variances must be positive");
    total += comp.weight;
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw std::invalid_argument("mixture: weights must sum to 1, got " + std::to_string(total));
}

void GaussianMixtureScore::check_condition(const Condition& c) const {
  if (c.label && (*c.label < 0 || *c.label >= num_components()))
    throw std::invalid_argument("condition: label " + std::to_string(*c.label) +
                                " outside 0.." + std::to_string(num_components() - 1));
}

GaussianMixtureScore::Posterior GaussianMixtureScore::posterior(const Tensor& z, int t,
                                                                const Condition& c) const {
  sched_.require_step(t);
  check_condition(c);
  require_same_shape(z, components_[0].mean, "score input");
  Posterior post;
  if (c.label) {
    post.active = {*c.label};
  } else {
    post.active.resize(components_.size());
    for (size_t k = 0; k < components_.size(); ++k) post.active[k] = static_cast<int>(k);
  }

  double ab = sched_.abar(t);
  double sab = std::sqrt(ab);
  std::vector<double> logw(post.active.size());
  post.comp_score.resize(post.active.size());
  for (size_t i = 0; i < post.active.size(); ++i) {
    const MixtureComponent& comp = components_[static_cast<size_t>(post.active[i])];
    double lw = std::log(comp.weight);
    Tensor cs = Tensor::zeros(z.shape);
    for (size_t j = 0; j < z.data.size(); ++j) {
      double sj = ab * comp.var.data[j] + (1.0 - ab);  // marginal diag covariance
      double dz = z.data[j] - sab * comp.mean.data[j];
      lw -= 0.5 * (kLog2Pi + std::log(sj) + dz * dz / sj);
      cs.data[j] = -dz / sj;
    }
    logw[i] = lw;
    post.comp_score[i] = std::move(cs);
  }

  double mx = logw[0];
  for (double lw : logw) mx = std::max(mx, lw);
  double denom = 0.0;
  for (double lw : logw) denom += std::exp(lw - mx);
  post.resp.resize(logw.size());
  post.score = Tensor::zeros(z.shape);
  for (size_t i = 0; i < logw.size(); ++i) {
    post.resp[i] = std::exp(logw[i] - mx) / denom;
    axpy(post.score, post.resp[i], post.comp_score[i]);
  }
  return post;
}

Tensor GaussianMixtureScore::score(const Tensor& z, int t, const Condition& c) const {
  return posterior(z, t, c).score;
}

// J*v where J = sum_k r_k (s_k s_k^T - S_k^{-1}) - s s^T; symmetric, so the
// transpose product is the same map.
Tensor GaussianMixtureScore::score_jvp(const Tensor& z, int t, const Condition& c,
                                       const Tensor& v) const {
  require_same_shape(v, z, "score_jvp tangent");
  Posterior post = posterior(z, t, c);
  double ab = sched_.abar(t);
  Tensor out = Tensor::zeros(z.shape);
  for (size_t i = 0; i < post.active.size(); ++i) {
    const MixtureComponent& comp = components_[static_cast<size_t>(post.active[i])];
    double along = dot(post.comp_score[i], v) - dot(post.score, v);
    axpy(out, post.resp[i] * along, post.comp_score[i]);
    for (size_t j = 0; j < out.data.size(); ++j) {
      double sj = ab * comp.var.data[j] + (1.0 - ab);
      out.data[j] -= post.resp[i] * v.data[j] / sj;
    }
  }
  return out;
}

Tensor GaussianMixtureScore::score_vjp(const Tensor& z, int t, const Condition& c,
                                       const Tensor& w) const {
  return score_jvp(z, t, c, w);
}

double GaussianMixtureScore::log_density0(const Tensor& z0) const {
  require_same_shape(z0, components_[0].mean, "log_density0 input");
  std::vector<double> logw(components_.size());
  for (size_t k = 0; k < components_.size(); ++k) {
    const MixtureComponent& comp = components_[k];
    double lw = std::log(comp.weight);
    for (size_t j = 0; j < z0.data.size(); ++j) {
      double dz = z0.data[j] - comp.mean.data[j];
      lw -= 0.5 * (kLog2Pi + std::log(comp.var.data[j]) + dz * dz / comp.var.data[j]);
    }
    logw[k] = lw;
  }
  double mx = logw[0];
  for (double lw : logw) mx = std::max(mx, lw);
  double acc = 0.0;
  for (double lw : logw) acc += std::exp(lw - mx);
  return mx + std::log(acc);
}

Tensor GaussianMixtureScore::sample_data(Rng& rng, const Condition& c) const {
  check_condition(c);
  int k;
  if (c.label) {
    k = *c.label;
  } else {
    double u = rng.uniform();
    double acc = 0.0;
    k = num_components() - 1;
    for (size_t i = 0; i < components_.size(); ++i) {
      acc += components_[i].weight;
      if (u < acc) {
        k = static_cast<int>(i);
        break;
      }
    }
  }
  const MixtureComponent& comp = components_[static_cast<size_t>(k)];
  Tensor z = rng.normal_tensor(comp.mean.shape);
  for (size_t j = 0; j < z.data.size(); ++j)
    z.data[j] = comp.mean.data[j] + std::sqrt(comp.var.data[j]) * z.data[j];
  return z;
}

GaussianMixtureScore make_unit_gaussian_score(const Shape& shape, NoiseSchedule sched) {
  MixtureComponent comp;
  comp.weight = 1.0;
  comp.mean = Tensor::zeros(shape);
  comp.var = Tensor::full(shape, 1.0);
  return GaussianMixtureScore({comp}, std::move(sched));
}

// ---------------------------------------------------------------------------
// MlpScore

MlpScore::MlpScore(Shape state_shape, int hidden, int num_classes, NoiseSchedule sched,
                   std::uint64_t init_seed, double init_scale)
    : shape_(std::move(state_shape)),
      n_(static_cast<int>(shape_numel(shape_))),
      hidden_(hidden),
      num_classes_(num_classes),
      sched_(std::move(sched)) {
  if (hidden_ < 1) throw std::invalid_argument("mlp: hidden width must be >= 1");
  if (num_classes_ < 0) throw std::invalid_argument("mlp: num_classes must be >= 0");
  int in_dim = n_ + feature_dim();
  Rng rng(derive_seed(init_seed, "mlp-init"));
  double s1 = init_scale / std::sqrt(static_cast<double>(in_dim));
  double s2 = init_scale / std::sqrt(static_cast<double>(hidden_));
  w1_ = scale(rng.normal_tensor({hidden_, in_dim}), s1);
  b1_ = Tensor::zeros({hidden_});
  w2_ = scale(rng.normal_tensor({n_, hidden_}), s2);
  b2_ = Tensor::zeros({n_});
}

void MlpScore::set_weights(Tensor w1, Tensor b1, Tensor w2, Tensor b2) {
  int in_dim = n_ + feature_dim();
  if (w1.shape != Shape{hidden_, in_dim} || b1.shape != Shape{hidden_} ||
      w2.shape != Shape{n_, hidden_} || b2.shape != Shape{n_})
    throw std::invalid_argument("mlp: weight shapes do not match architecture");
  w1_ = std::move(w1);
  b1_ = std::move(b1);
  w2_ = std::move(w2);
  b2_ = std::move(b2);
}

Tensor MlpScore::features(int t, const Condition& c) const {
  sched_.require_step(t);
  if (c.label && (*c.label < 0 || *c.label >= num_classes_))
    throw std::invalid_argument("condition: label outside the class range");
  Tensor f = Tensor::zeros({feature_dim()});
  double ab = sched_.abar(t);
  f.data[0] = ab;
  f.data[1] = std::sqrt(ab);
  f.data[2] = 1.0 - ab;
  f.data[3] = static_cast<double>(t) / sched_.T;
  if (c.label) f.data[static_cast<size_t>(4 + *c.label)] = 1.0;
  return f;
}

DifferentiableFn MlpScore::score_fn(int t, const Condition& c) const {
  // Split w1 into the state block and the feature block; the feature block
  // times the (constant) feature vector folds into the first-layer bias.
  Tensor feat = features(t, c);
  int in_dim = n_ + feature_dim();
  Tensor w1z = Tensor::zeros({hidden_, n_});
  Tensor bias = b1_;
  for (int i = 0; i < hidden_; ++i) {
    for (int j = 0; j < n_; ++j)
      w1z.data[static_cast<size_t>(i) * n_ + j] = w1_.data[static_cast<size_t>(i) * in_dim + j];
    for (int j = 0; j < feature_dim(); ++j)
      bias.data[static_cast<size_t>(i)] +=
          w1_.data[static_cast<size_t>(i) * in_dim + n_ + j] * feat.data[static_cast<size_t>(j)];
  }
  FnBuilder fb;
  auto z = fb.input(shape_);
  auto flat = fb.reshape(z, {n_});
  auto h = fb.tanh(fb.add(fb.matmul(fb.constant(std::move(w1z)), flat),
                          fb.constant(std::move(bias))));
  auto out = fb.add(fb.matmul(fb.constant(w2_), h), fb.constant(b2_));
  return fb.build(fb.reshape(out, shape_));
}

Tensor MlpScore::score(const Tensor& z, int t, const Condition& c) const {
  return score_fn(t, c).evaluate(z);
}

Tensor MlpScore::score_jvp(const Tensor& z, int t, const Condition& c, const Tensor& v) const {
  return score_fn(t, c).jvp(z, v);
}

Tensor MlpScore::score_vjp(const Tensor& z, int t, const Condition& c, const Tensor& w) const {
  return score_fn(t, c).vjp(z, w);
}

// ---------------------------------------------------------------------------
// dsm_train

DsmResult dsm_train(const MlpScore& init, const std::vector<Tensor>& dataset,
                    const NoiseSchedule& sched, int steps, double lr, std::uint64_t seed) {
  if (dataset.empty()) throw std::invalid_argument("dsm: dataset must be nonempty");
  if (lr <= 0.0) throw std::invalid_argument("dsm: lr must be positive");
  for (const Tensor& z0 : dataset)
    if (z0.shape != init.state_shape())
      throw std::invalid_argument("dsm: dataset shape " + shape_str(z0.shape) +
                                  " does not match model " + shape_str(init.state_shape()));

  DsmResult res{init, {}};
  res.loss_trace.reserve(static_cast<size_t>(steps));
  Rng rng(derive_seed(seed, "dsm"));
  int n = init.state_dim();
  Condition uncond = Condition::none();

  for (int step = 0; step < steps; ++step) {
    const Tensor& z0 = dataset[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(dataset.size()) - 1))];
    int t = rng.uniform_int(1, sched.T);
    Tensor eps = rng.normal_tensor(init.state_shape());
    Tensor zt = forward_noise(z0, t, eps, sched);
    double ab = sched.abar(t);
    double weight = 1.0 - ab;

    // Loss graph over the weights, with the sampled point folded into constants:
    // weight * sum((W2 tanh(W1 x_in + b1) + b2 - target)^2).
    Tensor x_in = Tensor::zeros({n + init.feature_dim()});
    Tensor zt_flat = zt.reshaped({n});
    Tensor feat = res.model.features(t, uncond);
    for (int j = 0; j < n; ++j) x_in.data[static_cast<size_t>(j)] = zt_flat.data[static_cast<size_t>(j)];
    for (int j = 0; j < init.feature_dim(); ++j)
      x_in.data[static_cast<size_t>(n + j)] = feat.data[static_cast<size_t>(j)];
    Tensor target = scale(eps.reshaped({n}), -1.0 / std::sqrt(1.0 - ab));

    FnBuilder fb;
    auto w1 = fb.input(res.model.w1().shape);
    auto b1 = fb.input(res.model.b1().shape);
    auto w2 = fb.input(res.model.w2().shape);
    auto b2 = fb.input(res.model.b2().shape);
    auto h = fb.tanh(fb.add(fb.matmul(w1, fb.constant(std::move(x_in))), b1));
    auto out = fb.add(fb.matmul(w2, h), b2);
    auto loss = fb.scale(fb.sum(fb.square(fb.sub(out, fb.constant(std::move(target))))), weight);
    DifferentiableFn f = fb.build(loss);

    const Tensor inputs[4] = {res.model.w1(), res.model.b1(), res.model.w2(), res.model.b2()};
    std::span<const Tensor> xs(inputs, 4);
    double loss_val = f.evaluate(xs).data[0];
    res.loss_trace.push_back(loss_val);
    if (!std::isfinite(loss_val)) {
      std::ostringstream msg;
      msg << "dsm: loss diverged at step " << step << "; trace tail:";
      size_t from = res.loss_trace.size() > 8 ? res.loss_trace.size() - 8 : 0;
      for (size_t i = from; i < res.loss_trace.size(); ++i) msg << " " << res.loss_trace[i];
      throw std::runtime_error(msg.str());
    }

    std::vector<Tensor> grads = f.vjp_all(xs, Tensor::scalar(1.0));
    Tensor nw1 = res.model.w1();
    Tensor nb1 = res.model.b1();
    Tensor nw2 = res.model.w2();
    Tensor nb2 = res.model.b2();
    axpy(nw1, -lr, grads[0]);
    axpy(nb1, -lr, grads[1]);
    axpy(nw2, -lr, grads[2]);
    axpy(nb2, -lr, grads[3]);
    res.model.set_weights(std::move(nw1), std::move(nb1), std::move(nw2), std::move(nb2));
  }
  return res;
}

}  // namespace advobj
