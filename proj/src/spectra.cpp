#include "advobj/spectra.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "advobj/rng.hpp"

namespace advobj {

Tensor full_jacobian(const ScoreModel& model, const Tensor& z_t, int t, const Condition& c) {
  int n = static_cast<int>(z_t.numel());
  if (n > 1024)
    throw std::invalid_argument(
        "full_jacobian: state too large to assemble; use extremal_singular");
  Tensor jac = Tensor::zeros({n, n});
  Tensor e = Tensor::zeros(z_t.shape);
  for (int j = 0; j < n; ++j) {
    e.data[static_cast<size_t>(j)] = 1.0;
    Tensor col = model.score_jvp(z_t, t, c, e);
    e.data[static_cast<size_t>(j)] = 0.0;
    for (int i = 0; i < n; ++i)
      jac.data[static_cast<size_t>(i) * n + j] = col.data[static_cast<size_t>(i)];
  }
  return jac;
}

SpectralResult full_svd(const Tensor& jac) {
  if (jac.shape.size() != 2 || jac.shape[0] != jac.shape[1])
    throw std::invalid_argument("full_svd: expected a square matrix, got " +
                                shape_str(jac.shape));
  int n = jac.shape[0];
  Eigen::MatrixXd m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = jac.data[static_cast<size_t>(i) * n + j];
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);

  SpectralResult res;
  res.method = SpectralMethod::kFullSvd;
  for (int i = 0; i < n; ++i) {
    res.sigma.push_back(svd.singularValues()(i));
    Tensor ui({n}, std::vector<double>(static_cast<size_t>(n)));
    Tensor vi({n}, std::vector<double>(static_cast<size_t>(n)));
    for (int j = 0; j < n; ++j) {
      ui.data[static_cast<size_t>(j)] = svd.matrixU()(j, i);
      vi.data[static_cast<size_t>(j)] = svd.matrixV()(j, i);
    }
    res.u.push_back(std::move(ui));
    res.v.push_back(std::move(vi));
  }
  return res;
}

namespace {

Tensor normalized_or_zero(Tensor v) {
  double n = norm2(v);
  return n == 0.0 ? v : scale(v, 1.0 / n);
}

// One shared loop: iterate v <- normalize(op(v)) and watch ||J v|| settle.
template <typename Op>
SpectralResult iterate_pairs(const ScoreModel& model, const Tensor& z_t, int t,
                             const Condition& c, int iters, double tol, std::uint64_t seed,
                             Op op) {
  SpectralResult res;
  res.method = SpectralMethod::kPowerIteration;
  res.converged = false;

  Rng rng(derive_seed(seed, "power"));
  Tensor v = normalized_or_zero(rng.normal_tensor(z_t.shape));
  double sigma_prev = -1.0;
  for (int it = 0; it < iters; ++it) {
    double sigma = norm2(model.score_jvp(z_t, t, c, v));
    res.iterations = it;
    if (it > 0 && std::abs(sigma - sigma_prev) < tol) {
      res.converged = true;
      break;
    }
    sigma_prev = sigma;
    Tensor w = op(v);
    double n = norm2(w);
    if (n == 0.0) {  // iterate annihilated: v already spans a null direction
      res.converged = true;
      break;
    }
    v = scale(std::move(w), 1.0 / n);
  }

  Tensor jv = model.score_jvp(z_t, t, c, v);
  double sigma = norm2(jv);
  res.sigma.push_back(sigma);
  res.u.push_back(sigma > 0.0 ? scale(std::move(jv), 1.0 / sigma) : v);
  res.v.push_back(std::move(v));
  return res;
}

}  // namespace

SpectralResult extremal_singular(const ScoreModel& model, const Tensor& z_t, int t,
                                 const Condition& c, SingularEnd which, int iters, double tol,
                                 std::uint64_t seed) {
  if (iters < 1) throw std::invalid_argument("extremal_singular: iters must be >= 1");
  if (!(tol > 0.0)) throw std::invalid_argument("extremal_singular: tol must be > 0");
  auto gram = [&](const Tensor& v) {
    return model.score_vjp(z_t, t, c, model.score_jvp(z_t, t, c, v));
  };
  if (which == SingularEnd::kTop)
    return iterate_pairs(model, z_t, t, c, iters, tol, seed, gram);

  SpectralResult top =
      extremal_singular(model, z_t, t, c, SingularEnd::kTop, iters, tol,
                        derive_seed(seed, "shift-anchor"));
  double mu = top.sigma[0] * top.sigma[0] * 1.01 + 1e-12;  // flips the spectrum of J^T J
  auto shifted = [&](const Tensor& v) {
    Tensor w = scale(v, mu);
    axpy(w, -1.0, gram(v));
    return w;
  };
  SpectralResult res = iterate_pairs(model, z_t, t, c, iters, tol, seed, shifted);
  res.converged = res.converged && top.converged;
  return res;
}

InjectionRecord inject_direction(const ScoreModel& model, const Condition& c,
                                 const SamplerConfig& cfg, int t_inject,
                                 const Tensor& direction, double magnitude) {
  if (cfg.sched == nullptr)
    throw std::invalid_argument("inject_direction: config carries no schedule");
  const NoiseSchedule& sched = *cfg.sched;
  if (cfg.mode != GuidanceMode::kNone || cfg.mask_reproject)
    throw std::invalid_argument("inject_direction: needs an unguided, un-projected config");
  if (t_inject < 1 || t_inject > sched.T)
    throw std::invalid_argument("inject_direction: t_inject outside 1..T");
  if (direction.shape != model.state_shape())
    throw std::invalid_argument("inject_direction: direction does not match the state shape");
  if (std::abs(norm2(direction) - 1.0) > 1e-6)
    throw std::invalid_argument("inject_direction: direction must be unit-norm");

  // same stream and draw order as sample(): initial state, then one eps per step
  Rng rng(derive_seed(cfg.seed, "trajectory"));
  Tensor z = rng.normal_tensor(model.state_shape());
  for (int t = sched.T; t >= 1; --t) {
    if (t == t_inject && magnitude != 0.0) axpy(z, magnitude, direction);
    Tensor eps = rng.normal_tensor(model.state_shape());
    z = ddim_step(z, t, model.score(z, t, c), eps, sched);
    if (!z.all_finite())
      throw std::runtime_error("inject_direction: non-finite state after step t = " +
                               std::to_string(t));
  }
  InjectionRecord rec;
  rec.log_density = model.log_density0(z);
  rec.terminal = std::move(z);
  return rec;
}

}  // namespace advobj
