#pragma once

#include <cstdint>
#include <vector>

#include "advobj/sampler.hpp"
#include "advobj/scoremodels.hpp"
#include "advobj/tensor.hpp"

namespace advobj {

enum class SpectralMethod { kFullSvd, kPowerIteration };
enum class SingularEnd { kTop, kBottom };

// Singular triplets, descending. full_svd fills all n and flat {n} vectors;
// the matrix-free path fills one state-shaped pair plus its convergence
// record. Pairs satisfy J*v = sigma*u to the method's tolerance.
struct SpectralResult {
  SpectralMethod method = SpectralMethod::kPowerIteration;
  std::vector<double> sigma;
  std::vector<Tensor> u;
  std::vector<Tensor> v;
  bool converged = true;
  int iterations = 0;
};

// Score Jacobian at (z_t, t), one jvp per basis vector. States above 1024
// entries are refused; use the matrix-free path instead.
Tensor full_jacobian(const ScoreModel& model, const Tensor& z_t, int t, const Condition& c);

// Exact decomposition of an explicit (n,n) Jacobian.
SpectralResult full_svd(const Tensor& jac);

// Largest or smallest singular pair without forming J: power iteration on
// J^T J (top), or on mu*I - J^T J with mu just above sigma_max^2 (bottom).
// Convergence is |change in sigma estimate| < tol; running out of iterations
// leaves converged = false with the last iterate.
SpectralResult extremal_singular(const ScoreModel& model, const Tensor& z_t, int t,
                                 const Condition& c, SingularEnd which, int iters, double tol,
                                 std::uint64_t seed);

struct InjectionRecord {
  Tensor terminal;
  double log_density = 0.0;
};

// Replays the unguided trajectory for cfg.seed, adds magnitude*direction to
// the state at t_inject, finishes the run, and scores the terminal sample
// under the model's exact data law. magnitude = 0 reproduces sample() bit for
// bit. Guided or re-projecting configs are refused, as are models without an
// analytic data density.
InjectionRecord inject_direction(const ScoreModel& model, const Condition& c,
                                 const SamplerConfig& cfg, int t_inject,
                                 const Tensor& direction, double magnitude);

}  // namespace advobj
