#pragma once

// Shared fixtures for the test binaries: a score model with a hand-picked
// constant Jacobian, finite-difference probes, and scratch-directory helpers.

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "advobj/graph.hpp"
#include "advobj/rng.hpp"
#include "advobj/schedule.hpp"
#include "advobj/scoremodels.hpp"
#include "advobj/tensor.hpp"

namespace advobj::testing {

// score(z) = A*z at every step, so the score Jacobian is exactly A and the
// spectral machinery can be checked against pencil-and-paper values. A is
// (n, n); the state is flat (n).
class LinearScore : public ScoreModel {
 public:
  LinearScore(Tensor a, NoiseSchedule sched)
      : a_(std::move(a)), sched_(std::move(sched)), shape_{a_.shape[1]} {
    if (a_.shape.size() != 2 || a_.shape[0] != a_.shape[1])
      throw std::invalid_argument("LinearScore: A must be square");
  }

  static LinearScore diagonal(const std::vector<double>& d, NoiseSchedule sched) {
    int n = static_cast<int>(d.size());
    Tensor a = Tensor::zeros({n, n});
    for (int i = 0; i < n; ++i) a.data[static_cast<size_t>(i) * n + i] = d[static_cast<size_t>(i)];
    return LinearScore(std::move(a), std::move(sched));
  }

  const Shape& state_shape() const override { return shape_; }
  const NoiseSchedule& schedule() const override { return sched_; }
  Tensor score(const Tensor& z, int, const Condition&) const override { return apply(z, false); }
  Tensor score_jvp(const Tensor&, int, const Condition&, const Tensor& v) const override {
    return apply(v, false);
  }
  Tensor score_vjp(const Tensor&, int, const Condition&, const Tensor& w) const override {
    return apply(w, true);
  }

 private:
  Tensor apply(const Tensor& x, bool transpose) const {
    int n = shape_[0];
    require_same_shape(x, Tensor::zeros(shape_), "LinearScore input");
    Tensor out = Tensor::zeros(shape_);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double w = transpose ? a_.data[static_cast<size_t>(j) * n + i]
                             : a_.data[static_cast<size_t>(i) * n + j];
        out.data[static_cast<size_t>(i)] += w * x.data[static_cast<size_t>(j)];
      }
    return out;
  }

  Tensor a_;
  NoiseSchedule sched_;
  Shape shape_;
};

// Random scalar-output network touching every primitive op; structure and
// weights are drawn from rng, so each call is a fresh differentiation target.
inline DifferentiableFn random_scalar_net(Rng& rng, Shape* in_shape = nullptr) {
  int C = rng.uniform_int(1, 2), H = rng.uniform_int(3, 5), W = rng.uniform_int(3, 5);
  int M = rng.uniform_int(1, 3), f = 3;
  FnBuilder fb;
  auto x = fb.input({C, H, W});
  auto kern = fb.constant(scale(rng.normal_tensor({M, C, f, f}), 0.5));
  auto h1 = fb.tanh(fb.conv2d(x, kern));
  auto bias = fb.constant(scale(rng.normal_tensor({M, H, W}), 0.3));
  auto h2 = fb.softplus(fb.add(h1, bias));
  auto gate = fb.constant(rng.uniform_tensor({M, H, W}, 0.5, 1.5));
  auto h3 = fb.hadamard(h2, gate);
  int n = M * H * W, m = rng.uniform_int(2, 4);
  auto flat = fb.reshape(h3, {n});
  auto wmat = fb.constant(scale(rng.normal_tensor({m, n}), 0.4));
  auto lin = fb.matmul(wmat, flat);
  auto z = fb.offset(fb.scale(lin, 0.7), 0.1);
  auto r = fb.sqrt(fb.offset(fb.square(z), 1.0));  // smooth and positive
  auto out = fb.sum(fb.sub(r, fb.neg(z)));
  if (in_shape) *in_shape = {C, H, W};
  return fb.build(out);
}

// Central difference of a scalar functional along coordinate i.
inline double fd_partial(const std::function<double(const Tensor&)>& f, const Tensor& x,
                         size_t i, double h = 1e-6) {
  Tensor xp = x, xm = x;
  xp.data[i] += h;
  xm.data[i] -= h;
  return (f(xp) - f(xm)) / (2.0 * h);
}

// Central difference of a tensor map along direction v.
inline Tensor fd_directional(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                             const Tensor& v, double h = 1e-6) {
  Tensor xp = x, xm = x;
  axpy(xp, h, v);
  axpy(xm, -h, v);
  Tensor fp = f(xp), fm = f(xm);
  Tensor out = sub(fp, fm);
  for (double& e : out.data) e /= 2.0 * h;
  return out;
}

inline double rel_err(double got, double want) {
  double denom = std::max(1.0, std::abs(want));
  return std::abs(got - want) / denom;
}

inline double rel_err(const Tensor& got, const Tensor& want) {
  double denom = std::max(1.0, norm2(want));
  return norm2(sub(got, want)) / denom;
}

// Fresh scratch directory under the system temp root, removed on destruction.
struct ScratchDir {
  std::filesystem::path path;

  explicit ScratchDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("advobj-" + tag + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string str(const std::string& leaf = "") const {
    return leaf.empty() ? path.string() : (path / leaf).string();
  }
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline bool files_identical(const std::filesystem::path& a, const std::filesystem::path& b) {
  return slurp(a) == slurp(b);
}

}  // namespace advobj::testing
