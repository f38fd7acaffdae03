#include "advobj/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "advobj/rng.hpp"

namespace advobj {
namespace {

constexpr double kProbeScale = 1e-6;

// d(u) = (f(x+u) - f(x)) masked to the target region, as a recorded graph so
// its vjp gives the ascent direction.
DifferentiableFn masked_diff_fn(const Tensor& x, const Mask& target, const VictimModel& f) {
  Tensor dx = f.depth(x);
  FnBuilder fb;
  auto u = fb.input(x.shape);
  auto depth = fb.apply(f.fn(), fb.add(u, fb.constant(x)));
  auto diff = fb.hadamard(fb.sub(depth, fb.constant(std::move(dx))),
                          fb.constant(target.tensor()));
  return fb.build(diff);
}

bool cell_touches(const Mask& target, int y0, int x0, int side) {
  int w = target.width();
  for (int y = y0; y < y0 + side; ++y)
    for (int x = x0; x < x0 + side; ++x)
      if (target.tensor().data[static_cast<size_t>(y) * w + x] == 1.0) return true;
  return false;
}

}  // namespace

PatchGrid partition_patches(const Tensor& x, const Mask& target, const VictimModel& f) {
  if (x.shape.size() != 3)
    throw std::invalid_argument("partition: expected (C,H,W), got " + shape_str(x.shape));
  if (x.shape[0] != f.channels() || x.shape[1] != f.height() || x.shape[2] != f.width())
    throw std::invalid_argument("partition: image does not match the victim geometry");
  int h = x.shape[1], w = x.shape[2];
  if (target.height() != h || target.width() != w)
    throw std::invalid_argument("partition: target mask does not cover the image");
  int side_max = std::min(h, w) / 2;
  if (side_max < 2) throw std::invalid_argument("partition: image too small to tile");
  int side = static_cast<int>(std::llround(std::sqrt(static_cast<double>(target.area()))));
  side = std::clamp(side, 2, side_max);

  PatchGrid grid;
  grid.side = side;
  grid.stride = side;
  for (int y0 = 0; y0 + side <= h; y0 += side)
    for (int x0 = 0; x0 + side <= w; x0 += side) {
      if (cell_touches(target, y0, x0, side)) continue;
      grid.patches.push_back(
          {y0, x0, box_mask(h, w, y0, x0, side, side, Mask::Role::kAdversarial)});
    }
  return grid;
}

Tensor optimize_patch(const Tensor& x, const Mask& target, const Mask& patch,
                      const VictimModel& f, const SrsConfig& cfg, std::uint64_t probe_seed) {
  if (!masks_disjoint(patch, target))
    throw std::invalid_argument("optimize_patch: patch overlaps the target region");
  if (cfg.iters < 0 || !(cfg.eta > 0.0))
    throw std::invalid_argument("optimize_patch: need iters >= 0 and eta > 0");
  DifferentiableFn diff_fn = masked_diff_fn(x, target, f);
  Tensor bm = broadcast_mask(patch.tensor(), x.shape[0]);
  Tensor u = Tensor::zeros(x.shape);

  for (int iter = 0; iter < cfg.iters; ++iter) {
    Tensor u_eval = u;
    if (iter == 0) {
      // the objective is a norm at its minimum, so nudge off the flat point;
      // a nonnegative probe lands on the depth-increasing side
      Rng rng(probe_seed);
      Tensor probe = rng.normal_tensor(x.shape);
      for (size_t i = 0; i < probe.data.size(); ++i)
        u_eval.data[i] += kProbeScale * std::abs(probe.data[i]) * bm.data[i];
    }
    Tensor d = diff_fn.evaluate(u_eval);
    Tensor g = diff_fn.vjp(u_eval, d);
    g = hadamard(g, bm);
    double n = norm2(g);
    if (n == 0.0) break;
    axpy(u, cfg.eta / n, g);
    for (size_t i = 0; i < u.data.size(); ++i) {
      if (bm.data[i] == 0.0) continue;
      if (cfg.clamp > 0.0) u.data[i] = std::clamp(u.data[i], -cfg.clamp, cfg.clamp);
      u.data[i] = std::clamp(x.data[i] + u.data[i], 0.0, 1.0) - x.data[i];
    }
  }
  return u;
}

double region_score(const Tensor& x, const Mask& target, const Tensor& u,
                    const VictimModel& f) {
  require_same_shape(u, x, "region_score");
  Tensor dx = f.depth(x);
  Tensor dz = f.depth(add(x, u));
  double acc = 0.0;
  for (size_t i = 0; i < dx.data.size(); ++i)
    acc += target.tensor().data[i] * (dz.data[i] - dx.data[i]);
  return acc / static_cast<double>(target.area());
}

std::vector<int> select_topk(const std::vector<double>& scores, int k) {
  if (k < 1 || k > static_cast<int>(scores.size()))
    throw std::invalid_argument("select_topk: k out of range");
  std::vector<int> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });
  idx.resize(k);
  return idx;
}

SaliencyResult run_srs(const Tensor& x, const Mask& target, const VictimModel& f,
                       const SrsConfig& cfg) {
  SaliencyResult res;
  res.grid = partition_patches(x, target, f);
  int n = res.grid.count();
  if (n == 0) throw std::runtime_error("srs: no candidate patches");
  if (cfg.k < 1 || cfg.k > n)
    throw std::invalid_argument("srs: k must lie in 1..candidate count");

  Tensor dx = f.depth(x);
  for (int i = 0; i < n; ++i) {
    Tensor u = optimize_patch(x, target, res.grid.patches[i].mask, f, cfg,
                              derive_seed(cfg.seed, "srs-probe", i));
    Tensor dz = f.depth(add(x, u));
    double signed_sum = 0.0, sq = 0.0;
    for (size_t j = 0; j < dx.data.size(); ++j) {
      double m = target.tensor().data[j];
      double d = m * (dz.data[j] - dx.data[j]);
      signed_sum += d;
      sq += d * d;
    }
    res.scores.push_back(signed_sum / static_cast<double>(target.area()));
    res.objectives.push_back(std::sqrt(sq));
    res.perturbations.push_back(std::move(u));
  }
  res.ranking = select_topk(res.scores, n);
  res.topk.assign(res.ranking.begin(), res.ranking.begin() + cfg.k);
  return res;
}

}  // namespace advobj
