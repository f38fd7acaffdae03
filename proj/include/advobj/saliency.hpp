#pragma once

#include <cstdint>
#include <vector>

#include "advobj/tensor.hpp"
#include "advobj/victim.hpp"

namespace advobj {

// One candidate cell of the partition; mask carries the adversarial role and
// covers exactly the side x side box at (y0, x0).
struct Patch {
  int y0 = 0;
  int x0 = 0;
  Mask mask;
};

// Candidate regions in raster order of their origins; cells intersecting the
// protected target box are dropped, as are boundary remainders.
struct PatchGrid {
  int side = 0;
  int stride = 0;
  std::vector<Patch> patches;

  int count() const { return static_cast<int>(patches.size()); }
};

struct SrsConfig {
  int iters = 10;
  double eta = 0.05;
  int k = 4;
  double clamp = 0.5;  // L-inf bound on the perturbation; <= 0 disables
  std::uint64_t seed = 0;
};

// Per-patch outcome of the search: signed mean depth change (the ranking key),
// the raw objective norm reached, the perturbation, and the descending-score
// permutation with raster-order tie-breaks.
struct SaliencyResult {
  PatchGrid grid;
  std::vector<double> scores;      // signed mean target-depth change
  std::vector<double> objectives;  // ||masked depth change||_2 at the final u
  std::vector<Tensor> perturbations;
  std::vector<int> ranking;  // all patches, best first
  std::vector<int> topk;
};

// Square cells of side clamp(round(sqrt(area(target))), 2, min(H,W)/2), full
// cells only, minus any cell touching the target box.
PatchGrid partition_patches(const Tensor& x, const Mask& target, const VictimModel& f);

// Normalized gradient ascent on the masked-depth-change norm, supported on the
// patch: u += eta*g/||g|| for cfg.iters steps, g evaluated through the victim
// and masked to the patch each step. The first step differentiates the squared
// objective at an infinitesimal nonnegative probe (the norm is flat at u = 0).
// A vanishing gradient stops early. u is clamped to the L-inf bound and x+u is
// clipped to [0,1], both only on the patch.
Tensor optimize_patch(const Tensor& x, const Mask& target, const Mask& patch,
                      const VictimModel& f, const SrsConfig& cfg, std::uint64_t probe_seed);

// Mean signed change of the target-region depth under the perturbation.
double region_score(const Tensor& x, const Mask& target, const Tensor& u, const VictimModel& f);

// Indices sorted by descending score; equal scores keep their input (raster)
// order. k must not exceed the number of scores.
std::vector<int> select_topk(const std::vector<double>& scores, int k);

// Full pass: partition, optimize every patch (probe seeds derived from
// cfg.seed by patch index), score, rank. Throws if the partition is empty or
// smaller than cfg.k.
SaliencyResult run_srs(const Tensor& x, const Mask& target, const VictimModel& f,
                       const SrsConfig& cfg);

}  // namespace advobj
