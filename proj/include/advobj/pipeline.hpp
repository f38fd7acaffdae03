#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "advobj/saliency.hpp"
#include "advobj/sampler.hpp"
#include "advobj/schedule.hpp"
#include "advobj/scoremodels.hpp"
#include "advobj/tensor.hpp"
#include "advobj/victim.hpp"

namespace advobj {

// Procedural scene family: a shared vertical-gradient base with one class blob
// per template, a grid-aligned target box, distinct source boxes with
// geometrically decaying gains, and a planted pooling victim wired from the
// sources to the target. Everything derives from base_seed + index, so the
// family is a fixed, versioned benchmark.
struct EnsembleParams {
  int channels = 1;
  int height = 16;
  int width = 16;
  int num_classes = 4;
  double blob_amp = 0.2;
  double component_var = 0.01;
  int num_sources = 4;         // ladder length; each later source is weaker
  double planted_gain = 1.5;   // gain of the strongest source
  double source_decay = 0.55;  // gain ratio between consecutive sources
  double bg_scale = 0.03;
  std::uint64_t base_seed = 90210;
};

struct ToyScene {
  Tensor x;  // drawn from the class component, clipped to [0,1]
  Mask target;
  int cls = 0;
  int target_y0 = 0, target_x0 = 0;
  std::vector<PlantedSource> sources;  // planted patches, strongest first
  VictimModel victim;
};

// Class templates as mixture components: uniform weights, shared diagonal
// variance, means = gradient base + per-class blob.
GaussianMixtureScore make_template_mixture(const EnsembleParams& p, NoiseSchedule sched);

ToyScene make_toy_scene(const EnsembleParams& p, int index);

// OR of the tensors; result carries the adversarial role.
Mask union_masks(const std::vector<const Mask*>& masks);

struct AttackConfig {
  EnsembleParams ensemble;
  int scene_index = 0;

  ScheduleKind sched_kind = ScheduleKind::kLinearBeta;
  int T = 50;
  double eta = 0.0;
  double sched_p1 = 1e-4;
  double sched_p2 = 0.2;

  SrsConfig srs;  // srs.seed is ignored; derived from seed below

  GuidanceMode mode = GuidanceMode::kJvpg;
  double gamma = -0.4;  // the Jacobian-modulated attack needs gamma < 0 here
  double lambda = 2.0;
  bool norm_match = false;

  std::uint64_t seed = 0;
  bool mask_reproject = true;
  bool quantize_roundtrip = false;
  bool sequential = false;  // attack regions one at a time instead of jointly
};

// Everything one attack produced. wall_seconds is diagnostic only and never
// serialized, so written reports stay byte-stable.
struct AttackReport {
  AttackConfig cfg;
  std::string generation;  // "joint" or "sequential"
  SaliencyResult saliency;
  std::vector<double> xi;          // xi[j-1]: MRSR with the top j regions
  std::vector<double> xi_abs;      // mean-absolute variant
  std::vector<double> control_xi;  // gamma = 0 control, same seeds
  std::vector<double> terminal_logd;
  std::vector<std::vector<double>> energy;  // [j-1][i]: trace, t = T first
  Tensor x, z_final, object_final, depth_before, depth_after;
  Mask region = Mask(Tensor::zeros({1, 1}), Mask::Role::kAdversarial);  // union at final j
  double wall_seconds = 0.0;
  std::string error;  // nonempty: partial report, fields up to the failure

  bool ok() const { return error.empty(); }
};

AttackReport run_attack(const AttackConfig& cfg);

struct ComparisonRow {
  GuidanceMode mode = GuidanceMode::kNone;
  double gamma = 0.0;
  std::vector<double> xi;    // per seed, at the full region count
  std::vector<double> logd;  // per seed, terminal data log-density
  double mean_xi = 0.0;
  double mean_logd = 0.0;
};

struct ComparisonReport {
  std::vector<int> seeds;
  std::vector<ComparisonRow> rows;
};

// One row per mode over a shared seed set; seed s plays both scene index and
// run seed. gamma magnitude comes from base.gamma with the per-mode sign rule
// (the Jacobian-modulated mode flips it; see run_attack's gamma note).
ComparisonReport run_guidance_comparison(const AttackConfig& base,
                                         const std::vector<GuidanceMode>& modes,
                                         const std::vector<int>& seeds);

double signed_gamma(GuidanceMode mode, double magnitude);

// Serialization: config echo (reloadable key=value file), human summary,
// CSVs, tensors, and image views under dir.
void write_attack_report(const AttackReport& rep, const std::string& dir);
void write_comparison_report(const ComparisonReport& rep, const std::string& dir);

int cli_main(int argc, char** argv);

}  // namespace advobj
