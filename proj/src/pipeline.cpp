#include "advobj/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "advobj/guidance.hpp"
#include "advobj/io.hpp"
#include "advobj/rng.hpp"

namespace advobj {
namespace {

constexpr int kCell = 4;  // target/source boxes live on this grid

Tensor clip01(Tensor t) {
  for (double& v : t.data) v = std::clamp(v, 0.0, 1.0);
  return t;
}

Tensor template_mean(const EnsembleParams& p, int k) {
  Tensor m = Tensor::zeros({p.channels, p.height, p.width});
  for (int c = 0; c < p.channels; ++c)
    for (int y = 0; y < p.height; ++y)
      for (int x = 0; x < p.width; ++x)
        m.data[(static_cast<size_t>(c) * p.height + y) * p.width + x] =
            0.25 + 0.5 * (p.height > 1 ? static_cast<double>(y) / (p.height - 1) : 0.0);
  // one bright blob per class, cycling over the corners
  int side = std::min(6, std::min(p.height, p.width));
  int ymax = p.height - side - 1, xmax = p.width - side - 1;
  int y0 = std::clamp(1 + ((k >> 1) & 1) * (p.height - side - 2) + (k / 4), 0, std::max(ymax, 0));
  int x0 = std::clamp(1 + (k & 1) * (p.width - side - 2) + (k / 4), 0, std::max(xmax, 0));
  for (int c = 0; c < p.channels; ++c)
    for (int y = y0; y < y0 + side; ++y)
      for (int x = x0; x < x0 + side; ++x)
        m.data[(static_cast<size_t>(c) * p.height + y) * p.width + x] += p.blob_amp;
  return m;
}

void check_ensemble(const EnsembleParams& p) {
  if (p.channels < 1 || p.height < kCell || p.width < kCell)
    throw std::invalid_argument("ensemble: geometry too small for the box grid");
  if (p.height % kCell != 0 || p.width % kCell != 0)
    throw std::invalid_argument("ensemble: height and width must be multiples of 4");
  if (p.num_classes < 1) throw std::invalid_argument("ensemble: need at least one class");
  if (!(p.component_var > 0.0)) throw std::invalid_argument("ensemble: variance must be > 0");
  if (p.num_sources < 1 || !(p.planted_gain > 0.0) || !(p.source_decay > 0.0))
    throw std::invalid_argument("ensemble: source ladder needs positive count, gain, decay");
}

}  // namespace

GaussianMixtureScore make_template_mixture(const EnsembleParams& p, NoiseSchedule sched) {
  check_ensemble(p);
  std::vector<MixtureComponent> comps;
  for (int k = 0; k < p.num_classes; ++k) {
    MixtureComponent c;
    c.weight = 1.0 / p.num_classes;
    c.mean = template_mean(p, k);
    c.var = Tensor::full(c.mean.shape, p.component_var);
    comps.push_back(std::move(c));
  }
  return GaussianMixtureScore(std::move(comps), std::move(sched));
}

ToyScene make_toy_scene(const EnsembleParams& p, int index) {
  check_ensemble(p);
  if (index < 0) throw std::invalid_argument("scene index must be >= 0");
  Rng rng(derive_seed(p.base_seed, "scene", index));
  int cls = rng.uniform_int(0, p.num_classes - 1);
  int gh = p.height / kCell, gw = p.width / kCell;
  int cells = gh * gw;
  if (cells < 2) throw std::invalid_argument("ensemble: need at least two grid cells");
  if (p.num_sources > cells - 1)
    throw std::invalid_argument("ensemble: more sources than free grid cells");
  int ti = rng.uniform_int(0, cells - 1);
  int ty0 = (ti / gw) * kCell, tx0 = (ti % gw) * kCell;

  // Source cells: sampled without replacement from the non-target cells, each
  // carrying a geometrically weaker gain than the one before it.
  std::vector<int> free_cells;
  for (int c = 0; c < cells; ++c)
    if (c != ti) free_cells.push_back(c);
  std::vector<PlantedSource> sources;
  for (int j = 0; j < p.num_sources; ++j) {
    int pick = rng.uniform_int(0, static_cast<int>(free_cells.size()) - 1);
    int si = free_cells[static_cast<size_t>(pick)];
    free_cells.erase(free_cells.begin() + pick);
    PlantedSource s;
    s.y0 = (si / gw) * kCell;
    s.x0 = (si % gw) * kCell;
    s.side = kCell;
    s.gain = p.planted_gain * std::pow(p.source_decay, j);
    sources.push_back(s);
  }

  Tensor mean = template_mean(p, cls);
  Tensor x = rng.normal_tensor(mean.shape);
  double sd = std::sqrt(p.component_var);
  for (size_t i = 0; i < x.data.size(); ++i) x.data[i] = mean.data[i] + sd * x.data[i];
  x = clip01(std::move(x));

  VictimGeometry g;
  g.channels = p.channels;
  g.height = p.height;
  g.width = p.width;
  g.planted = true;
  g.target_y0 = ty0;
  g.target_x0 = tx0;
  g.target_h = kCell;
  g.target_w = kCell;
  g.sources = sources;
  g.bg_scale = p.bg_scale;
  VictimModel victim = make_victim(VictimModel::Kind::kPatchPool,
                                   derive_seed(p.base_seed, "victim", index), g);

  return ToyScene{std::move(x),
                  box_mask(p.height, p.width, ty0, tx0, kCell, kCell, Mask::Role::kTarget),
                  cls,
                  ty0,
                  tx0,
                  std::move(sources),
                  std::move(victim)};
}

Mask union_masks(const std::vector<const Mask*>& masks) {
  if (masks.empty()) throw std::invalid_argument("union_masks: empty list");
  Tensor acc = masks[0]->tensor();
  for (size_t i = 1; i < masks.size(); ++i) {
    require_same_shape(masks[i]->tensor(), acc, "union_masks");
    for (size_t j = 0; j < acc.data.size(); ++j)
      if (masks[i]->tensor().data[j] == 1.0) acc.data[j] = 1.0;
  }
  return Mask(std::move(acc), Mask::Role::kAdversarial);
}

double signed_gamma(GuidanceMode mode, double magnitude) {
  switch (mode) {
    case GuidanceMode::kNone: return 0.0;
    case GuidanceMode::kJvpg: return -std::abs(magnitude);  // negative-definite Jacobian
    case GuidanceMode::kEnergyDps:
    case GuidanceMode::kMpgd: return std::abs(magnitude);
  }
  return 0.0;
}

namespace {

struct RunOut {
  Tensor terminal;
  std::vector<double> trace;
};

RunOut guided_run(const GaussianMixtureScore& score, const Condition& c,
                  const NoiseSchedule& sched, GuidanceMode mode, double gamma,
                  const EnergyFunction& energy, const Mask& region, const Tensor& background,
                  std::uint64_t seed, bool reproject, bool norm_match) {
  EnergyGuidanceHook hook(score, c, mode, gamma, &energy, norm_match);
  const Tensor& mask2d = region.tensor();
  hook.set_inpaint_context(&background, &mask2d);
  SamplerConfig scfg{&sched, mode, gamma, seed, reproject};
  Trajectory traj = sample(score, c, scfg, &hook);
  RunOut out;
  out.terminal = traj.terminal();
  for (int t = sched.T; t >= 1; --t)
    out.trace.push_back(traj.steps[static_cast<size_t>(t)].energy);
  return out;
}

}  // namespace

AttackReport run_attack(const AttackConfig& cfg) {
  auto t0 = std::chrono::steady_clock::now();
  AttackReport rep;
  rep.cfg = cfg;
  rep.generation = cfg.sequential ? "sequential" : "joint";
  try {
    if (!(cfg.lambda > 0.0)) throw std::invalid_argument("attack: lambda must be > 0");
    NoiseSchedule sched =
        build_schedule(cfg.sched_kind, cfg.T, cfg.eta, cfg.sched_p1, cfg.sched_p2);
    GaussianMixtureScore score = make_template_mixture(cfg.ensemble, sched);
    ToyScene scene = make_toy_scene(cfg.ensemble, cfg.scene_index);
    rep.x = scene.x;
    rep.depth_before = scene.victim.depth(scene.x);

    SrsConfig srs = cfg.srs;
    srs.seed = derive_seed(cfg.seed, "srs");
    rep.saliency = run_srs(scene.x, scene.target, scene.victim, srs);

    Condition c = Condition::cls(scene.cls);
    Tensor base = scene.x;  // sequential mode grows the scene region by region
    std::vector<const Mask*> chosen;
    for (int j = 1; j <= srs.k; ++j) {
      chosen.push_back(&rep.saliency.grid.patches[static_cast<size_t>(
                           rep.saliency.topk[static_cast<size_t>(j - 1)])].mask);
      Mask region = cfg.sequential ? *chosen.back() : union_masks(chosen);
      Mask cumulative = union_masks(chosen);
      const Tensor& background = cfg.sequential ? base : scene.x;

      AdversarialEnergy energy(scene.victim, background, scene.target, cfg.lambda, region, c);
      std::uint64_t run_seed = derive_seed(cfg.seed, "attack", j);
      RunOut run = guided_run(score, c, sched, cfg.mode, cfg.gamma, energy.energy(), region,
                              background, run_seed, cfg.mask_reproject, cfg.norm_match);
      Tensor composited = compose_scene(background, clip01(run.terminal), region);
      if (cfg.quantize_roundtrip)
        composited = compose_scene(background, quantize8(composited), region);

      rep.xi.push_back(mrsr(scene.victim, scene.x, composited, scene.target));
      rep.xi_abs.push_back(mrsr_abs(scene.victim, scene.x, composited, scene.target));
      rep.terminal_logd.push_back(score.log_density0(run.terminal));
      rep.energy.push_back(std::move(run.trace));

      RunOut ctrl = guided_run(score, c, sched, cfg.mode, 0.0, energy.energy(), region,
                               background, run_seed, cfg.mask_reproject, cfg.norm_match);
      Tensor ctrl_scene = compose_scene(background, clip01(ctrl.terminal), region);
      if (cfg.quantize_roundtrip)
        ctrl_scene = compose_scene(background, quantize8(ctrl_scene), region);
      rep.control_xi.push_back(mrsr(scene.victim, scene.x, ctrl_scene, scene.target));

      if (cfg.sequential) base = composited;
      if (j == srs.k) {
        rep.region = cumulative;
        rep.z_final = composited;
        rep.object_final = extract_object(composited, cumulative);
        rep.depth_after = scene.victim.depth(composited);
      }
    }
  } catch (const std::exception& e) {
    rep.error = e.what();
  }
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

ComparisonReport run_guidance_comparison(const AttackConfig& base,
                                         const std::vector<GuidanceMode>& modes,
                                         const std::vector<int>& seeds) {
  if (modes.empty()) throw std::invalid_argument("comparison: modes list is empty");
  if (seeds.empty()) throw std::invalid_argument("comparison: seed list is empty");
  ComparisonReport rep;
  rep.seeds = seeds;
  for (GuidanceMode mode : modes) {
    ComparisonRow row;
    row.mode = mode;
    row.gamma = signed_gamma(mode, base.gamma);
    for (int s : seeds) {
      AttackConfig cfg = base;
      cfg.scene_index = s;
      cfg.seed = static_cast<std::uint64_t>(s);
      cfg.mode = mode;
      cfg.gamma = row.gamma;
      AttackReport r = run_attack(cfg);
      if (!r.ok()) throw std::runtime_error("comparison: attack failed: " + r.error);
      row.xi.push_back(r.xi.back());
      row.logd.push_back(r.terminal_logd.back());
    }
    row.mean_xi = 0.0;
    row.mean_logd = 0.0;
    for (double v : row.xi) row.mean_xi += v;
    for (double v : row.logd) row.mean_logd += v;
    row.mean_xi /= static_cast<double>(row.xi.size());
    row.mean_logd /= static_cast<double>(row.logd.size());
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

namespace {

std::string bool_str(bool b) { return b ? "true" : "false"; }

// Key=value lines matching the attack subcommand's option names, so the echo
// reloads as a config file.
std::string config_echo(const AttackConfig& c) {
  std::string s;
  auto kv = [&s](const std::string& k, const std::string& v) { s += k + "=" + v + "\n"; };
  kv("scene", std::to_string(c.scene_index));
  kv("seed", std::to_string(c.seed));
  kv("schedule", c.sched_kind == ScheduleKind::kLinearBeta ? "linear" : "cosine");
  kv("steps", std::to_string(c.T));
  kv("noise-eta", fmt_g17(c.eta));
  kv("sched-p1", fmt_g17(c.sched_p1));
  kv("sched-p2", fmt_g17(c.sched_p2));
  kv("mode", guidance_mode_name(c.mode));
  kv("gamma", fmt_g17(c.gamma));
  kv("lambda", fmt_g17(c.lambda));
  kv("norm-match", bool_str(c.norm_match));
  kv("regions", std::to_string(c.srs.k));
  kv("srs-iters", std::to_string(c.srs.iters));
  kv("srs-eta", fmt_g17(c.srs.eta));
  kv("srs-clamp", fmt_g17(c.srs.clamp));
  kv("reproject", bool_str(c.mask_reproject));
  kv("quantize", bool_str(c.quantize_roundtrip));
  kv("sequential", bool_str(c.sequential));
  kv("ensemble-seed", std::to_string(c.ensemble.base_seed));
  kv("channels", std::to_string(c.ensemble.channels));
  kv("height", std::to_string(c.ensemble.height));
  kv("width", std::to_string(c.ensemble.width));
  kv("classes", std::to_string(c.ensemble.num_classes));
  kv("blob-amp", fmt_g17(c.ensemble.blob_amp));
  kv("component-var", fmt_g17(c.ensemble.component_var));
  kv("num-sources", std::to_string(c.ensemble.num_sources));
  kv("planted-gain", fmt_g17(c.ensemble.planted_gain));
  kv("source-decay", fmt_g17(c.ensemble.source_decay));
  kv("bg-scale", fmt_g17(c.ensemble.bg_scale));
  return s;
}

}  // namespace

void write_attack_report(const AttackReport& rep, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::path out(dir);
  fs::create_directories(out);
  write_text(out / "config.echo", config_echo(rep.cfg));

  std::string txt;
  txt += "attack report (" + rep.generation + " generation)\n";
  txt += "mode=" + std::string(guidance_mode_name(rep.cfg.mode)) +
         " gamma=" + fmt_g17(rep.cfg.gamma) + " lambda=" + fmt_g17(rep.cfg.lambda) +
         " regions=" + std::to_string(rep.cfg.srs.k) + " seed=" +
         std::to_string(rep.cfg.seed) + " scene=" + std::to_string(rep.cfg.scene_index) + "\n";
  if (!rep.ok()) txt += "error=" + rep.error + "\n";

  if (!rep.saliency.topk.empty()) {
    txt += "selected regions (rank: index @ (y,x) score):\n";
    for (size_t r = 0; r < rep.saliency.topk.size(); ++r) {
      int i = rep.saliency.topk[r];
      const Patch& p = rep.saliency.grid.patches[static_cast<size_t>(i)];
      txt += "  " + std::to_string(r + 1) + ": " + std::to_string(i) + " @ (" +
             std::to_string(p.y0) + "," + std::to_string(p.x0) + ") " +
             fmt_g17(rep.saliency.scores[static_cast<size_t>(i)]) + "\n";
    }
  }
  for (size_t j = 0; j < rep.xi.size(); ++j) {
    txt += "regions=" + std::to_string(j + 1) + " xi=" + fmt_g17(rep.xi[j]) +
           " xi_abs=" + fmt_g17(rep.xi_abs[j]) + " control_xi=" + fmt_g17(rep.control_xi[j]) +
           " terminal_logd=" + fmt_g17(rep.terminal_logd[j]) + "\n";
  }

  if (rep.x.numel() > 0) {
    write_image(out / "x.pgm", rep.x);
    write_tensor(out / "depth_before.tensor", rep.depth_before);
    auto lohi = write_image_normalized(out / "depth_before.pgm", rep.depth_before);
    txt += "depth_before.pgm range [" + fmt_g17(lohi.first) + "," + fmt_g17(lohi.second) +
           "]\n";
  }
  if (rep.z_final.numel() > 0) {
    write_image(out / "z_final.pgm", rep.z_final);
    write_tensor(out / "z_final.tensor", rep.z_final);
    write_tensor(out / "object.tensor", rep.object_final);
    write_mask_tensor(out / "region.pgm", rep.region.tensor());
    write_tensor(out / "depth_after.tensor", rep.depth_after);
    auto lohi = write_image_normalized(out / "depth_after.pgm", rep.depth_after);
    txt += "depth_after.pgm range [" + fmt_g17(lohi.first) + "," + fmt_g17(lohi.second) +
           "]\n";
  }
  write_text(out / "report.txt", txt);

  if (!rep.saliency.scores.empty()) {
    std::vector<std::vector<std::string>> rows;
    for (size_t i = 0; i < rep.saliency.scores.size(); ++i) {
      const Patch& p = rep.saliency.grid.patches[i];
      rows.push_back({std::to_string(i), std::to_string(p.y0), std::to_string(p.x0),
                      fmt_g17(rep.saliency.scores[i]), fmt_g17(rep.saliency.objectives[i])});
    }
    write_csv(out / "saliency.csv", {"index", "y0", "x0", "score", "objective"}, rows);
  }
  if (!rep.xi.empty()) {
    std::vector<std::vector<std::string>> rows;
    for (size_t j = 0; j < rep.xi.size(); ++j)
      rows.push_back({std::to_string(j + 1), fmt_g17(rep.xi[j]), fmt_g17(rep.xi_abs[j]),
                      fmt_g17(rep.control_xi[j]), fmt_g17(rep.terminal_logd[j])});
    write_csv(out / "summary.csv", {"regions", "xi", "xi_abs", "control_xi", "terminal_logd"},
              rows);
    std::vector<std::vector<std::string>> erows;
    for (size_t j = 0; j < rep.energy.size(); ++j)
      for (size_t i = 0; i < rep.energy[j].size(); ++i)
        erows.push_back({std::to_string(j + 1),
                         std::to_string(rep.cfg.T - static_cast<int>(i)),
                         fmt_g17(rep.energy[j][i])});
    write_csv(out / "energy.csv", {"regions", "t", "energy"}, erows);
  }
}

void write_comparison_report(const ComparisonReport& rep, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::path out(dir);
  fs::create_directories(out);
  std::vector<std::string> header = {"mode", "gamma", "mean_xi", "mean_logd"};
  for (int s : rep.seeds) header.push_back("xi_" + std::to_string(s));
  for (int s : rep.seeds) header.push_back("logd_" + std::to_string(s));
  std::vector<std::vector<std::string>> rows;
  for (const ComparisonRow& r : rep.rows) {
    std::vector<std::string> row = {guidance_mode_name(r.mode), fmt_g17(r.gamma),
                                    fmt_g17(r.mean_xi), fmt_g17(r.mean_logd)};
    for (double v : r.xi) row.push_back(fmt_g17(v));
    for (double v : r.logd) row.push_back(fmt_g17(v));
    rows.push_back(std::move(row));
  }
  write_csv(out / "comparison.csv", header, rows);
}

}  // namespace advobj
