#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "advobj/guidance.hpp"
#include "advobj/io.hpp"
#include "advobj/pipeline.hpp"
#include "advobj/rng.hpp"
#include "advobj/spectra.hpp"

namespace advobj {
namespace {

namespace fs = std::filesystem;

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "linear") return ScheduleKind::kLinearBeta;
  if (name == "cosine") return ScheduleKind::kCosine;
  throw std::invalid_argument("schedule kind '" + name + "' not one of linear|cosine");
}

VictimModel::Kind parse_victim_kind(const std::string& name) {
  if (name == "patch_pool") return VictimModel::Kind::kPatchPool;
  if (name == "tiny_conv") return VictimModel::Kind::kTinyConv;
  if (name == "linear_mean") return VictimModel::Kind::kLinearMean;
  throw std::invalid_argument("victim kind '" + name +
                              "' not one of patch_pool|tiny_conv|linear_mean");
}

std::vector<int> parse_seed_list(const std::string& text) {
  std::vector<int> seeds;
  auto range = text.find("..");
  if (range != std::string::npos) {
    int lo = std::stoi(text.substr(0, range));
    int hi = std::stoi(text.substr(range + 2));
    if (hi < lo) throw std::invalid_argument("seed range is reversed: " + text);
    for (int s = lo; s <= hi; ++s) seeds.push_back(s);
    return seeds;
  }
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    if (comma > pos) seeds.push_back(std::stoi(text.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  if (seeds.empty()) throw std::invalid_argument("empty seed list");
  return seeds;
}

std::vector<GuidanceMode> parse_mode_list(const std::string& text) {
  std::vector<GuidanceMode> modes;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    if (comma > pos) modes.push_back(parse_guidance_mode(text.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  if (modes.empty()) throw std::invalid_argument("empty mode list");
  return modes;
}

// Raw option values shared by the scene-driven subcommands; resolved into an
// AttackConfig after parsing.
struct AttackOpts {
  AttackConfig cfg;
  std::string schedule = "linear";
  std::string mode = "jvpg";
  std::string out;
};

void add_schedule_options(CLI::App* sc, AttackOpts& o) {
  sc->add_option("--schedule", o.schedule, "noise schedule kind: linear|cosine");
  sc->add_option("--steps", o.cfg.T, "number of diffusion steps");
  sc->add_option("--noise-eta", o.cfg.eta, "stochasticity knob (0 = deterministic)");
  sc->add_option("--sched-p1", o.cfg.sched_p1, "schedule parameter 1 (linear: beta start)");
  sc->add_option("--sched-p2", o.cfg.sched_p2, "schedule parameter 2 (linear: beta end)");
}

void add_ensemble_options(CLI::App* sc, AttackOpts& o) {
  sc->add_option("--scene", o.cfg.scene_index, "scene index in the procedural family");
  sc->add_option("--ensemble-seed", o.cfg.ensemble.base_seed, "scene family identity seed");
  sc->add_option("--channels", o.cfg.ensemble.channels, "image channels");
  sc->add_option("--height", o.cfg.ensemble.height, "image height");
  sc->add_option("--width", o.cfg.ensemble.width, "image width");
  sc->add_option("--classes", o.cfg.ensemble.num_classes, "number of scene templates");
  sc->add_option("--blob-amp", o.cfg.ensemble.blob_amp, "template blob amplitude");
  sc->add_option("--component-var", o.cfg.ensemble.component_var, "template variance");
  sc->add_option("--num-sources", o.cfg.ensemble.num_sources, "planted source count");
  sc->add_option("--planted-gain", o.cfg.ensemble.planted_gain, "strongest source gain");
  sc->add_option("--source-decay", o.cfg.ensemble.source_decay,
                 "gain ratio between consecutive sources");
  sc->add_option("--bg-scale", o.cfg.ensemble.bg_scale, "non-planted weight damping");
}

void add_attack_options(CLI::App* sc, AttackOpts& o) {
  add_schedule_options(sc, o);
  add_ensemble_options(sc, o);
  sc->add_option("--seed", o.cfg.seed, "run seed; every random draw derives from it");
  sc->add_option("--mode", o.mode, "guidance mode: none|energy_dps|mpgd|jvpg");
  sc->add_option("--gamma", o.cfg.gamma, "guidance strength (signed)");
  sc->add_option("--lambda", o.cfg.lambda, "target depth scaling in the attack loss");
  sc->add_option("--norm-match", o.cfg.norm_match, "rescale gamma by score/guidance norms");
  sc->add_option("--regions", o.cfg.srs.k, "number of selected regions");
  sc->add_option("--srs-iters", o.cfg.srs.iters, "ascent iterations per patch");
  sc->add_option("--srs-eta", o.cfg.srs.eta, "ascent step size");
  sc->add_option("--srs-clamp", o.cfg.srs.clamp, "L-inf bound on patch perturbations");
  sc->add_option("--reproject", o.cfg.mask_reproject, "re-project the background each step");
  sc->add_option("--quantize", o.cfg.quantize_roundtrip, "8-bit round-trip of the object");
  sc->add_option("--sequential", o.cfg.sequential, "attack regions one at a time");
}

AttackConfig resolve(AttackOpts& o) {
  o.cfg.sched_kind = parse_schedule_kind(o.schedule);
  o.cfg.mode = parse_guidance_mode(o.mode);
  return o.cfg;
}

int run_schedule_cmd(AttackOpts& o) {
  AttackConfig cfg = resolve(o);
  NoiseSchedule sched =
      build_schedule(cfg.sched_kind, cfg.T, cfg.eta, cfg.sched_p1, cfg.sched_p2);
  std::string table = schedule_table(sched);
  std::cout << table;
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    write_text(fs::path(o.out) / "schedule.txt", table);
  }
  return 0;
}

int run_sample_cmd(AttackOpts& o) {
  AttackConfig cfg = resolve(o);
  NoiseSchedule sched =
      build_schedule(cfg.sched_kind, cfg.T, cfg.eta, cfg.sched_p1, cfg.sched_p2);
  GaussianMixtureScore score = make_template_mixture(cfg.ensemble, sched);
  ToyScene scene = make_toy_scene(cfg.ensemble, cfg.scene_index);
  Condition c = Condition::cls(scene.cls);

  // fixed demonstration region: the scene's planted source cell
  const PlantedSource& s0 = scene.sources.front();
  Mask region = box_mask(cfg.ensemble.height, cfg.ensemble.width, s0.y0, s0.x0, s0.side,
                         s0.side, Mask::Role::kAdversarial);
  AdversarialEnergy energy(scene.victim, scene.x, scene.target, cfg.lambda, region, c);
  EnergyGuidanceHook hook(score, c, cfg.mode, cfg.gamma, &energy.energy(), cfg.norm_match);
  const Tensor& mask2d = region.tensor();
  if (cfg.mask_reproject) hook.set_inpaint_context(&scene.x, &mask2d);
  SamplerConfig scfg{&sched, cfg.mode, cfg.gamma, cfg.seed, cfg.mask_reproject};
  Trajectory traj = sample(score, c, scfg, &hook);

  fs::create_directories(o.out);
  fs::path out(o.out);
  int n = static_cast<int>(traj.terminal().numel());
  Tensor states({sched.T + 1, n}, std::vector<double>(static_cast<size_t>(sched.T + 1) * n));
  for (int t = 0; t <= sched.T; ++t)
    for (int i = 0; i < n; ++i)
      states.data[static_cast<size_t>(t) * n + i] =
          traj.states[static_cast<size_t>(t)].data[static_cast<size_t>(i)];
  write_tensor(out / "states.tensor", states);
  write_tensor(out / "terminal.tensor", traj.terminal());

  std::vector<std::vector<std::string>> rows;
  for (int t = sched.T; t >= 1; --t) {
    const StepRecord& s = traj.steps[static_cast<size_t>(t)];
    rows.push_back({std::to_string(t), fmt_g17(s.energy),
                    fmt_g17(norm2(traj.states[static_cast<size_t>(t)])),
                    fmt_g17(s.guidance_norm), fmt_g17(s.delta_norm),
                    fmt_g17(s.jdelta_norm)});
  }
  write_csv(out / "trace.csv", {"t", "energy", "norm_z", "guidance_norm", "delta_norm",
                                "jdelta_norm"},
            rows);
  std::cout << "terminal_norm=" << fmt_g17(norm2(traj.terminal()))
            << " terminal_logd=" << fmt_g17(score.log_density0(traj.terminal())) << "\n";
  return 0;
}

int run_srs_cmd(AttackOpts& o, const std::string& image_path, const std::string& mask_path,
                const std::string& victim_kind, std::uint64_t victim_seed) {
  AttackConfig cfg = resolve(o);
  SrsConfig srs = cfg.srs;
  srs.seed = derive_seed(cfg.seed, "srs");

  auto emit = [&](const Tensor& x, const Mask& target, const VictimModel& victim) {
    SaliencyResult res = run_srs(x, target, victim, srs);
    fs::create_directories(o.out);
    fs::path out(o.out);
    std::vector<std::vector<std::string>> rows;
    for (size_t i = 0; i < res.scores.size(); ++i) {
      const Patch& p = res.grid.patches[i];
      rows.push_back({std::to_string(i), std::to_string(p.y0), std::to_string(p.x0),
                      fmt_g17(res.scores[i]), fmt_g17(res.objectives[i])});
    }
    write_csv(out / "saliency.csv", {"index", "y0", "x0", "score", "objective"}, rows);
    Tensor heat = Tensor::zeros({x.shape[1], x.shape[2]});
    for (size_t i = 0; i < res.scores.size(); ++i) {
      const Patch& p = res.grid.patches[i];
      for (int y = p.y0; y < p.y0 + res.grid.side; ++y)
        for (int xx = p.x0; xx < p.x0 + res.grid.side; ++xx)
          heat.data[static_cast<size_t>(y) * x.shape[2] + xx] = res.scores[i];
    }
    write_image_normalized(out / "heatmap.pgm", heat);
    for (size_t r = 0; r < res.topk.size(); ++r) {
      const Patch& p = res.grid.patches[static_cast<size_t>(res.topk[r])];
      write_mask_tensor(out / ("topk_" + std::to_string(r + 1) + ".pgm"), p.mask.tensor());
      std::cout << "rank=" << r + 1 << " index=" << res.topk[r] << " origin=(" << p.y0 << ","
                << p.x0 << ") score=" << fmt_g17(res.scores[static_cast<size_t>(res.topk[r])])
                << "\n";
    }
  };

  if (!image_path.empty()) {
    if (mask_path.empty()) throw std::invalid_argument("srs: --image needs --mask");
    Tensor x = read_image(image_path);
    Mask target(read_mask_tensor(mask_path), Mask::Role::kTarget);
    VictimGeometry g;
    g.channels = x.shape[0];
    g.height = x.shape[1];
    g.width = x.shape[2];
    VictimModel victim = make_victim(parse_victim_kind(victim_kind), victim_seed, g);
    emit(x, target, victim);
  } else {
    ToyScene scene = make_toy_scene(cfg.ensemble, cfg.scene_index);
    emit(scene.x, scene.target, scene.victim);
  }
  return 0;
}

int run_attack_cmd(AttackOpts& o) {
  AttackConfig cfg = resolve(o);
  AttackReport rep = run_attack(cfg);
  write_attack_report(rep, o.out);
  std::cerr << "wall_seconds=" << rep.wall_seconds << "\n";
  if (!rep.ok()) {
    std::cerr << "attack failed: " << rep.error << "\n";
    return 1;
  }
  for (size_t j = 0; j < rep.xi.size(); ++j)
    std::cout << "regions=" << j + 1 << " xi=" << fmt_g17(rep.xi[j])
              << " control_xi=" << fmt_g17(rep.control_xi[j]) << "\n";
  return 0;
}

int run_compare_cmd(AttackOpts& o, const std::string& modes_text,
                    const std::string& seeds_text) {
  AttackConfig cfg = resolve(o);
  ComparisonReport rep =
      run_guidance_comparison(cfg, parse_mode_list(modes_text), parse_seed_list(seeds_text));
  write_comparison_report(rep, o.out);
  for (const ComparisonRow& r : rep.rows)
    std::cout << "mode=" << guidance_mode_name(r.mode) << " gamma=" << fmt_g17(r.gamma)
              << " mean_xi=" << fmt_g17(r.mean_xi) << " mean_logd=" << fmt_g17(r.mean_logd)
              << "\n";
  return 0;
}

int run_spectrum_cmd(AttackOpts& o, int t_at, int cls, int iters, double tol, double magnitude,
                     int runs) {
  AttackConfig cfg = resolve(o);
  NoiseSchedule sched =
      build_schedule(cfg.sched_kind, cfg.T, cfg.eta, cfg.sched_p1, cfg.sched_p2);
  if (t_at <= 0) t_at = sched.T / 2;
  GaussianMixtureScore score = make_template_mixture(cfg.ensemble, sched);
  ToyScene scene = make_toy_scene(cfg.ensemble, cfg.scene_index);
  Condition c = cls >= 0 ? Condition::cls(cls) : Condition::none();

  Rng rng(derive_seed(cfg.seed, "spectrum-state"));
  Tensor z_t = forward_noise(scene.x, t_at, rng.normal_tensor(scene.x.shape), sched);

  fs::create_directories(o.out);
  fs::path out(o.out);
  SpectralResult svd = full_svd(full_jacobian(score, z_t, t_at, c));
  std::vector<std::vector<std::string>> srows;
  for (size_t i = 0; i < svd.sigma.size(); ++i)
    srows.push_back({std::to_string(i), fmt_g17(svd.sigma[i])});
  write_csv(out / "singvals.csv", {"index", "sigma"}, srows);

  SpectralResult top = extremal_singular(score, z_t, t_at, c, SingularEnd::kTop, iters, tol,
                                         derive_seed(cfg.seed, "power-top"));
  SpectralResult bot = extremal_singular(score, z_t, t_at, c, SingularEnd::kBottom, iters, tol,
                                         derive_seed(cfg.seed, "power-bottom"));
  write_csv(out / "extremal.csv", {"which", "sigma", "iterations", "converged"},
            {{"top", fmt_g17(top.sigma[0]), std::to_string(top.iterations),
              top.converged ? "1" : "0"},
             {"bottom", fmt_g17(bot.sigma[0]), std::to_string(bot.iterations),
              bot.converged ? "1" : "0"}});
  write_tensor(out / "u_top.tensor", top.u[0]);
  write_tensor(out / "v_top.tensor", top.v[0]);
  write_tensor(out / "u_bottom.tensor", bot.u[0]);
  write_tensor(out / "v_bottom.tensor", bot.v[0]);
  std::cout << "sigma_max=" << fmt_g17(svd.sigma.front())
            << " sigma_min=" << fmt_g17(svd.sigma.back()) << " power_top="
            << fmt_g17(top.sigma[0]) << " power_bottom=" << fmt_g17(bot.sigma[0]) << "\n";

  std::vector<std::vector<std::string>> irows;
  for (int r = 0; r < runs; ++r) {
    SamplerConfig scfg{&sched, GuidanceMode::kNone, 0.0, derive_seed(cfg.seed, "inject", r),
                       false};
    InjectionRecord a = inject_direction(score, c, scfg, t_at, top.u[0], magnitude);
    InjectionRecord b = inject_direction(score, c, scfg, t_at, bot.u[0], magnitude);
    irows.push_back({std::to_string(r), "top", fmt_g17(magnitude), fmt_g17(a.log_density)});
    irows.push_back({std::to_string(r), "bottom", fmt_g17(magnitude), fmt_g17(b.log_density)});
  }
  write_csv(out / "injection.csv", {"run", "direction", "magnitude", "logd"}, irows);
  return 0;
}

int run_eval_mrsr_cmd(const std::string& image_path, const std::string& adv_path,
                      const std::string& mask_path, const std::string& victim_kind,
                      std::uint64_t victim_seed) {
  Tensor x = read_image(image_path);
  Tensor z = read_image(adv_path);
  Mask target(read_mask_tensor(mask_path), Mask::Role::kTarget);
  VictimGeometry g;
  g.channels = x.shape[0];
  g.height = x.shape[1];
  g.width = x.shape[2];
  VictimModel victim = make_victim(parse_victim_kind(victim_kind), victim_seed, g);
  std::cout << fmt_g17(mrsr(victim, x, z, target)) << "\n";
  return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"adversarial-object laboratory for toy depth estimators"};
  app.require_subcommand(1);

  AttackOpts sched_o, sample_o, srs_o, attack_o, compare_o, spectrum_o;
  std::string srs_image, srs_mask, srs_victim = "patch_pool";
  std::uint64_t srs_victim_seed = 0;
  std::string compare_modes = "jvpg,energy_dps,mpgd", compare_seeds = "0..9";
  int spec_t = 0, spec_cls = -1, spec_iters = 20000, spec_runs = 8;
  double spec_tol = 1e-9, spec_magnitude = 6.0;
  std::string em_image, em_adv, em_mask, em_victim = "patch_pool";
  std::uint64_t em_victim_seed = 0;

  CLI::App* sc_sched = app.add_subcommand("schedule", "print the noise schedule table");
  add_schedule_options(sc_sched, sched_o);
  sc_sched->add_option("--out", sched_o.out, "also write schedule.txt here");
  sc_sched->set_config("--config");

  CLI::App* sc_sample = app.add_subcommand("sample", "run one guided or unguided trajectory");
  add_attack_options(sc_sample, sample_o);
  sample_o.cfg.mask_reproject = false;
  sc_sample->add_option("--out", sample_o.out, "output directory")->required();
  sc_sample->set_config("--config");

  CLI::App* sc_srs = app.add_subcommand("srs", "rank candidate regions by saliency");
  add_attack_options(sc_srs, srs_o);
  sc_srs->add_option("--image", srs_image, "scene image (PGM/PPM) instead of --scene");
  sc_srs->add_option("--mask", srs_mask, "target mask (PGM)");
  sc_srs->add_option("--victim-kind", srs_victim, "victim for file inputs");
  sc_srs->add_option("--victim-seed", srs_victim_seed, "victim weights seed");
  sc_srs->add_option("--out", srs_o.out, "output directory")->required();
  sc_srs->set_config("--config");

  CLI::App* sc_attack = app.add_subcommand("attack", "full region-selection + generation run");
  add_attack_options(sc_attack, attack_o);
  sc_attack->add_option("--out", attack_o.out, "output directory")->required();
  sc_attack->set_config("--config");

  CLI::App* sc_compare = app.add_subcommand("compare", "guidance strategies side by side");
  add_attack_options(sc_compare, compare_o);
  sc_compare->add_option("--modes", compare_modes, "comma list of guidance modes");
  sc_compare->add_option("--seeds", compare_seeds, "seed set: lo..hi or comma list");
  sc_compare->add_option("--out", compare_o.out, "output directory")->required();
  sc_compare->set_config("--config");

  CLI::App* sc_spec = app.add_subcommand("spectrum", "score-Jacobian spectral analysis");
  add_attack_options(sc_spec, spectrum_o);
  sc_spec->add_option("--t-at", spec_t, "step at which the Jacobian is taken (0 = T/2)");
  sc_spec->add_option("--class", spec_cls, "condition class (-1 = unconditional)");
  sc_spec->add_option("--power-iters", spec_iters, "power iteration budget");
  sc_spec->add_option("--power-tol", spec_tol, "power iteration tolerance");
  sc_spec->add_option("--magnitude", spec_magnitude, "injection magnitude");
  sc_spec->add_option("--runs", spec_runs, "injection trajectories per direction");
  sc_spec->add_option("--out", spectrum_o.out, "output directory")->required();
  sc_spec->set_config("--config");

  CLI::App* sc_eval = app.add_subcommand("eval-mrsr", "relative target-depth shift of z vs x");
  sc_eval->add_option("--image", em_image, "original image")->required();
  sc_eval->add_option("--adv", em_adv, "attacked image")->required();
  sc_eval->add_option("--mask", em_mask, "target mask (PGM)")->required();
  sc_eval->add_option("--victim-kind", em_victim, "victim kind");
  sc_eval->add_option("--victim-seed", em_victim_seed, "victim weights seed");
  sc_eval->set_config("--config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (sc_sched->parsed()) return run_schedule_cmd(sched_o);
    if (sc_sample->parsed()) return run_sample_cmd(sample_o);
    if (sc_srs->parsed())
      return run_srs_cmd(srs_o, srs_image, srs_mask, srs_victim, srs_victim_seed);
    if (sc_attack->parsed()) return run_attack_cmd(attack_o);
    if (sc_compare->parsed()) return run_compare_cmd(compare_o, compare_modes, compare_seeds);
    if (sc_spec->parsed())
      return run_spectrum_cmd(spectrum_o, spec_t, spec_cls, spec_iters, spec_tol,
                              spec_magnitude, spec_runs);
    if (sc_eval->parsed())
      return run_eval_mrsr_cmd(em_image, em_adv, em_mask, em_victim, em_victim_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace advobj
