#include <doctest.h>

#include <cmath>
#include <set>

#include "advobj/io.hpp"
#include "advobj/pipeline.hpp"
#include "support/testmodels.hpp"

using namespace advobj;
namespace tt = advobj::testing;

TEST_CASE("template mixture mirrors the scene family") {
  EnsembleParams p;
  NoiseSchedule s = build_schedule(ScheduleKind::kLinearBeta, 50, 0.0, 1e-4, 0.2);
  GaussianMixtureScore m = make_template_mixture(p, s);
  REQUIRE(m.num_components() == 4);
  for (int k = 0; k < 4; ++k) {
    const MixtureComponent& c = m.component(k);
    CHECK(c.weight == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(c.mean.shape == Shape{1, 16, 16});
    for (double v : c.var.data) CHECK(v == 0.01);
    for (double v : c.mean.data) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  // Distinct classes place their blob differently.
  CHECK_FALSE(bit_equal(m.component(0).mean, m.component(1).mean));
}

TEST_CASE("scenes are deterministic and carry a decaying source ladder") {
  EnsembleParams p;
  ToyScene a = make_toy_scene(p, 3);
  ToyScene b = make_toy_scene(p, 3);
  CHECK(bit_equal(a.x, b.x));
  CHECK(a.cls == b.cls);
  CHECK(a.target_y0 == b.target_y0);
  REQUIRE(a.sources.size() == 4);

  // Sources are distinct grid cells, none the target cell.
  std::set<std::pair<int, int>> cells;
  for (const PlantedSource& s : a.sources) {
    CHECK(s.y0 % 4 == 0);
    CHECK(s.x0 % 4 == 0);
    CHECK((s.y0 != a.target_y0 || s.x0 != a.target_x0));
    cells.insert({s.y0, s.x0});
  }
  CHECK(cells.size() == 4);
  for (size_t i = 1; i < a.sources.size(); ++i)
    CHECK(a.sources[i].gain ==
          doctest::Approx(a.sources[i - 1].gain * p.source_decay).epsilon(1e-12));
  CHECK(a.sources[0].gain == p.planted_gain);

  ToyScene c = make_toy_scene(p, 4);
  CHECK_FALSE(bit_equal(a.x, c.x));

  for (double v : a.x.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(a.target.area() == 16);

  EnsembleParams bad = p;
  bad.height = 15;
  CHECK_THROWS_AS(make_toy_scene(bad, 0), std::invalid_argument);
  bad = p;
  bad.num_sources = 20;
  CHECK_THROWS_AS(make_toy_scene(bad, 0), std::invalid_argument);
}

TEST_CASE("mask union is an elementwise or") {
  Mask a = box_mask(8, 8, 0, 0, 2, 2, Mask::Role::kAdversarial);
  Mask b = box_mask(8, 8, 1, 1, 2, 2, Mask::Role::kAdversarial);
  Mask u = union_masks({&a, &b});
  CHECK(u.role() == Mask::Role::kAdversarial);
  CHECK(u.area() == 7);
  CHECK_THROWS_AS(union_masks({}), std::invalid_argument);
}

TEST_CASE("per-mode gamma signs") {
  CHECK(signed_gamma(GuidanceMode::kNone, 0.4) == 0.0);
  CHECK(signed_gamma(GuidanceMode::kJvpg, 0.4) == -0.4);
  CHECK(signed_gamma(GuidanceMode::kJvpg, -0.4) == -0.4);
  CHECK(signed_gamma(GuidanceMode::kEnergyDps, -0.4) == 0.4);
  CHECK(signed_gamma(GuidanceMode::kMpgd, 0.4) == 0.4);
}

TEST_CASE("attack run produces a coherent report") {
  AttackConfig cfg;
  cfg.scene_index = 2;
  cfg.seed = 5;
  cfg.srs.k = 2;
  AttackReport rep = run_attack(cfg);
  REQUIRE(rep.ok());
  CHECK(rep.generation == "joint");
  REQUIRE(rep.xi.size() == 2);
  REQUIRE(rep.xi_abs.size() == 2);
  REQUIRE(rep.control_xi.size() == 2);
  REQUIRE(rep.terminal_logd.size() == 2);
  REQUIRE(rep.energy.size() == 2);
  CHECK(rep.energy[0].size() == 50);

  // The attack moved the metric; the control stayed near zero.
  CHECK(rep.xi[1] > 0.05);
  CHECK(std::abs(rep.control_xi[1]) < 0.2);

  // Background preservation: outside the chosen regions the final scene is
  // the original bit for bit.
  ToyScene scene = make_toy_scene(cfg.ensemble, cfg.scene_index);
  const Tensor& region = rep.region.tensor();
  CHECK(rep.region.area() == 32);
  for (size_t i = 0; i < rep.z_final.data.size(); ++i)
    if (region.data[i] == 0.0) CHECK(rep.z_final.data[i] == scene.x.data[i]);

  // The object is the content inside the regions.
  for (size_t i = 0; i < rep.object_final.data.size(); ++i)
    if (region.data[i] == 0.0) CHECK(rep.object_final.data[i] == 0.0);

  // Depth maps follow the victim on original and attacked scenes.
  CHECK(bit_equal(rep.depth_before, scene.victim.depth(scene.x)));
  CHECK(bit_equal(rep.depth_after, scene.victim.depth(rep.z_final)));

  // Determinism: an identical config reproduces every float.
  AttackReport rep2 = run_attack(cfg);
  CHECK(rep2.xi == rep.xi);
  CHECK(rep2.control_xi == rep.control_xi);
  CHECK(bit_equal(rep2.z_final, rep.z_final));
}

TEST_CASE("sequential generation attacks regions one at a time") {
  AttackConfig cfg;
  cfg.scene_index = 1;
  cfg.seed = 9;
  cfg.srs.k = 2;
  cfg.sequential = true;
  AttackReport rep = run_attack(cfg);
  REQUIRE(rep.ok());
  CHECK(rep.generation == "sequential");
  CHECK(rep.xi.size() == 2);
  ToyScene scene = make_toy_scene(cfg.ensemble, cfg.scene_index);
  const Tensor& region = rep.region.tensor();
  for (size_t i = 0; i < rep.z_final.data.size(); ++i)
    if (region.data[i] == 0.0) CHECK(rep.z_final.data[i] == scene.x.data[i]);
}

TEST_CASE("quantize round trip lands region pixels on the 8-bit grid") {
  AttackConfig cfg;
  cfg.scene_index = 0;
  cfg.seed = 1;
  cfg.srs.k = 1;
  cfg.quantize_roundtrip = true;
  AttackReport rep = run_attack(cfg);
  REQUIRE(rep.ok());
  ToyScene scene = make_toy_scene(cfg.ensemble, cfg.scene_index);
  const Tensor& region = rep.region.tensor();
  for (size_t i = 0; i < rep.z_final.data.size(); ++i) {
    if (region.data[i] == 1.0) {
      double v = rep.z_final.data[i] * 255.0;
      CHECK(std::abs(v - std::round(v)) < 1e-9);
    } else {
      CHECK(rep.z_final.data[i] == scene.x.data[i]);
    }
  }
}

TEST_CASE("failures surface as error text instead of throws") {
  AttackConfig cfg;
  cfg.scene_index = -3;
  AttackReport rep = run_attack(cfg);
  CHECK_FALSE(rep.ok());
  CHECK(rep.error.find("scene index") != std::string::npos);
}

TEST_CASE("attack report files are byte stable") {
  AttackConfig cfg;
  cfg.scene_index = 0;
  cfg.seed = 2;
  cfg.srs.k = 2;
  AttackReport rep = run_attack(cfg);
  REQUIRE(rep.ok());

  tt::ScratchDir d1("rep1"), d2("rep2");
  write_attack_report(rep, d1.str());
  write_attack_report(run_attack(cfg), d2.str());

  for (const char* f :
       {"config.echo", "report.txt", "summary.csv", "saliency.csv", "energy.csv", "x.pgm",
        "z_final.pgm", "region.pgm", "depth_before.tensor", "depth_after.tensor",
        "object.tensor", "z_final.tensor"}) {
    CAPTURE(f);
    REQUIRE(std::filesystem::exists(d1.path / f));
    CHECK(tt::files_identical(d1.path / f, d2.path / f));
  }

  std::string echo = tt::slurp(d1.path / "config.echo");
  for (const char* key : {"scene=", "seed=", "mode=", "gamma=", "lambda=", "regions=",
                          "num-sources=", "source-decay=", "ensemble-seed="})
    CHECK(echo.find(key) != std::string::npos);

  // summary.csv: header plus one row per region count.
  std::string summary = tt::slurp(d1.path / "summary.csv");
  CHECK(std::count(summary.begin(), summary.end(), '\n') == 3);
}

TEST_CASE("guidance comparison sweeps modes over shared seeds") {
  AttackConfig base;
  base.srs.k = 2;
  base.gamma = 0.4;
  std::vector<GuidanceMode> modes = {GuidanceMode::kNone, GuidanceMode::kJvpg};
  ComparisonReport rep = run_guidance_comparison(base, modes, {0, 1});

  REQUIRE(rep.rows.size() == 2);
  REQUIRE(rep.seeds == std::vector<int>{0, 1});
  for (const ComparisonRow& row : rep.rows) {
    REQUIRE(row.xi.size() == 2);
    REQUIRE(row.logd.size() == 2);
    double mean = (row.xi[0] + row.xi[1]) / 2.0;
    CHECK(row.mean_xi == doctest::Approx(mean).epsilon(1e-15));
  }
  CHECK(rep.rows[0].gamma == 0.0);
  CHECK(rep.rows[1].gamma == -0.4);
  // Guided beats unguided on this family.
  CHECK(rep.rows[1].mean_xi > rep.rows[0].mean_xi);

  tt::ScratchDir d("cmp");
  write_comparison_report(rep, d.str());
  std::string csv = tt::slurp(d.path / "comparison.csv");
  CHECK(csv.find("mode,gamma,mean_xi,mean_logd") == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}
