#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "mgtr/errors.hpp"
#include "mgtr/motion.hpp"
#include "mgtr/scene.hpp"

using namespace mgtr;

namespace {

SceneGenConfig small_config() {
  SceneGenConfig cfg;
  cfg.num_scenarios = 4;
  cfg.voxel_hw = 24;
  cfg.voxel_cell = 2.0;
  return cfg;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("constant velocity rollout is exact") {
  motion::Plan plan = motion::make_plan(
      Vec2(3.0, -2.0), Vec2(1.25, 0.5),
      {motion::Segment{motion::Segment::Kind::ConstVel, 1e9, {}, {}, 0, 0}});
  const double dt = 0.1;
  for (int k = 1; k <= 80; ++k) {
    const motion::State s = plan.at(k * dt);
    CHECK(s.p.x() == 3.0 + 1.25 * (k * dt));
    CHECK(s.p.y() == -2.0 + 0.5 * (k * dt));
  }
}

TEST_CASE("arc endpoint matches arc-length integration") {
  // independent oracle: integrate heading numerically at fine resolution
  const double speed = 6.0, curvature = 1.0 / 7.5, T = 4.0;
  motion::Plan plan = motion::make_plan(
      Vec2(1.0, 2.0), Vec2(speed, 0.0),
      {motion::Segment{motion::Segment::Kind::Arc, 1e9, {}, {}, curvature, 0}});

  const int steps = 4'000'000;
  const double h = T / steps;
  double x = 1.0, y = 2.0, theta = 0.0;
  for (int i = 0; i < steps; ++i) {
    // midpoint rule on the unit-speed ODE
    const double tm = theta + 0.5 * h * speed * curvature;
    x += h * speed * std::cos(tm);
    y += h * speed * std::sin(tm);
    theta += h * speed * curvature;
  }
  const motion::State end = plan.at(T);
  CHECK(std::abs(end.p.x() - x) < 1e-9);
  CHECK(std::abs(end.p.y() - y) < 1e-9);
}

TEST_CASE("generation is deterministic") {
  SceneGenConfig cfg = small_config();
  auto a = generate_synthetic(99, cfg);
  auto b = generate_synthetic(99, cfg);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(scenario_to_json_line(a[i]) == scenario_to_json_line(b[i]));
  }
  auto c = generate_synthetic(100, cfg);
  CHECK(scenario_to_json_line(a[0]) != scenario_to_json_line(c[0]));
}

TEST_CASE("invalid config rejected") {
  SceneGenConfig cfg = small_config();
  cfg.num_scenarios = 0;
  CHECK_THROWS_AS(generate_synthetic(1, cfg), ContractError);
  cfg = small_config();
  cfg.future_steps = -1;
  CHECK_THROWS_AS(generate_synthetic(1, cfg), ContractError);
  cfg = small_config();
  cfg.dt = 0.0;
  CHECK_THROWS_AS(generate_synthetic(1, cfg), ContractError);
}

TEST_CASE("generated scenarios satisfy type invariants") {
  SceneGenConfig cfg = small_config();
  cfg.num_scenarios = 1;
  for (int seed = 0; seed < 1000; ++seed) {
    const Scenario s = generate_scenario(static_cast<std::uint64_t>(seed), 0, cfg);
    CHECK_NOTHROW(validate_scenario(s, true));
  }
}

TEST_CASE("futures are dynamically consistent") {
  SceneGenConfig cfg = small_config();
  cfg.num_scenarios = 20;
  auto scenarios = generate_synthetic(7, cfg);
  for (const auto& s : scenarios) {
    for (const auto& a : s.agents) {
      REQUIRE(!a.future.empty());
      const auto& f = a.future;
      for (std::size_t k = 0; k + 1 < f.size(); ++k) {
        // central difference, using the current state for k = 0
        const double px = k == 0 ? a.current().x : f[k - 1].x;
        const double py = k == 0 ? a.current().y : f[k - 1].y;
        const double vx = (f[k + 1].x - px) / (2 * cfg.dt);
        const double vy = (f[k + 1].y - py) / (2 * cfg.dt);
        CHECK(std::abs(vx - f[k].vx) < 1e-6);
        CHECK(std::abs(vy - f[k].vy) < 1e-6);
      }
    }
  }
}

TEST_CASE("save/load round-trip is byte identical") {
  SceneGenConfig cfg = small_config();
  auto scenarios = generate_synthetic(5, cfg);
  const std::string p1 = temp_path("mgtr_rt1.ndjson");
  const std::string p2 = temp_path("mgtr_rt2.ndjson");
  save_scenarios(p1, scenarios);
  auto loaded = load_scenarios(p1);
  REQUIRE(loaded.size() == scenarios.size());
  save_scenarios(p2, loaded);

  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  CHECK(!s1.empty());
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("loader reports parse errors with position") {
  const std::string p = temp_path("mgtr_bad.ndjson");
  {
    std::ofstream out(p);
    out << "{\"schema_version\": 1, \"broken\n";
  }
  try {
    load_scenarios(p);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    std::string msg = e.what();
    CHECK(msg.find("line 1") != std::string::npos);
    CHECK(msg.find("byte") != std::string::npos);
  }
  std::remove(p.c_str());
}

TEST_CASE("loader rejects schema version mismatch") {
  SceneGenConfig cfg = small_config();
  cfg.num_scenarios = 1;
  auto scenarios = generate_synthetic(5, cfg);
  std::string line = scenario_to_json_line(scenarios[0]);
  const auto pos = line.find("\"schema_version\":1");
  REQUIRE(pos != std::string::npos);
  line.replace(pos, 18, "\"schema_version\":9");
  const std::string p = temp_path("mgtr_schema.ndjson");
  {
    std::ofstream out(p);
    out << line << "\n";
  }
  CHECK_THROWS_AS(load_scenarios(p), SchemaError);
  std::remove(p.c_str());
}

TEST_CASE("streaming reader matches bulk loader") {
  SceneGenConfig cfg = small_config();
  auto scenarios = generate_synthetic(21, cfg);
  const std::string p = temp_path("mgtr_stream.ndjson");
  save_scenarios(p, scenarios);
  ScenarioReader reader(p);
  REQUIRE(reader.size() == scenarios.size());
  for (std::size_t i = 0; i < reader.size(); ++i) {
    CHECK(scenario_to_json_line(reader.load(i)) == scenario_to_json_line(scenarios[i]));
  }
  std::remove(p.c_str());
}

TEST_CASE("rigid transform keeps invariants and is invertible") {
  SceneGenConfig cfg = small_config();
  Scenario s = generate_scenario(3, 0, cfg);
  Scenario t = s;
  apply_rigid_transform(t, 1.1, Vec2(12.0, -7.0));
  CHECK_NOTHROW(validate_scenario(t));

  // the position channels rotated with everything else
  const Index px = VoxelGrid::kSegDim + VoxelGrid::kNumClasses;
  const double c = std::cos(1.1), sn = std::sin(1.1);
  for (Index i = 0; i < s.voxels.features.cols(); i += 37) {
    const double x = s.voxels.features(px, i), y = s.voxels.features(px + 1, i);
    CHECK(t.voxels.features(px, i) == doctest::Approx(c * x - sn * y + 12.0).epsilon(1e-12));
    CHECK(t.voxels.features(px + 1, i) == doctest::Approx(sn * x + c * y - 7.0).epsilon(1e-12));
  }

  apply_rigid_transform(t, -1.1, Vec2::Zero());
  Vec2 back = Vec2(std::cos(-1.1) * 12.0 - std::sin(-1.1) * -7.0,
                   std::sin(-1.1) * 12.0 + std::cos(-1.1) * -7.0);
  apply_rigid_transform(t, 0.0, -back);
  for (std::size_t ai = 0; ai < s.agents.size(); ++ai) {
    for (std::size_t k = 0; k < s.agents[ai].states.size(); ++k) {
      CHECK(t.agents[ai].states[k].x ==
            doctest::Approx(s.agents[ai].states[k].x).epsilon(1e-9));
      CHECK(t.agents[ai].states[k].y ==
            doctest::Approx(s.agents[ai].states[k].y).epsilon(1e-9));
    }
  }
}

TEST_CASE("heading wrap convention") {
  CHECK(wrap_angle(kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(-kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(3 * kPi / 2) == doctest::Approx(-kPi / 2));
  CHECK(wrap_angle(0.25) == doctest::Approx(0.25));
}
