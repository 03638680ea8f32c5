#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "doctest.h"
#include "trajkit/error.hpp"
#include "trajkit/scene.hpp"

using trajkit::AgentsMask;
using trajkit::AgentState;
using trajkit::EgoPose;
using trajkit::Error;
using trajkit::Frame;
using trajkit::MotionProfile;
using trajkit::RasterConfig;
using trajkit::Sample;
using trajkit::Scene;

namespace {

constexpr double kPi = std::numbers::pi;

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("trajkit-test-" + name))
      .string();
}

Scene stationary_scene(std::int64_t frames, EgoPose pose,
                       std::vector<AgentState> agents = {}) {
  Scene scene;
  scene.id = "stationary";
  for (std::int64_t k = 0; k < frames; ++k) {
    Frame f;
    f.timestamp = 0.1 * static_cast<double>(k);
    f.ego = pose;
    f.agents = agents;
    scene.frames.push_back(std::move(f));
  }
  return scene;
}

Scene translated(const Scene& scene, double tx, double ty) {
  Scene out = scene;
  for (Frame& f : out.frames) {
    f.ego.x += tx;
    f.ego.y += ty;
    for (AgentState& a : f.agents) {
      a.x += tx;
      a.y += ty;
    }
    for (trajkit::TrafficLight& l : f.lights) {
      l.x += tx;
      l.y += ty;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("world_to_raster fixed point and hand example") {
  RasterConfig cfg;
  EgoPose ego{12.5, -3.25, 0.7};
  auto [px, py] = trajkit::world_to_raster(ego.x, ego.y, ego, cfg);
  CHECK(px == 0.25 * 64);
  CHECK(py == 0.5 * 64);

  RasterConfig big;
  big.size_px = 224;
  EgoPose straight{0.0, 0.0, 0.0};
  auto [hx, hy] = trajkit::world_to_raster(10.0, 0.0, straight, big);
  CHECK(hx == doctest::Approx(76.0).epsilon(1e-12));
  CHECK(hy == doctest::Approx(112.0).epsilon(1e-12));
}

TEST_CASE("world_to_raster mirrors a point ahead when yaw flips by pi") {
  RasterConfig cfg;
  EgoPose fwd{5.0, 7.0, 0.4};
  EgoPose rev{5.0, 7.0, trajkit::wrap_angle(0.4 + kPi)};
  const double wx = 5.0 + 8.0 * std::cos(0.4);
  const double wy = 7.0 + 8.0 * std::sin(0.4);
  auto [fx, fy] = trajkit::world_to_raster(wx, wy, fwd, cfg);
  auto [rx, ry] = trajkit::world_to_raster(wx, wy, rev, cfg);
  const double cx = 0.25 * 64;
  const double cy = 0.5 * 64;
  CHECK(rx - cx == doctest::Approx(-(fx - cx)).epsilon(1e-9));
  CHECK(ry - cy == doctest::Approx(-(fy - cy)).epsilon(1e-9));
}

TEST_CASE("stationary ego rasterizes to identical history and zero targets") {
  RasterConfig cfg;
  Scene scene = stationary_scene(21, {3.7, -2.1, 0.3});
  Sample sample = trajkit::rasterize(scene, 4, cfg, AgentsMask{});

  const std::int64_t S = cfg.size_px;
  REQUIRE(sample.raster.shape() ==
          trajkit::Shape{trajkit::raster_channels(cfg), S, S});
  const auto data = sample.raster.data();
  double filled = 0.0;
  for (std::int64_t c = 1; c <= cfg.history_frames; ++c) {
    for (std::int64_t i = 0; i < S * S; ++i) {
      CHECK(data[static_cast<std::size_t>(c * S * S + i)] ==
            data[static_cast<std::size_t>(i)]);
    }
  }
  for (std::int64_t i = 0; i < S * S; ++i) {
    filled += data[static_cast<std::size_t>(i)];
  }
  CHECK(filled > 0.0);  // the ego footprint itself

  for (double t : sample.target) {
    CHECK(t == 0.0);
  }
  for (auto avail : sample.availability) {
    CHECK(avail == 1);
  }
}

TEST_CASE("agent at the ego position marks the ego-center pixel") {
  RasterConfig cfg;
  AgentState rider;
  rider.track_id = "a0";
  rider.x = 3.7;
  rider.y = -2.1;
  rider.yaw = 0.3;
  rider.length = 1.8;
  rider.width = 0.6;
  rider.label = trajkit::AgentLabel::cyclist;
  Scene scene = stationary_scene(21, {3.7, -2.1, 0.3}, {rider});
  Sample sample = trajkit::rasterize(scene, 4, cfg, AgentsMask{});

  const std::int64_t S = cfg.size_px;
  const std::int64_t agent_ch = cfg.history_frames + 1;
  const std::int64_t cx = std::llround(0.25 * static_cast<double>(S));
  const std::int64_t cy = std::llround(0.5 * static_cast<double>(S));
  CHECK(sample.raster.data()[static_cast<std::size_t>(
            agent_ch * S * S + cy * S + cx)] == 1.0);
}

TEST_CASE("constant-velocity ego yields linear targets") {
  RasterConfig cfg;
  Scene scene;
  scene.id = "cv";
  for (std::int64_t k = 0; k < 21; ++k) {
    Frame f;
    f.timestamp = 0.1 * static_cast<double>(k);
    f.ego = {static_cast<double>(k) * 1.0, 0.0, 0.0};  // 10 m/s, 0.1 s frames
    scene.frames.push_back(std::move(f));
  }
  Sample sample = trajkit::rasterize(scene, 4, cfg, AgentsMask{});
  for (std::int64_t t = 0; t < cfg.future_frames; ++t) {
    CHECK(sample.target[static_cast<std::size_t>(2 * t)] ==
          static_cast<double>(t + 1));
    CHECK(sample.target[static_cast<std::size_t>(2 * t + 1)] == 0.0);
  }
}

TEST_CASE("rasterize rejects frames without enough history or future") {
  RasterConfig cfg;
  Scene scene = stationary_scene(21, {0, 0, 0});
  CHECK_THROWS_AS(trajkit::rasterize(scene, 3, cfg, AgentsMask{}), Error);
  CHECK_THROWS_AS(trajkit::rasterize(scene, 5, cfg, AgentsMask{}), Error);
  CHECK_NOTHROW(trajkit::rasterize(scene, 4, cfg, AgentsMask{}));

  CHECK(trajkit::sample_frames(scene, cfg) == std::vector<std::int64_t>{4});
  Scene longer = stationary_scene(23, {0, 0, 0});
  CHECK(trajkit::sample_frames(longer, cfg) ==
        std::vector<std::int64_t>{4, 5, 6});
}

TEST_CASE("rasterization is deterministic and keeps pixels in [0,1]") {
  auto scenes = trajkit::generate_synthetic(99, 6, 21, MotionProfile::lane_change);
  AgentsMask mask = trajkit::generate_mask(scenes, 99);
  RasterConfig cfg;
  for (const Scene& scene : scenes) {
    Sample a = trajkit::rasterize(scene, 4, cfg, mask);
    Sample b = trajkit::rasterize(scene, 4, cfg, mask);
    REQUIRE(a.raster.numel() == b.raster.numel());
    for (std::size_t i = 0; i < a.raster.data().size(); ++i) {
      CHECK(a.raster.data()[i] == b.raster.data()[i]);
      CHECK(a.raster.data()[i] >= 0.0);
      CHECK(a.raster.data()[i] <= 1.0);
    }
    for (std::size_t i = 0; i < a.target.size(); ++i) {
      CHECK(a.target[i] == b.target[i]);
    }
  }
}

TEST_CASE("masked-out agents contribute no pixels") {
  AgentState truck;
  truck.track_id = "a0";
  truck.x = 10.0;
  truck.y = 1.0;
  truck.yaw = 0.0;
  truck.length = 5.0;
  truck.width = 2.0;
  Scene scene = stationary_scene(21, {0, 0, 0}, {truck});

  RasterConfig cfg;
  Sample with = trajkit::rasterize(scene, 4, cfg, AgentsMask{});
  AgentsMask mask;
  mask.set("stationary", "a0", false);
  Sample without = trajkit::rasterize(scene, 4, cfg, mask);

  const std::int64_t S = cfg.size_px;
  const std::int64_t H = cfg.history_frames;
  double with_sum = 0.0;
  double without_sum = 0.0;
  for (std::int64_t c = H + 1; c <= 2 * H + 1; ++c) {
    for (std::int64_t i = 0; i < S * S; ++i) {
      with_sum += with.raster.data()[static_cast<std::size_t>(c * S * S + i)];
      without_sum +=
          without.raster.data()[static_cast<std::size_t>(c * S * S + i)];
    }
  }
  CHECK(with_sum > 0.0);
  CHECK(without_sum == 0.0);
}

TEST_CASE("rasterization is translation equivariant") {
  auto scenes = trajkit::generate_synthetic(7, 4, 21, MotionProfile::constant_turn);
  AgentsMask mask = trajkit::generate_mask(scenes, 7);
  RasterConfig cfg;
  for (const Scene& scene : scenes) {
    Scene moved = translated(scene, 37.25, -110.5);
    Sample a = trajkit::rasterize(scene, 4, cfg, mask);
    AgentsMask moved_mask;
    for (const auto& [key, usable] : mask.entries()) {
      moved_mask.set(key.first, key.second, usable);
    }
    Sample b = trajkit::rasterize(moved, 4, cfg, moved_mask);
    // Footprint membership is binary; a pixel would have to sit within
    // ~1e-13 m of a rectangle edge for translation noise to flip it.
    for (std::size_t i = 0; i < a.raster.data().size(); ++i) {
      CHECK(a.raster.data()[i] == b.raster.data()[i]);
    }
    for (std::size_t i = 0; i < a.target.size(); ++i) {
      CHECK(a.target[i] == doctest::Approx(b.target[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("scene files round-trip") {
  const std::string path = temp_path("scenes-roundtrip.txt");

  SUBCASE("empty corpus") {
    trajkit::write_scenes({}, path);
    CHECK(trajkit::read_scenes(path).empty());
  }

  SUBCASE("minimal scene") {
    Scene scene;
    scene.id = "m";
    Frame f;
    f.timestamp = 0.25;
    f.ego = {1.5, -2.5, 0.125};
    scene.frames.push_back(f);
    trajkit::write_scenes({scene}, path);
    auto back = trajkit::read_scenes(path);
    REQUIRE(back.size() == 1);
    CHECK(back[0].id == "m");
    REQUIRE(back[0].frames.size() == 1);
    CHECK(back[0].frames[0].timestamp == 0.25);
    CHECK(back[0].frames[0].ego.x == 1.5);
    CHECK(back[0].frames[0].ego.yaw == 0.125);
  }

  SUBCASE("generated corpus round-trips bit-identically") {
    auto scenes = trajkit::generate_synthetic(123, 100, 21,
                                              MotionProfile::constant_velocity);
    trajkit::write_scenes(scenes, path);
    auto back = trajkit::read_scenes(path);
    const std::string second = temp_path("scenes-roundtrip2.txt");
    trajkit::write_scenes(back, second);

    std::ifstream f1(path), f2(second);
    std::string s1((std::istreambuf_iterator<char>(f1)),
                   std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)),
                   std::istreambuf_iterator<char>());
    CHECK(s1 == s2);

    REQUIRE(back.size() == scenes.size());
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      REQUIRE(back[i].frames.size() == scenes[i].frames.size());
      for (std::size_t k = 0; k < scenes[i].frames.size(); ++k) {
        CHECK(back[i].frames[k].ego.x == scenes[i].frames[k].ego.x);
        CHECK(back[i].frames[k].ego.yaw == scenes[i].frames[k].ego.yaw);
      }
    }
  }
}

TEST_CASE("scene file errors carry location or scene names") {
  const std::string path = temp_path("scenes-bad.txt");

  SUBCASE("missing file") {
    CHECK_THROWS_AS(trajkit::read_scenes(temp_path("does-not-exist.txt")), Error);
  }

  SUBCASE("bad header") {
    std::ofstream(path) << "something else\n";
    CHECK_THROWS_AS(trajkit::read_scenes(path), Error);
  }

  SUBCASE("malformed record names the line") {
    std::ofstream(path) << "trajkit-scenes v1\nnot json\n";
    try {
      trajkit::read_scenes(path);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == trajkit::ErrorKind::io);
      CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
  }

  SUBCASE("non-increasing timestamps name the scene") {
    std::ofstream(path)
        << "trajkit-scenes v1\n"
        << R"({"id":"bad-scene","frames":[)"
        << R"({"t":1.0,"ego":[0,0,0],"agents":[],"lights":[]},)"
        << R"({"t":0.5,"ego":[0,0,0],"agents":[],"lights":[]}]})" << "\n";
    try {
      trajkit::read_scenes(path);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("bad-scene") != std::string::npos);
    }
  }
}

TEST_CASE("mask files round-trip and default to usable") {
  AgentsMask mask;
  mask.set("scene-0001", "a0", false);
  mask.set("scene-0001", "a1", true);
  mask.set("scene-0002", "a0", true);
  const std::string path = temp_path("mask.txt");
  trajkit::write_mask(mask, path);
  AgentsMask back = trajkit::read_mask(path);
  CHECK_FALSE(back.usable("scene-0001", "a0"));
  CHECK(back.usable("scene-0001", "a1"));
  CHECK(back.usable("scene-0002", "a0"));
  CHECK(back.usable("never-mentioned", "a9"));

  std::ofstream(path) << "trajkit-mask v1\nscene,track,2\n";
  CHECK_THROWS_AS(trajkit::read_mask(path), Error);
}

TEST_CASE("generator is deterministic") {
  auto a = trajkit::generate_synthetic(42, 5, 21, MotionProfile::lane_change);
  auto b = trajkit::generate_synthetic(42, 5, 21, MotionProfile::lane_change);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id == b[i].id);
    REQUIRE(a[i].frames.size() == b[i].frames.size());
    for (std::size_t k = 0; k < a[i].frames.size(); ++k) {
      CHECK(a[i].frames[k].ego.x == b[i].frames[k].ego.x);
      CHECK(a[i].frames[k].ego.y == b[i].frames[k].ego.y);
      CHECK(a[i].frames[k].ego.yaw == b[i].frames[k].ego.yaw);
      REQUIRE(a[i].frames[k].agents.size() == b[i].frames[k].agents.size());
      for (std::size_t j = 0; j < a[i].frames[k].agents.size(); ++j) {
        CHECK(a[i].frames[k].agents[j].x == b[i].frames[k].agents[j].x);
      }
    }
  }
}

TEST_CASE("constant velocity scenes move uniformly") {
  auto scenes =
      trajkit::generate_synthetic(7, 5, 21, MotionProfile::constant_velocity);
  for (const Scene& scene : scenes) {
    const double dx0 = scene.frames[1].ego.x - scene.frames[0].ego.x;
    const double dy0 = scene.frames[1].ego.y - scene.frames[0].ego.y;
    for (std::size_t k = 1; k + 1 < scene.frames.size(); ++k) {
      const double dx = scene.frames[k + 1].ego.x - scene.frames[k].ego.x;
      const double dy = scene.frames[k + 1].ego.y - scene.frames[k].ego.y;
      CHECK(dx == doctest::Approx(dx0).epsilon(1e-9));
      CHECK(dy == doctest::Approx(dy0).epsilon(1e-9));
      CHECK(scene.frames[k].ego.yaw == scene.frames[0].ego.yaw);
    }
  }
}

TEST_CASE("constant turn scenes change heading at a fixed rate") {
  auto scenes =
      trajkit::generate_synthetic(11, 5, 21, MotionProfile::constant_turn);
  for (const Scene& scene : scenes) {
    const double d0 = trajkit::wrap_angle(scene.frames[1].ego.yaw -
                                          scene.frames[0].ego.yaw);
    CHECK(std::abs(d0) > 1e-6);
    for (std::size_t k = 1; k + 1 < scene.frames.size(); ++k) {
      const double d = trajkit::wrap_angle(scene.frames[k + 1].ego.yaw -
                                           scene.frames[k].ego.yaw);
      CHECK(std::abs(d - d0) <= 1e-9);
    }
  }
}

TEST_CASE("lane change scenes drift laterally by the lane offset") {
  auto scenes =
      trajkit::generate_synthetic(13, 6, 31, MotionProfile::lane_change);
  for (const Scene& scene : scenes) {
    const auto& first = scene.frames.front().ego;
    const auto& last = scene.frames.back().ego;
    const double hx = std::cos(first.yaw);
    const double hy = std::sin(first.yaw);
    const double dx = last.x - first.x;
    const double dy = last.y - first.y;
    const double lateral = -hy * dx + hx * dy;
    CHECK(std::abs(lateral) >= 2.5);
    CHECK(std::abs(lateral) <= 4.5);
  }
}

TEST_CASE("generated mask marks a plausible fraction unusable") {
  auto scenes =
      trajkit::generate_synthetic(3, 40, 21, MotionProfile::constant_velocity);
  AgentsMask mask = trajkit::generate_mask(scenes, 3, 0.5);
  std::size_t total = 0;
  std::size_t unusable = 0;
  for (const auto& [key, usable] : mask.entries()) {
    ++total;
    if (!usable) {
      ++unusable;
    }
  }
  if (total >= 20) {
    CHECK(unusable > 0);
    CHECK(unusable < total);
  }
  AgentsMask again = trajkit::generate_mask(scenes, 3, 0.5);
  CHECK(again.entries() == mask.entries());
}
