#include "trajkit/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "json.hpp"
#include "trajkit/error.hpp"

namespace trajkit {

namespace {

using json = nlohmann::ordered_json;

constexpr double kPi = std::numbers::pi;
constexpr double kFrameDt = 0.1;  // seconds between generated frames

double light_value(LightState state) {
  switch (state) {
    case LightState::red: return 1.0;
    case LightState::yellow: return 0.5;
    case LightState::green: return 0.25;
  }
  fail(ErrorKind::invalid, "unknown light state");
}

// Fills the oriented rectangle centered at (cx, cy) world meters into one
// raster channel.  A pixel is set when its center lies inside the rectangle.
void fill_rect(double* ch, const RasterConfig& cfg, const EgoPose& frame_ego,
               double cx, double cy, double yaw, double length, double width) {
  const std::int64_t size = cfg.size_px;
  const auto [pcx, pcy] = world_to_raster(cx, cy, frame_ego, cfg);
  const double rad = 0.5 * std::hypot(length, width) / cfg.resolution + 1.0;
  const std::int64_t x0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(pcx - rad)));
  const std::int64_t x1 = std::min<std::int64_t>(size - 1, static_cast<std::int64_t>(std::floor(pcx + rad)));
  const std::int64_t y0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(pcy - rad)));
  const std::int64_t y1 = std::min<std::int64_t>(size - 1, static_cast<std::int64_t>(std::floor(pcy + rad)));
  const double cos_e = std::cos(frame_ego.yaw);
  const double sin_e = std::sin(frame_ego.yaw);
  const double cos_a = std::cos(yaw);
  const double sin_a = std::sin(yaw);
  // Rect center relative to ego; translation of all world coordinates cancels
  // here, which keeps rasterization translation-equivariant.
  const double ox = cx - frame_ego.x;
  const double oy = cy - frame_ego.y;
  for (std::int64_t py = y0; py <= y1; ++py) {
    for (std::int64_t px = x0; px <= x1; ++px) {
      const double rx = (static_cast<double>(px) - cfg.ego_center_x * static_cast<double>(size)) * cfg.resolution;
      const double ry = (static_cast<double>(py) - cfg.ego_center_y * static_cast<double>(size)) * cfg.resolution;
      // Pixel center relative to ego in world axes.
      const double ex = cos_e * rx - sin_e * ry;
      const double ey = sin_e * rx + cos_e * ry;
      const double dx = ex - ox;
      const double dy = ey - oy;
      const double lx = cos_a * dx + sin_a * dy;
      const double ly = -sin_a * dx + cos_a * dy;
      if (std::abs(lx) <= 0.5 * length && std::abs(ly) <= 0.5 * width) {
        ch[py * size + px] = 1.0;
      }
    }
  }
}

std::string scene_id_for(std::int64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene-%04lld", static_cast<long long>(index));
  return buf;
}

json frame_to_json(const Frame& f) {
  json j;
  j["t"] = f.timestamp;
  j["ego"] = json::array({f.ego.x, f.ego.y, f.ego.yaw});
  json agents = json::array();
  for (const AgentState& a : f.agents) {
    json ja;
    ja["tid"] = a.track_id;
    ja["x"] = a.x;
    ja["y"] = a.y;
    ja["yaw"] = a.yaw;
    ja["l"] = a.length;
    ja["w"] = a.width;
    ja["label"] = to_string(a.label);
    agents.push_back(std::move(ja));
  }
  j["agents"] = std::move(agents);
  json lights = json::array();
  for (const TrafficLight& l : f.lights) {
    json jl;
    jl["x"] = l.x;
    jl["y"] = l.y;
    jl["state"] = to_string(l.state);
    lights.push_back(std::move(jl));
  }
  j["lights"] = std::move(lights);
  return j;
}

Frame frame_from_json(const json& j) {
  Frame f;
  f.timestamp = j.at("t").get<double>();
  const json& ego = j.at("ego");
  require(ego.is_array() && ego.size() == 3, ErrorKind::io,
          "ego must be [x, y, yaw]");
  f.ego = {ego[0].get<double>(), ego[1].get<double>(), ego[2].get<double>()};
  for (const json& ja : j.at("agents")) {
    AgentState a;
    a.track_id = ja.at("tid").get<std::string>();
    a.x = ja.at("x").get<double>();
    a.y = ja.at("y").get<double>();
    a.yaw = ja.at("yaw").get<double>();
    a.length = ja.at("l").get<double>();
    a.width = ja.at("w").get<double>();
    a.label = agent_label_from_string(ja.at("label").get<std::string>());
    f.agents.push_back(std::move(a));
  }
  for (const json& jl : j.at("lights")) {
    TrafficLight l;
    l.x = jl.at("x").get<double>();
    l.y = jl.at("y").get<double>();
    l.state = light_state_from_string(jl.at("state").get<std::string>());
    f.lights.push_back(l);
  }
  return f;
}

}  // namespace

void AgentsMask::set(const std::string& scene_id, const std::string& track_id,
                     bool usable) {
  entries_[{scene_id, track_id}] = usable;
}

bool AgentsMask::usable(const std::string& scene_id,
                        const std::string& track_id) const {
  const auto it = entries_.find({scene_id, track_id});
  return it == entries_.end() || it->second;
}

std::int64_t raster_channels(const RasterConfig& cfg) {
  return 2 * cfg.history_frames + 3;
}

void validate(const RasterConfig& cfg) {
  require(cfg.size_px > 0, ErrorKind::invalid, "raster size must be positive");
  require(cfg.resolution > 0.0, ErrorKind::invalid,
          "raster resolution must be positive");
  require(cfg.history_frames >= 0, ErrorKind::invalid,
          "history_frames must be non-negative");
  require(cfg.future_frames > 0, ErrorKind::invalid,
          "future_frames must be positive");
  require(cfg.ego_center_x >= 0.0 && cfg.ego_center_x <= 1.0 &&
              cfg.ego_center_y >= 0.0 && cfg.ego_center_y <= 1.0,
          ErrorKind::invalid, "ego_center fractions must lie in [0, 1]");
}

void validate(const Scene& scene) {
  for (std::size_t i = 1; i < scene.frames.size(); ++i) {
    require(scene.frames[i].timestamp > scene.frames[i - 1].timestamp,
            ErrorKind::invalid,
            "scene " + scene.id + ": timestamps not strictly increasing");
  }
  for (const Frame& f : scene.frames) {
    require(f.ego.yaw > -kPi && f.ego.yaw <= kPi, ErrorKind::invalid,
            "scene " + scene.id + ": ego yaw outside (-pi, pi]");
    std::set<std::string> ids;
    for (const AgentState& a : f.agents) {
      require(ids.insert(a.track_id).second, ErrorKind::invalid,
              "scene " + scene.id + ": duplicate track_id " + a.track_id);
      require(a.length > 0.0 && a.width > 0.0, ErrorKind::invalid,
              "scene " + scene.id + ": agent extent must be positive");
      require(std::isfinite(a.x) && std::isfinite(a.y), ErrorKind::invalid,
              "scene " + scene.id + ": agent centroid must be finite");
      require(a.yaw > -kPi && a.yaw <= kPi, ErrorKind::invalid,
              "scene " + scene.id + ": agent yaw outside (-pi, pi]");
    }
  }
}

double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a <= 0.0) {
    a += 2.0 * kPi;
  }
  return a - kPi;
}

std::pair<double, double> world_to_raster(double wx, double wy,
                                          const EgoPose& ego,
                                          const RasterConfig& cfg) {
  const double dx = wx - ego.x;
  const double dy = wy - ego.y;
  const double cos_e = std::cos(ego.yaw);
  const double sin_e = std::sin(ego.yaw);
  const double rx = cos_e * dx + sin_e * dy;
  const double ry = -sin_e * dx + cos_e * dy;
  const double size = static_cast<double>(cfg.size_px);
  return {rx / cfg.resolution + cfg.ego_center_x * size,
          ry / cfg.resolution + cfg.ego_center_y * size};
}

Sample rasterize(const Scene& scene, std::int64_t frame_index,
                 const RasterConfig& cfg, const AgentsMask& mask) {
  validate(cfg);
  const std::int64_t H = cfg.history_frames;
  const std::int64_t T = cfg.future_frames;
  const std::int64_t n = static_cast<std::int64_t>(scene.frames.size());
  require(frame_index >= H && frame_index + T < n, ErrorKind::invalid,
          "rasterize: frame " + std::to_string(frame_index) + " of scene " +
              scene.id + " needs " + std::to_string(H) + " history and " +
              std::to_string(T) + " future frames, scene has " +
              std::to_string(n));

  const Frame& now = scene.frames[static_cast<std::size_t>(frame_index)];
  const std::int64_t C = raster_channels(cfg);
  const std::int64_t S = cfg.size_px;
  std::vector<double> data(static_cast<std::size_t>(C * S * S), 0.0);
  auto channel = [&](std::int64_t c) { return data.data() + c * S * S; };

  for (std::int64_t h = 0; h <= H; ++h) {
    const Frame& past = scene.frames[static_cast<std::size_t>(frame_index - h)];
    fill_rect(channel(h), cfg, now.ego, past.ego.x, past.ego.y, past.ego.yaw,
              kEgoLength, kEgoWidth);
    double* agent_ch = channel(H + 1 + h);
    for (const AgentState& a : past.agents) {
      if (!mask.usable(scene.id, a.track_id)) {
        continue;
      }
      fill_rect(agent_ch, cfg, now.ego, a.x, a.y, a.yaw, a.length, a.width);
    }
  }

  double* light_ch = channel(2 * H + 2);
  for (const TrafficLight& l : now.lights) {
    const auto [px, py] = world_to_raster(l.x, l.y, now.ego, cfg);
    const std::int64_t ix = std::llround(px);
    const std::int64_t iy = std::llround(py);
    if (ix >= 0 && ix < S && iy >= 0 && iy < S) {
      double& cell = light_ch[iy * S + ix];
      cell = std::max(cell, light_value(l.state));
    }
  }

  Sample sample;
  sample.raster = Tensor::from_data({C, S, S}, std::move(data));
  sample.target.resize(static_cast<std::size_t>(T) * 2);
  sample.availability.assign(static_cast<std::size_t>(T), 1);
  const double cos_e = std::cos(now.ego.yaw);
  const double sin_e = std::sin(now.ego.yaw);
  for (std::int64_t t = 0; t < T; ++t) {
    const EgoPose& future =
        scene.frames[static_cast<std::size_t>(frame_index + 1 + t)].ego;
    const double dx = future.x - now.ego.x;
    const double dy = future.y - now.ego.y;
    sample.target[static_cast<std::size_t>(2 * t)] = cos_e * dx + sin_e * dy;
    sample.target[static_cast<std::size_t>(2 * t + 1)] = -sin_e * dx + cos_e * dy;
  }
  return sample;
}

std::vector<std::int64_t> sample_frames(const Scene& scene,
                                        const RasterConfig& cfg) {
  std::vector<std::int64_t> frames;
  const std::int64_t n = static_cast<std::int64_t>(scene.frames.size());
  for (std::int64_t i = cfg.history_frames; i + cfg.future_frames < n; ++i) {
    frames.push_back(i);
  }
  return frames;
}

std::vector<Scene> generate_synthetic(std::uint64_t seed,
                                      std::int64_t num_scenes,
                                      std::int64_t frames_per_scene,
                                      MotionProfile motion) {
  require(num_scenes >= 0, ErrorKind::invalid,
          "num_scenes must be non-negative");
  require(frames_per_scene >= 2, ErrorKind::invalid,
          "frames_per_scene must be at least 2");
  std::vector<Scene> scenes;
  scenes.reserve(static_cast<std::size_t>(num_scenes));
  for (std::int64_t s = 0; s < num_scenes; ++s) {
    // One generator per scene keeps scenes independent of corpus size.
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(s)));
    Scene scene;
    scene.id = scene_id_for(s);

    const double speed = rng.uniform(5.0, 12.0);
    const double heading = rng.uniform(-kPi, kPi);
    const double sx = rng.uniform(-100.0, 100.0);
    const double sy = rng.uniform(-100.0, 100.0);
    const double dir_x = std::cos(heading);
    const double dir_y = std::sin(heading);

    std::vector<EgoPose> ego_track(static_cast<std::size_t>(frames_per_scene));
    switch (motion) {
      case MotionProfile::constant_velocity: {
        for (std::int64_t k = 0; k < frames_per_scene; ++k) {
          const double along = speed * static_cast<double>(k) * kFrameDt;
          ego_track[static_cast<std::size_t>(k)] = {sx + along * dir_x,
                                                    sy + along * dir_y, heading};
        }
        break;
      }
      case MotionProfile::constant_turn: {
        const double magnitude = rng.uniform(0.05, 0.3);
        const double omega = rng.bernoulli(0.5) ? magnitude : -magnitude;
        double x = sx;
        double y = sy;
        for (std::int64_t k = 0; k < frames_per_scene; ++k) {
          const double yaw =
              wrap_angle(heading + omega * static_cast<double>(k) * kFrameDt);
          ego_track[static_cast<std::size_t>(k)] = {x, y, yaw};
          x += speed * kFrameDt * std::cos(yaw);
          y += speed * kFrameDt * std::sin(yaw);
        }
        break;
      }
      case MotionProfile::lane_change: {
        const double offset = (rng.bernoulli(0.5) ? 1.0 : -1.0) * 3.5;
        const double rate = 10.0 / static_cast<double>(frames_per_scene);
        const double mid = 0.5 * static_cast<double>(frames_per_scene);
        const double nx = -dir_y;  // unit normal to the lane direction
        const double ny = dir_x;
        for (std::int64_t k = 0; k < frames_per_scene; ++k) {
          const double along = speed * static_cast<double>(k) * kFrameDt;
          const double sig =
              1.0 / (1.0 + std::exp(-rate * (static_cast<double>(k) - mid)));
          const double lateral = offset * sig;
          // Velocity of the analytic path fixes the heading.
          const double dlat = offset * rate * sig * (1.0 - sig) / kFrameDt;
          const double vx = speed * dir_x + dlat * nx;
          const double vy = speed * dir_y + dlat * ny;
          ego_track[static_cast<std::size_t>(k)] = {
              sx + along * dir_x + lateral * nx, sy + along * dir_y + lateral * ny,
              wrap_angle(std::atan2(vy, vx))};
        }
        break;
      }
    }

    struct AgentTrack {
      AgentState base;
      double vx, vy;
    };
    std::vector<AgentTrack> agents;
    const std::int64_t num_agents = rng.uniform_int(0, 3);
    for (std::int64_t a = 0; a < num_agents; ++a) {
      AgentTrack track;
      track.base.track_id = "a" + std::to_string(a);
      const double roll = rng.uniform();
      double agent_speed;
      if (roll < 0.70) {
        track.base.label = AgentLabel::vehicle;
        track.base.length = rng.uniform(4.0, 5.5);
        track.base.width = rng.uniform(1.8, 2.2);
        agent_speed = rng.uniform(3.0, 10.0);
      } else if (roll < 0.85) {
        track.base.label = AgentLabel::pedestrian;
        track.base.length = rng.uniform(0.7, 0.9);
        track.base.width = rng.uniform(0.7, 0.9);
        agent_speed = rng.uniform(0.5, 2.0);
      } else if (roll < 0.95) {
        track.base.label = AgentLabel::cyclist;
        track.base.length = rng.uniform(1.6, 2.0);
        track.base.width = rng.uniform(0.5, 0.7);
        agent_speed = rng.uniform(2.0, 6.0);
      } else {
        track.base.label = AgentLabel::other;
        track.base.length = rng.uniform(1.0, 3.0);
        track.base.width = rng.uniform(1.0, 2.0);
        agent_speed = rng.uniform(0.0, 3.0);
      }
      const double agent_heading = rng.uniform(-kPi, kPi);
      track.base.yaw = agent_heading;
      track.vx = agent_speed * std::cos(agent_heading);
      track.vy = agent_speed * std::sin(agent_heading);

      // Keep every agent at least 5 m from the ego across the whole scene.
      bool placed = false;
      for (int attempt = 0; attempt < 20 && !placed; ++attempt) {
        const double ax = sx + rng.uniform(-40.0, 40.0);
        const double ay = sy + rng.uniform(-40.0, 40.0);
        double min_dist = 1e300;
        for (std::int64_t k = 0; k < frames_per_scene; ++k) {
          const double px = ax + track.vx * static_cast<double>(k) * kFrameDt;
          const double py = ay + track.vy * static_cast<double>(k) * kFrameDt;
          const EgoPose& e = ego_track[static_cast<std::size_t>(k)];
          min_dist = std::min(min_dist, std::hypot(px - e.x, py - e.y));
        }
        if (min_dist >= 5.0) {
          track.base.x = ax;
          track.base.y = ay;
          placed = true;
        }
      }
      if (placed) {
        agents.push_back(track);
      }
    }

    std::vector<TrafficLight> lights;
    const std::int64_t num_lights = rng.uniform_int(0, 2);
    const EgoPose& mid_pose =
        ego_track[static_cast<std::size_t>(frames_per_scene / 2)];
    for (std::int64_t l = 0; l < num_lights; ++l) {
      TrafficLight light;
      light.x = mid_pose.x + rng.uniform(-15.0, 15.0);
      light.y = mid_pose.y + rng.uniform(-15.0, 15.0);
      const std::int64_t state = rng.uniform_int(0, 2);
      light.state = state == 0   ? LightState::red
                    : state == 1 ? LightState::yellow
                                 : LightState::green;
      lights.push_back(light);
    }

    scene.frames.resize(static_cast<std::size_t>(frames_per_scene));
    for (std::int64_t k = 0; k < frames_per_scene; ++k) {
      Frame& frame = scene.frames[static_cast<std::size_t>(k)];
      frame.timestamp = static_cast<double>(k) * kFrameDt;
      frame.ego = ego_track[static_cast<std::size_t>(k)];
      for (const AgentTrack& track : agents) {
        AgentState state = track.base;
        state.x += track.vx * static_cast<double>(k) * kFrameDt;
        state.y += track.vy * static_cast<double>(k) * kFrameDt;
        frame.agents.push_back(std::move(state));
      }
      frame.lights = lights;
    }
    validate(scene);
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

AgentsMask generate_mask(const std::vector<Scene>& scenes, std::uint64_t seed,
                         double unusable_fraction) {
  require(unusable_fraction >= 0.0 && unusable_fraction < 1.0,
          ErrorKind::invalid, "unusable_fraction must lie in [0, 1)");
  AgentsMask mask;
  Rng rng(mix_seed(seed, 0x6d61736bULL));
  for (const Scene& scene : scenes) {
    std::set<std::string> tracks;
    for (const Frame& f : scene.frames) {
      for (const AgentState& a : f.agents) {
        tracks.insert(a.track_id);
      }
    }
    for (const std::string& track : tracks) {
      mask.set(scene.id, track, !rng.bernoulli(unusable_fraction));
    }
  }
  return mask;
}

std::vector<Scene> read_scenes(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::io, "cannot open " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::io,
          path + ": empty file, expected header");
  require(line == "trajkit-scenes v1", ErrorKind::io,
          path + ": bad header \"" + line + "\"");

  std::vector<Scene> scenes;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    Scene scene;
    try {
      const json j = json::parse(line);
      scene.id = j.at("id").get<std::string>();
      for (const json& jf : j.at("frames")) {
        scene.frames.push_back(frame_from_json(jf));
      }
    } catch (const json::exception& e) {
      fail(ErrorKind::io,
           path + ":" + std::to_string(line_no) + ": malformed scene: " + e.what());
    }
    validate(scene);
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

void write_scenes(const std::vector<Scene>& scenes, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::io, "cannot write " + path);
  out << "trajkit-scenes v1\n";
  for (const Scene& scene : scenes) {
    json j;
    j["id"] = scene.id;
    json frames = json::array();
    for (const Frame& f : scene.frames) {
      frames.push_back(frame_to_json(f));
    }
    j["frames"] = std::move(frames);
    out << j.dump() << "\n";
  }
  require(out.good(), ErrorKind::io, "write failed for " + path);
}

AgentsMask read_mask(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::io, "cannot open " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::io,
          path + ": empty file, expected header");
  require(line == "trajkit-mask v1", ErrorKind::io,
          path + ": bad header \"" + line + "\"");

  AgentsMask mask;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    const auto first = line.find(',');
    const auto last = line.rfind(',');
    require(first != std::string::npos && last != first, ErrorKind::io,
            path + ":" + std::to_string(line_no) +
                ": expected scene_id,track_id,0|1");
    const std::string flag = line.substr(last + 1);
    require(flag == "0" || flag == "1", ErrorKind::io,
            path + ":" + std::to_string(line_no) + ": flag must be 0 or 1");
    mask.set(line.substr(0, first), line.substr(first + 1, last - first - 1),
             flag == "1");
  }
  return mask;
}

void write_mask(const AgentsMask& mask, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::io, "cannot write " + path);
  out << "trajkit-mask v1\n";
  for (const auto& [key, usable] : mask.entries()) {
    require(key.first.find(',') == std::string::npos &&
                key.second.find(',') == std::string::npos,
            ErrorKind::invalid, "mask ids must not contain commas");
    out << key.first << "," << key.second << "," << (usable ? 1 : 0) << "\n";
  }
  require(out.good(), ErrorKind::io, "write failed for " + path);
}

std::string to_string(LightState state) {
  switch (state) {
    case LightState::red: return "red";
    case LightState::yellow: return "yellow";
    case LightState::green: return "green";
  }
  fail(ErrorKind::invalid, "unknown light state");
}

std::string to_string(AgentLabel label) {
  switch (label) {
    case AgentLabel::vehicle: return "vehicle";
    case AgentLabel::pedestrian: return "pedestrian";
    case AgentLabel::cyclist: return "cyclist";
    case AgentLabel::other: return "other";
  }
  fail(ErrorKind::invalid, "unknown agent label");
}

std::string to_string(MotionProfile motion) {
  switch (motion) {
    case MotionProfile::constant_velocity: return "constant_velocity";
    case MotionProfile::constant_turn: return "constant_turn";
    case MotionProfile::lane_change: return "lane_change";
  }
  fail(ErrorKind::invalid, "unknown motion profile");
}

LightState light_state_from_string(const std::string& s) {
  if (s == "red") return LightState::red;
  if (s == "yellow") return LightState::yellow;
  if (s == "green") return LightState::green;
  fail(ErrorKind::io, "unknown light state \"" + s + "\"");
}

AgentLabel agent_label_from_string(const std::string& s) {
  if (s == "vehicle") return AgentLabel::vehicle;
  if (s == "pedestrian") return AgentLabel::pedestrian;
  if (s == "cyclist") return AgentLabel::cyclist;
  if (s == "other") return AgentLabel::other;
  fail(ErrorKind::io, "unknown agent label \"" + s + "\"");
}

MotionProfile motion_from_string(const std::string& s) {
  if (s == "constant_velocity") return MotionProfile::constant_velocity;
  if (s == "constant_turn") return MotionProfile::constant_turn;
  if (s == "lane_change") return MotionProfile::lane_change;
  fail(ErrorKind::invalid, "unknown motion profile \"" + s + "\"");
}

}  // namespace trajkit
