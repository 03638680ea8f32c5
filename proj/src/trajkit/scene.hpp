#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "trajkit/rng.hpp"
#include "trajkit/tensor.hpp"

namespace trajkit {

enum class LightState { red, yellow, green };
enum class AgentLabel { vehicle, pedestrian, cyclist, other };
enum class MotionProfile { constant_velocity, constant_turn, lane_change };

struct EgoPose {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
};

struct AgentState {
  std::string track_id;
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
  double length = 0.0;
  double width = 0.0;
  AgentLabel label = AgentLabel::vehicle;
};

struct TrafficLight {
  double x = 0.0;
  double y = 0.0;
  LightState state = LightState::red;
};

struct Frame {
  double timestamp = 0.0;
  EgoPose ego;
  std::vector<AgentState> agents;
  std::vector<TrafficLight> lights;
};

struct Scene {
  std::string id;
  std::vector<Frame> frames;
};

// Usability flags keyed by (scene_id, track_id).  Absent entries default to
// usable, so an empty mask is a no-op.
class AgentsMask {
 public:
  void set(const std::string& scene_id, const std::string& track_id, bool usable);
  bool usable(const std::string& scene_id, const std::string& track_id) const;
  const std::map<std::pair<std::string, std::string>, bool>& entries() const {
    return entries_;
  }

 private:
  std::map<std::pair<std::string, std::string>, bool> entries_;
};

struct RasterConfig {
  std::int64_t size_px = 64;
  double resolution = 0.5;  // meters per pixel
  std::int64_t history_frames = 4;
  std::int64_t future_frames = 16;
  double ego_center_x = 0.25;
  double ego_center_y = 0.5;
};

// Raster channel layout: history_frames+1 ego footprints (most recent first),
// history_frames+1 agent footprints, one traffic-light channel.
std::int64_t raster_channels(const RasterConfig& cfg);

struct Sample {
  Tensor raster;                         // [2H+3, size, size]
  std::vector<double> target;            // future_frames x 2, raster-frame meters
  std::vector<std::uint8_t> availability;  // one flag per future step
};

// Ego footprint extent used for rasterization; scenes carry no ego size.
inline constexpr double kEgoLength = 4.5;
inline constexpr double kEgoWidth = 2.0;

void validate(const RasterConfig& cfg);
void validate(const Scene& scene);

double wrap_angle(double a);

// Translate by -ego, rotate by -yaw (ego heading points toward +x of the
// raster), scale by 1/resolution, offset so ego sits at ego_center * size_px.
// Returns continuous pixel coordinates; callers round or clip.
std::pair<double, double> world_to_raster(double wx, double wy,
                                          const EgoPose& ego,
                                          const RasterConfig& cfg);

Sample rasterize(const Scene& scene, std::int64_t frame_index,
                 const RasterConfig& cfg, const AgentsMask& mask);

// Frame indices of scene that admit a full history and future window.
std::vector<std::int64_t> sample_frames(const Scene& scene,
                                        const RasterConfig& cfg);

std::vector<Scene> generate_synthetic(std::uint64_t seed,
                                      std::int64_t num_scenes,
                                      std::int64_t frames_per_scene,
                                      MotionProfile motion);

// Marks roughly unusable_fraction of all agent tracks unusable.
AgentsMask generate_mask(const std::vector<Scene>& scenes, std::uint64_t seed,
                         double unusable_fraction = 0.12);

std::vector<Scene> read_scenes(const std::string& path);
void write_scenes(const std::vector<Scene>& scenes, const std::string& path);
AgentsMask read_mask(const std::string& path);
void write_mask(const AgentsMask& mask, const std::string& path);

std::string to_string(LightState state);
std::string to_string(AgentLabel label);
std::string to_string(MotionProfile motion);
LightState light_state_from_string(const std::string& s);
AgentLabel agent_label_from_string(const std::string& s);
MotionProfile motion_from_string(const std::string& s);

}  // namespace trajkit
