#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "adaptraj/numcore/rng.hpp"
#include "adaptraj/predictor/sample.hpp"

namespace adaptraj::scenegen {

/// Dynamics of one scene (sub-domain).
struct DomainParams {
  double speed_mean = 8.0;         // m/s
  double speed_std = 1.0;          // m/s, spread of desired speeds across agents
  double yaw_rate_scale = 0.0;     // rad/s, spread of per-agent yaw bias
  double process_noise_std = 0.0;  // m, per-step position noise
  double interaction_gain = 0.0;   // 1/s, lead-following gain
  double curvature_min = 0.0;      // 1/m
  double curvature_max = 0.0;

  void validate() const;
};

struct NormalDraw {
  double mean = 0.0;
  double stddev = 0.0;
};

/// Distribution over DomainParams; one draw per scene. Draws are clamped
/// (speed_mean at `speed_floor`, the rest at 0).
struct DomainFamily {
  NormalDraw speed_mean{8.0, 1.0};
  NormalDraw speed_std{1.0, 0.0};
  NormalDraw yaw_rate_scale{0.0, 0.0};
  NormalDraw process_noise_std{0.0, 0.0};
  NormalDraw interaction_gain{0.0, 0.0};
  double curvature_min = 0.0;
  double curvature_max = 0.0;
  double speed_floor = 0.5;

  void validate() const;
};

DomainParams sample_domain_params(const DomainFamily& family, numcore::RngStream& rng);

/// Horizon settings shared by generation, sequencing and task building.
struct SceneLayout {
  std::size_t past_steps = 4;     // t_h
  std::size_t future_steps = 12;  // t_f
  double dt = 0.5;                // s
  std::size_t inner_steps = 4;    // K_inner
  std::size_t interval = 12;      // tau

  /// Smallest t_s supporting K_inner updates plus an evaluation.
  std::size_t min_scene_length() const;
  void validate() const;
};

struct Scene {
  int scene_id = 0;
  DomainParams domain;
  std::size_t length = 0;  // t_s
  double dt = 0.5;
  double curvature = 0.0;
  std::vector<int> actor_ids;
  std::vector<std::vector<Point2>> tracks;  // [agent][t_s + t_f]
  std::vector<MapContext> map;              // [t_s + t_f]

  std::size_t agent_count() const { return tracks.size(); }
  std::size_t steps() const { return map.size(); }

  bool operator==(const Scene&) const;
};

/// Convoy of unicycle agents along a constant-curvature reference path.
/// Each agent turns at curvature * v plus a per-agent yaw bias, modulates
/// its speed by `interaction_gain` times the gap error to the nearest agent
/// ahead, and accumulates Gaussian position noise.
Scene generate_scene(const DomainParams& domain, std::size_t agents, std::size_t length,
                     const SceneLayout& layout, numcore::RngStream& rng, int scene_id = 0);

struct CorpusSpec {
  std::size_t scenes = 16;
  std::size_t min_agents = 3;
  std::size_t max_agents = 5;
  std::size_t length = 96;
};

/// Scene i is generated from rng.child(i), so corpora are reproducible and
/// can be built in any order.
std::vector<Scene> generate_corpus(const DomainFamily& family, const CorpusSpec& spec,
                                   const SceneLayout& layout, const numcore::RngStream& rng);

/// Past window [t - t_h, t) as seen at timestep t. No causality checks:
/// for offline (source) training only.
Observation observation_at(const Scene& scene, std::size_t t, std::size_t past_steps);
/// Positions [t, t + t_f).
Futures future_at(const Scene& scene, std::size_t t, std::size_t future_steps);

// Line-delimited dump: one JSON object per scene. Field order documented in
// docs/formats.md.
std::string scene_to_line(const Scene& scene);
Scene scene_from_line(const std::string& line);
void save_scenes(const std::filesystem::path& path, const std::vector<Scene>& scenes);
std::vector<Scene> load_scenes(const std::filesystem::path& path);

}  // namespace adaptraj::scenegen
