#pragma once

#include <cstddef>
#include <vector>

namespace adaptraj {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Point2&) const = default;
};

/// Scene-level map descriptor at one timestep.
struct MapContext {
  double sin_heading = 0.0;  // local reference-path heading
  double cos_heading = 1.0;
  double curvature = 0.0;     // 1/m
  double arc_position = 0.0;  // normalized [0, 1]
};

/// What the predictor sees at timestep t: each agent's last t_h positions
/// (timesteps t - t_h .. t - 1, oldest first) plus the map context.
struct Observation {
  int t = 0;
  std::vector<int> actor_ids;
  std::vector<std::vector<Point2>> past;
  MapContext map;

  std::size_t agent_count() const { return past.size(); }
};

/// Ground-truth futures, [agent][step] over timesteps t .. t + t_f - 1.
using Futures = std::vector<std::vector<Point2>>;

}  // namespace adaptraj
