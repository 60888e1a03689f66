#include "adaptraj/scenegen/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <sstream>

#include "adaptraj/numcore/errors.hpp"

namespace adaptraj::scenegen {

namespace {

using Json = nlohmann::ordered_json;

void require_nonneg(double v, const char* what) {
  if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string(what) + " must be finite and >= 0");
}

// lead-following constants
constexpr double kLaneWidth = 3.5;
constexpr double kLeaderLateral = 2.0;  // m, max lateral offset to count as leader
constexpr double kGapStandstill = 5.0;  // m
constexpr double kGapHeadway = 1.5;     // s
constexpr double kSpeedLag = 1.0;       // s

double clamp_draw(const NormalDraw& d, double floor, numcore::RngStream& rng) {
  const double v = d.stddev > 0.0 ? rng.normal(d.mean, d.stddev) : d.mean;
  return std::max(v, floor);
}

}  // namespace

void DomainParams::validate() const {
  if (!(speed_mean > 0.0) || !std::isfinite(speed_mean)) throw ConfigError("speed_mean must be > 0");
  require_nonneg(speed_std, "speed_std");
  require_nonneg(yaw_rate_scale, "yaw_rate_scale");
  require_nonneg(process_noise_std, "process_noise_std");
  require_nonneg(interaction_gain, "interaction_gain");
  if (!std::isfinite(curvature_min) || !std::isfinite(curvature_max) || curvature_min > curvature_max)
    throw ConfigError("curvature range must satisfy min <= max");
}

void DomainFamily::validate() const {
  const NormalDraw* draws[] = {&speed_mean, &speed_std, &yaw_rate_scale, &process_noise_std, &interaction_gain};
  for (const auto* d : draws)
    if (!(d->stddev >= 0.0) || !std::isfinite(d->mean)) throw ConfigError("domain family: negative or non-finite std");
  if (!(speed_floor > 0.0)) throw ConfigError("domain family: speed_floor must be > 0");
  if (!std::isfinite(curvature_min) || !std::isfinite(curvature_max) || curvature_min > curvature_max)
    throw ConfigError("domain family: curvature range must satisfy min <= max");
}

DomainParams sample_domain_params(const DomainFamily& family, numcore::RngStream& rng) {
  family.validate();
  DomainParams p;
  p.speed_mean = clamp_draw(family.speed_mean, family.speed_floor, rng);
  p.speed_std = clamp_draw(family.speed_std, 0.0, rng);
  p.yaw_rate_scale = clamp_draw(family.yaw_rate_scale, 0.0, rng);
  p.process_noise_std = clamp_draw(family.process_noise_std, 0.0, rng);
  p.interaction_gain = clamp_draw(family.interaction_gain, 0.0, rng);
  p.curvature_min = family.curvature_min;
  p.curvature_max = family.curvature_max;
  return p;
}

std::size_t SceneLayout::min_scene_length() const {
  return past_steps + (inner_steps + 1) * interval + future_steps;
}

void SceneLayout::validate() const {
  if (past_steps < 2) throw ConfigError("past_steps must be >= 2");
  if (future_steps < 1) throw ConfigError("future_steps must be >= 1");
  if (!(dt > 0.0)) throw ConfigError("dt must be > 0");
  if (inner_steps < 1) throw ConfigError("inner_steps must be >= 1");
  if (interval < 1) throw ConfigError("interval must be >= 1");
}

bool Scene::operator==(const Scene& o) const {
  auto map_eq = [](const MapContext& a, const MapContext& b) {
    return a.sin_heading == b.sin_heading && a.cos_heading == b.cos_heading && a.curvature == b.curvature &&
           a.arc_position == b.arc_position;
  };
  auto dom_eq = [](const DomainParams& a, const DomainParams& b) {
    return a.speed_mean == b.speed_mean && a.speed_std == b.speed_std && a.yaw_rate_scale == b.yaw_rate_scale &&
           a.process_noise_std == b.process_noise_std && a.interaction_gain == b.interaction_gain &&
           a.curvature_min == b.curvature_min && a.curvature_max == b.curvature_max;
  };
  if (scene_id != o.scene_id || length != o.length || dt != o.dt || curvature != o.curvature ||
      actor_ids != o.actor_ids || tracks != o.tracks || map.size() != o.map.size() || !dom_eq(domain, o.domain))
    return false;
  for (std::size_t i = 0; i < map.size(); ++i)
    if (!map_eq(map[i], o.map[i])) return false;
  return true;
}

Scene generate_scene(const DomainParams& domain, std::size_t agents, std::size_t length, const SceneLayout& layout,
                     numcore::RngStream& rng, int scene_id) {
  domain.validate();
  layout.validate();
  if (agents < 1) throw ConfigError("scene needs at least one agent");
  if (length < layout.min_scene_length())
    throw ConfigError("scene length " + std::to_string(length) + " below minimum " +
                      std::to_string(layout.min_scene_length()));

  const std::size_t steps = length + layout.future_steps;
  const double dt = layout.dt;

  Scene s;
  s.scene_id = scene_id;
  s.domain = domain;
  s.length = length;
  s.dt = dt;
  s.curvature = domain.curvature_min == domain.curvature_max
                    ? domain.curvature_min
                    : rng.uniform(domain.curvature_min, domain.curvature_max);

  const double heading0 = rng.uniform(-std::numbers::pi, std::numbers::pi);
  const Point2 origin{rng.uniform(-50.0, 50.0), rng.uniform(-50.0, 50.0)};
  const double c0 = std::cos(heading0), s0 = std::sin(heading0);

  struct Agent {
    double x, y, th, v, v_des, yaw_bias;
  };
  std::vector<Agent> st(agents);
  double along = 0.0;
  for (std::size_t i = 0; i < agents; ++i) {
    Agent& a = st[i];
    a.v_des = domain.speed_std > 0.0 ? rng.normal(domain.speed_mean, domain.speed_std) : domain.speed_mean;
    a.v_des = std::clamp(a.v_des, 0.5, 2.0 * domain.speed_mean);
    a.yaw_bias = domain.yaw_rate_scale > 0.0 ? rng.normal(0.0, domain.yaw_rate_scale) : 0.0;
    const double lateral = (static_cast<double>(i % 2) - 0.5) * kLaneWidth;
    if (i >= 2) along -= (kGapStandstill + kGapHeadway * a.v_des) * rng.uniform(0.6, 1.4);
    a.x = origin.x + along * c0 - lateral * s0;
    a.y = origin.y + along * s0 + lateral * c0;
    a.th = heading0;
    a.v = a.v_des;
    s.actor_ids.push_back(static_cast<int>(i) + 1);
  }

  s.tracks.assign(agents, std::vector<Point2>(steps));
  s.map.resize(steps);
  const double path_length = domain.speed_mean * dt * static_cast<double>(steps);
  const double lag = std::min(1.0, dt / kSpeedLag);
  double arc = 0.0;

  std::vector<double> cmd(agents);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < agents; ++i) s.tracks[i][t] = {st[i].x, st[i].y};
    const double psi = heading0 + s.curvature * arc;
    s.map[t] = MapContext{std::sin(psi), std::cos(psi), s.curvature, std::min(1.0, arc / path_length)};
    if (t + 1 == steps) break;

    for (std::size_t i = 0; i < agents; ++i) {
      const Agent& a = st[i];
      double gap = -1.0;
      for (std::size_t j = 0; j < agents; ++j) {
        if (j == i) continue;
        const double dx = st[j].x - a.x, dy = st[j].y - a.y;
        const double lon = dx * std::cos(a.th) + dy * std::sin(a.th);
        const double lat = -dx * std::sin(a.th) + dy * std::cos(a.th);
        if (lon > 0.0 && std::abs(lat) < kLeaderLateral && (gap < 0.0 || lon < gap)) gap = lon;
      }
      double v_cmd = a.v_des;
      if (gap >= 0.0 && domain.interaction_gain > 0.0) {
        const double ref = kGapStandstill + kGapHeadway * a.v_des;
        v_cmd = std::clamp(a.v_des + domain.interaction_gain * (gap - ref), 0.0, 2.0 * a.v_des);
      }
      cmd[i] = v_cmd;
    }
    double moved = 0.0;
    for (std::size_t i = 0; i < agents; ++i) {
      Agent& a = st[i];
      a.v += (cmd[i] - a.v) * lag;
      const double w = s.curvature * a.v + a.yaw_bias;
      if (std::abs(w) > 1e-12) {
        const double th1 = a.th + w * dt;
        a.x += a.v / w * (std::sin(th1) - std::sin(a.th));
        a.y += a.v / w * (std::cos(a.th) - std::cos(th1));
        a.th = th1;
      } else {
        a.x += a.v * dt * std::cos(a.th);
        a.y += a.v * dt * std::sin(a.th);
      }
      if (domain.process_noise_std > 0.0) {
        a.x += rng.normal(0.0, domain.process_noise_std);
        a.y += rng.normal(0.0, domain.process_noise_std);
      }
      moved += a.v * dt;
    }
    arc += moved / static_cast<double>(agents);
  }
  return s;
}

std::vector<Scene> generate_corpus(const DomainFamily& family, const CorpusSpec& spec, const SceneLayout& layout,
                                   const numcore::RngStream& rng) {
  if (spec.min_agents < 1 || spec.max_agents < spec.min_agents) throw ConfigError("corpus agent range invalid");
  std::vector<Scene> out;
  out.reserve(spec.scenes);
  for (std::size_t i = 0; i < spec.scenes; ++i) {
    auto r = rng.child(i);
    const DomainParams d = sample_domain_params(family, r);
    const std::size_t n = spec.min_agents + r.uniform_index(spec.max_agents - spec.min_agents + 1);
    out.push_back(generate_scene(d, n, spec.length, layout, r, static_cast<int>(i)));
  }
  return out;
}

Observation observation_at(const Scene& scene, std::size_t t, std::size_t past_steps) {
  if (t < past_steps || t > scene.length) throw UsageError("observation timestep out of range");
  Observation o;
  o.t = static_cast<int>(t);
  o.actor_ids = scene.actor_ids;
  o.map = scene.map[t];
  o.past.resize(scene.agent_count());
  for (std::size_t a = 0; a < scene.agent_count(); ++a)
    o.past[a].assign(scene.tracks[a].begin() + static_cast<std::ptrdiff_t>(t - past_steps),
                     scene.tracks[a].begin() + static_cast<std::ptrdiff_t>(t));
  return o;
}

Futures future_at(const Scene& scene, std::size_t t, std::size_t future_steps) {
  if (t + future_steps > scene.steps()) throw UsageError("future window out of range");
  Futures f(scene.agent_count());
  for (std::size_t a = 0; a < scene.agent_count(); ++a)
    f[a].assign(scene.tracks[a].begin() + static_cast<std::ptrdiff_t>(t),
                scene.tracks[a].begin() + static_cast<std::ptrdiff_t>(t + future_steps));
  return f;
}

std::string scene_to_line(const Scene& s) {
  Json j;
  j["scene_id"] = s.scene_id;
  j["length"] = s.length;
  j["dt"] = s.dt;
  j["curvature"] = s.curvature;
  j["domain"] = Json{{"speed_mean", s.domain.speed_mean},
                     {"speed_std", s.domain.speed_std},
                     {"yaw_rate_scale", s.domain.yaw_rate_scale},
                     {"process_noise_std", s.domain.process_noise_std},
                     {"interaction_gain", s.domain.interaction_gain},
                     {"curvature_min", s.domain.curvature_min},
                     {"curvature_max", s.domain.curvature_max}};
  j["actor_ids"] = s.actor_ids;
  Json tracks = Json::array();
  for (const auto& tr : s.tracks) {
    Json pts = Json::array();
    for (const auto& p : tr) pts.push_back(Json::array({p.x, p.y}));
    tracks.push_back(std::move(pts));
  }
  j["tracks"] = std::move(tracks);
  Json map = Json::array();
  for (const auto& m : s.map) map.push_back(Json::array({m.sin_heading, m.cos_heading, m.curvature, m.arc_position}));
  j["map"] = std::move(map);
  return j.dump();
}

Scene scene_from_line(const std::string& line) {
  try {
    const Json j = Json::parse(line);
    Scene s;
    s.scene_id = j.at("scene_id").get<int>();
    s.length = j.at("length").get<std::size_t>();
    s.dt = j.at("dt").get<double>();
    s.curvature = j.at("curvature").get<double>();
    const auto& d = j.at("domain");
    s.domain.speed_mean = d.at("speed_mean").get<double>();
    s.domain.speed_std = d.at("speed_std").get<double>();
    s.domain.yaw_rate_scale = d.at("yaw_rate_scale").get<double>();
    s.domain.process_noise_std = d.at("process_noise_std").get<double>();
    s.domain.interaction_gain = d.at("interaction_gain").get<double>();
    s.domain.curvature_min = d.at("curvature_min").get<double>();
    s.domain.curvature_max = d.at("curvature_max").get<double>();
    s.actor_ids = j.at("actor_ids").get<std::vector<int>>();
    for (const auto& tr : j.at("tracks")) {
      std::vector<Point2> pts;
      for (const auto& p : tr) pts.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      s.tracks.push_back(std::move(pts));
    }
    for (const auto& m : j.at("map"))
      s.map.push_back({m.at(0).get<double>(), m.at(1).get<double>(), m.at(2).get<double>(), m.at(3).get<double>()});
    if (s.tracks.size() != s.actor_ids.size()) throw PersistenceError("scene record: track/actor count mismatch");
    for (const auto& tr : s.tracks)
      if (tr.size() != s.map.size()) throw PersistenceError("scene record: track length mismatch");
    if (s.map.size() < s.length) throw PersistenceError("scene record: shorter than declared length");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw PersistenceError(std::string("scene record: ") + e.what());
  }
}

void save_scenes(const std::filesystem::path& path, const std::vector<Scene>& scenes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PersistenceError("cannot open " + path.string());
  for (const auto& s : scenes) out << scene_to_line(s) << '\n';
  if (!out) throw PersistenceError("write failed: " + path.string());
}

std::vector<Scene> load_scenes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PersistenceError("cannot open " + path.string());
  std::vector<Scene> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(scene_from_line(line));
  return out;
}

}  // namespace adaptraj::scenegen
