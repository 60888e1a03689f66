#pragma once

#include <cstddef>
#include <mutex>
#include <vector>

#include "adaptraj/numcore/rng.hpp"
#include "adaptraj/scenegen/scene.hpp"

namespace adaptraj::scenegen {

enum class AccessKind { kObservation, kFuture };

struct AccessEvent {
  int scene_id = 0;
  AccessKind kind = AccessKind::kObservation;
  std::size_t sample = 0;   // sample timestep requested
  std::size_t clock = 0;    // stream clock at the time of access
  std::size_t newest = 0;   // newest timestep the accessor would expose
};

/// Log of every gated accessor call. Thread-safe; one per run.
class AccessTrace {
 public:
  void record(const AccessEvent& e, bool violation);
  std::size_t accesses() const;
  std::size_t violation_count() const;
  std::vector<AccessEvent> violations() const;
  void clear();

 private:
  mutable std::mutex mu_;
  std::size_t accesses_ = 0;
  std::vector<AccessEvent> violations_;
};

/// Temporally ordered view of a scene. Sample X_t (t_h <= t <= t_s) holds the
/// past window [t - t_h, t) and map context M_t; its future Y_t covers
/// [t, t + t_f) and matures once the clock reaches t + t_f.
class OnlineSequence {
 public:
  OnlineSequence(const Scene& scene, std::size_t past_steps, std::size_t future_steps,
                 AccessTrace* trace = nullptr);

  const Scene& scene() const { return *scene_; }
  std::size_t past_steps() const { return past_; }
  std::size_t future_steps() const { return future_; }
  std::size_t first_sample() const { return past_; }
  std::size_t last_sample() const { return scene_->length; }
  /// Clock limit: the last future matures here.
  std::size_t horizon() const { return scene_->steps(); }

  std::size_t clock() const { return clock_; }
  /// Clock only moves forward.
  void advance_to(std::size_t t);

  bool observable(std::size_t t) const { return t <= clock_; }
  bool matured(std::size_t t) const { return t + future_ <= clock_; }

  /// Throws MaturationError if t is beyond the clock.
  Observation observe(std::size_t t) const;
  /// Throws MaturationError unless clock >= t + t_f.
  Futures future(std::size_t t) const;

 private:
  void check_sample(std::size_t t) const;

  const Scene* scene_;
  std::size_t past_;
  std::size_t future_;
  AccessTrace* trace_;
  std::size_t clock_ = 0;
};

OnlineSequence build_online_sequence(const Scene& scene, std::size_t past_steps, std::size_t future_steps,
                                     AccessTrace* trace = nullptr);

/// Simulated TTT task over one scene. Relative times `schedule` (tau .. K*tau)
/// and `evaluation` (K*tau) are offset by `origin` (= t_h, the first sample).
/// The update at relative time s is supervised by sample origin + s - tau,
/// whose future has matured by then when tau >= t_f.
struct TttTask {
  std::size_t scene_index = 0;
  const Scene* scene = nullptr;
  std::size_t origin = 0;
  std::size_t interval = 0;
  std::vector<std::size_t> schedule;
  std::size_t evaluation = 0;

  std::size_t supervision_sample(std::size_t j) const { return origin + schedule.at(j) - interval; }
  std::size_t update_clock(std::size_t j) const { return origin + schedule.at(j); }
  std::size_t evaluation_sample() const { return origin + evaluation; }
};

struct TaskSet {
  std::vector<TttTask> tasks;
  std::size_t skipped = 0;  // scenes too short for the layout
};

/// One task per long-enough scene, shuffled with `rng`.
TaskSet make_ttt_task_set(const std::vector<Scene>& scenes, const SceneLayout& layout, numcore::RngStream& rng);

}  // namespace adaptraj::scenegen
