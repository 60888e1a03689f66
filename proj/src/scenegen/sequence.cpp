#include "adaptraj/scenegen/sequence.hpp"

#include <string>

#include "adaptraj/numcore/errors.hpp"
#include "adaptraj/util/log.hpp"

namespace adaptraj::scenegen {

void AccessTrace::record(const AccessEvent& e, bool violation) {
  std::lock_guard lock(mu_);
  ++accesses_;
  if (violation) violations_.push_back(e);
}

std::size_t AccessTrace::accesses() const {
  std::lock_guard lock(mu_);
  return accesses_;
}

std::size_t AccessTrace::violation_count() const {
  std::lock_guard lock(mu_);
  return violations_.size();
}

std::vector<AccessEvent> AccessTrace::violations() const {
  std::lock_guard lock(mu_);
  return violations_;
}

void AccessTrace::clear() {
  std::lock_guard lock(mu_);
  accesses_ = 0;
  violations_.clear();
}

OnlineSequence::OnlineSequence(const Scene& scene, std::size_t past_steps, std::size_t future_steps,
                               AccessTrace* trace)
    : scene_(&scene), past_(past_steps), future_(future_steps), trace_(trace) {
  if (past_steps < 1 || future_steps < 1) throw ConfigError("sequence horizons must be >= 1");
  if (scene.length < past_steps || scene.steps() < scene.length + future_steps)
    throw ConfigError("scene too short for sequence horizons");
}

void OnlineSequence::advance_to(std::size_t t) {
  if (t < clock_) throw UsageError("stream clock cannot move backwards");
  if (t > horizon()) throw UsageError("stream clock beyond scene horizon");
  clock_ = t;
}

void OnlineSequence::check_sample(std::size_t t) const {
  if (t < first_sample() || t > last_sample())
    throw UsageError("sample " + std::to_string(t) + " outside [" + std::to_string(first_sample()) + ", " +
                     std::to_string(last_sample()) + "]");
}

Observation OnlineSequence::observe(std::size_t t) const {
  check_sample(t);
  const bool bad = !observable(t);
  if (trace_) trace_->record({scene_->scene_id, AccessKind::kObservation, t, clock_, t == 0 ? 0 : t - 1}, bad);
  if (bad)
    throw MaturationError("observation of sample " + std::to_string(t) + " at clock " + std::to_string(clock_));
  return observation_at(*scene_, t, past_);
}

Futures OnlineSequence::future(std::size_t t) const {
  check_sample(t);
  const bool bad = !matured(t);
  if (trace_) trace_->record({scene_->scene_id, AccessKind::kFuture, t, clock_, t + future_ - 1}, bad);
  if (bad)
    throw MaturationError("future of sample " + std::to_string(t) + " matures at " + std::to_string(t + future_) +
                          ", clock " + std::to_string(clock_));
  return future_at(*scene_, t, future_);
}

OnlineSequence build_online_sequence(const Scene& scene, std::size_t past_steps, std::size_t future_steps,
                                     AccessTrace* trace) {
  return OnlineSequence(scene, past_steps, future_steps, trace);
}

TaskSet make_ttt_task_set(const std::vector<Scene>& scenes, const SceneLayout& layout, numcore::RngStream& rng) {
  layout.validate();
  TaskSet set;
  const std::size_t need = layout.min_scene_length();
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const Scene& s = scenes[i];
    if (s.length < need) {
      ++set.skipped;
      continue;
    }
    TttTask task;
    task.scene_index = i;
    task.scene = &s;
    task.origin = layout.past_steps;
    task.interval = layout.interval;
    for (std::size_t j = 1; j <= layout.inner_steps; ++j) task.schedule.push_back(j * layout.interval);
    task.evaluation = layout.inner_steps * layout.interval;
    set.tasks.push_back(std::move(task));
  }
  if (set.skipped > 0)
    util::log_warn("task set: skipped " + std::to_string(set.skipped) + " scene(s) shorter than " +
                   std::to_string(need) + " steps");
  rng.shuffle(set.tasks);
  return set;
}

}  // namespace adaptraj::scenegen
