#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "adaptraj/numcore/errors.hpp"
#include "adaptraj/scenegen/scene.hpp"
#include "adaptraj/scenegen/sequence.hpp"
#include "adaptraj/util/log.hpp"

using namespace adaptraj;
using namespace adaptraj::scenegen;
using numcore::RngStream;

namespace {

SceneLayout default_layout() { return SceneLayout{}; }

DomainFamily busy_family() {
  DomainFamily f;
  f.speed_mean = {10.0, 2.0};
  f.speed_std = {1.0, 0.3};
  f.yaw_rate_scale = {0.02, 0.01};
  f.process_noise_std = {0.05, 0.02};
  f.interaction_gain = {0.4, 0.2};
  f.curvature_min = -0.006;
  f.curvature_max = 0.006;
  return f;
}

}  // namespace

TEST(DomainFamily, ZeroStdGivesMeans) {
  DomainFamily f;
  f.speed_mean = {9.0, 0.0};
  f.speed_std = {0.7, 0.0};
  f.yaw_rate_scale = {0.01, 0.0};
  f.process_noise_std = {0.1, 0.0};
  f.interaction_gain = {0.3, 0.0};
  RngStream rng(3, 1);
  const auto p = sample_domain_params(f, rng);
  EXPECT_EQ(p.speed_mean, 9.0);
  EXPECT_EQ(p.speed_std, 0.7);
  EXPECT_EQ(p.yaw_rate_scale, 0.01);
  EXPECT_EQ(p.process_noise_std, 0.1);
  EXPECT_EQ(p.interaction_gain, 0.3);
}

TEST(DomainFamily, SameRngSameDraw) {
  RngStream a(11, 2), b(11, 2);
  const auto pa = sample_domain_params(busy_family(), a);
  const auto pb = sample_domain_params(busy_family(), b);
  EXPECT_EQ(pa.speed_mean, pb.speed_mean);
  EXPECT_EQ(pa.interaction_gain, pb.interaction_gain);
}

TEST(DomainFamily, NegativeStdRejected) {
  DomainFamily f;
  f.yaw_rate_scale = {0.01, -0.1};
  RngStream rng(1, 1);
  EXPECT_THROW(sample_domain_params(f, rng), ConfigError);
}

TEST(DomainFamily, SpeedMeanMonteCarlo) {
  DomainFamily f;
  f.speed_mean = {8.0, 1.0};
  RngStream rng(2024, 7);
  double sum = 0.0;
  for (int i = 0; i < 1000; ++i) sum += sample_domain_params(f, rng).speed_mean;
  EXPECT_NEAR(sum / 1000.0, 8.0, 0.1);
}

TEST(GenerateScene, StraightConstantVelocity) {
  DomainParams d;
  d.speed_mean = 8.0;
  d.speed_std = 0.0;
  RngStream rng(5, 5);
  const auto layout = default_layout();
  const auto s = generate_scene(d, 1, layout.min_scene_length(), layout, rng);
  const auto& tr = s.tracks[0];
  const double vx = (tr[1].x - tr[0].x) / layout.dt, vy = (tr[1].y - tr[0].y) / layout.dt;
  EXPECT_NEAR(std::hypot(vx, vy), 8.0, 1e-12);
  for (std::size_t t = 0; t < tr.size(); ++t) {
    EXPECT_NEAR(tr[t].x, tr[0].x + vx * layout.dt * static_cast<double>(t), 1e-9);
    EXPECT_NEAR(tr[t].y, tr[0].y + vy * layout.dt * static_cast<double>(t), 1e-9);
  }
}

TEST(GenerateScene, CircleRadius) {
  DomainParams d;
  d.speed_mean = 6.0;
  d.speed_std = 0.0;
  d.curvature_min = d.curvature_max = 0.02;  // omega = 0.12 rad/s, radius 50 m
  RngStream rng(8, 1);
  const auto layout = default_layout();
  const auto s = generate_scene(d, 1, 120, layout, rng);
  const auto& tr = s.tracks[0];
  // center from the initial heading: left of the first displacement
  const double th0 = std::atan2(tr[1].y - tr[0].y, tr[1].x - tr[0].x) - 0.12 * layout.dt / 2.0;
  const double r = 6.0 / 0.12;
  const Point2 c{tr[0].x - r * std::sin(th0), tr[0].y + r * std::cos(th0)};
  for (const auto& p : tr) EXPECT_NEAR(std::hypot(p.x - c.x, p.y - c.y), r, 1e-6);
}

TEST(GenerateScene, ContinuityOverHundredScenes) {
  const auto layout = default_layout();
  CorpusSpec spec;
  spec.scenes = 100;
  spec.length = layout.min_scene_length();
  const auto scenes = generate_corpus(busy_family(), spec, layout, RngStream(99, 3));
  ASSERT_EQ(scenes.size(), 100u);
  for (const auto& s : scenes) {
    const double bound = s.domain.speed_mean * s.dt * 5.0;
    ASSERT_EQ(s.steps(), s.length + layout.future_steps);
    for (const auto& tr : s.tracks)
      for (std::size_t t = 1; t < tr.size(); ++t) {
        ASSERT_TRUE(std::isfinite(tr[t].x) && std::isfinite(tr[t].y));
        ASSERT_LE(std::hypot(tr[t].x - tr[t - 1].x, tr[t].y - tr[t - 1].y), bound);
      }
  }
}

TEST(GenerateScene, RejectsShortScene) {
  const auto layout = default_layout();
  RngStream rng(1, 1);
  EXPECT_THROW(generate_scene(DomainParams{}, 2, layout.min_scene_length() - 1, layout, rng), ConfigError);
  EXPECT_THROW(generate_scene(DomainParams{}, 0, layout.min_scene_length(), layout, rng), ConfigError);
}

TEST(GenerateScene, InteractionSlowsFollower) {
  DomainParams d;
  d.speed_mean = 10.0;
  d.speed_std = 0.0;
  d.interaction_gain = 0.5;
  RngStream rng(4, 4);
  const auto layout = default_layout();
  const auto with = generate_scene(d, 4, 80, layout, rng);
  d.interaction_gain = 0.0;
  RngStream rng2(4, 4);
  const auto without = generate_scene(d, 4, 80, layout, rng2);
  EXPECT_NE(with.tracks, without.tracks);
}

TEST(GenerateScene, DeterministicCorpus) {
  const auto layout = default_layout();
  CorpusSpec spec;
  spec.scenes = 5;
  const auto a = generate_corpus(busy_family(), spec, layout, RngStream(7, 1));
  const auto b = generate_corpus(busy_family(), spec, layout, RngStream(7, 1));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(scene_to_line(a[i]), scene_to_line(b[i]));
}

TEST(OnlineSequenceTest, WindowsAndSlices) {
  const auto layout = default_layout();
  RngStream rng(12, 1);
  const auto s = generate_scene(sample_domain_params(busy_family(), rng), 3, 80, layout, rng);
  auto seq = build_online_sequence(s, layout.past_steps, layout.future_steps);
  seq.advance_to(seq.horizon());
  const std::size_t t = 30;
  const auto obs = seq.observe(t);
  ASSERT_EQ(obs.past[0].size(), layout.past_steps);
  EXPECT_EQ(obs.past[1].back(), s.tracks[1][t - 1]);
  EXPECT_EQ(obs.past[1].front(), s.tracks[1][t - layout.past_steps]);
  EXPECT_EQ(obs.actor_ids, s.actor_ids);
  const auto fut = seq.future(t);
  ASSERT_EQ(fut[2].size(), layout.future_steps);
  for (std::size_t k = 0; k < layout.future_steps; ++k) EXPECT_EQ(fut[2][k], s.tracks[2][t + k]);
}

TEST(OnlineSequenceTest, MaturationGate) {
  const auto layout = default_layout();
  RngStream rng(12, 2);
  const auto s = generate_scene(DomainParams{}, 2, 80, layout, rng);
  AccessTrace trace;
  auto seq = build_online_sequence(s, layout.past_steps, layout.future_steps, &trace);
  const std::size_t t = 20;
  seq.advance_to(t + layout.future_steps - 1);
  EXPECT_THROW(seq.future(t), MaturationError);
  EXPECT_THROW(seq.observe(t + layout.future_steps), MaturationError);
  EXPECT_EQ(trace.violation_count(), 2u);
  seq.advance_to(t + layout.future_steps);
  EXPECT_NO_THROW(seq.future(t));
  EXPECT_EQ(trace.violation_count(), 2u);
  EXPECT_EQ(trace.accesses(), 3u);
  EXPECT_THROW(seq.advance_to(t), UsageError);
}

TEST(TaskSet, ScheduleForFourSteps) {
  auto layout = default_layout();
  RngStream rng(1, 9);
  const std::vector<Scene> scenes{generate_scene(DomainParams{}, 2, layout.min_scene_length(), layout, rng)};
  const std::size_t warns = util::warning_count();
  auto set = make_ttt_task_set(scenes, layout, rng);
  ASSERT_EQ(set.tasks.size(), 1u);
  EXPECT_EQ(set.skipped, 0u);
  EXPECT_EQ(util::warning_count(), warns);
  EXPECT_EQ(set.tasks[0].schedule, (std::vector<std::size_t>{12, 24, 36, 48}));
  EXPECT_EQ(set.tasks[0].evaluation, 48u);
  EXPECT_EQ(set.tasks[0].supervision_sample(0), layout.past_steps);
  EXPECT_EQ(set.tasks[0].evaluation_sample(), layout.past_steps + 48);
}

TEST(TaskSet, SingleStep) {
  auto layout = default_layout();
  layout.inner_steps = 1;
  RngStream rng(1, 9);
  const std::vector<Scene> scenes{generate_scene(DomainParams{}, 2, layout.min_scene_length(), layout, rng)};
  auto set = make_ttt_task_set(scenes, layout, rng);
  EXPECT_EQ(set.tasks[0].schedule, (std::vector<std::size_t>{12}));
  EXPECT_EQ(set.tasks[0].evaluation, 12u);
}

TEST(TaskSet, ShortSceneSkippedWithWarning) {
  auto layout = default_layout();
  layout.inner_steps = 1;
  RngStream rng(1, 9);
  std::vector<Scene> scenes{generate_scene(DomainParams{}, 2, layout.min_scene_length(), layout, rng),
                            generate_scene(DomainParams{}, 2, layout.min_scene_length() + 12, layout, rng)};
  layout.inner_steps = 2;
  util::set_log_level(util::LogLevel::kQuiet);
  const std::size_t warns = util::warning_count();
  auto set = make_ttt_task_set(scenes, layout, rng);
  util::set_log_level(util::LogLevel::kWarn);
  EXPECT_EQ(set.tasks.size(), 1u);
  EXPECT_EQ(set.skipped, 1u);
  EXPECT_EQ(set.tasks[0].scene_index, 1u);
  EXPECT_EQ(util::warning_count(), warns + 1);
}

TEST(SceneIo, RoundTripExact) {
  const auto layout = default_layout();
  CorpusSpec spec;
  spec.scenes = 3;
  const auto scenes = generate_corpus(busy_family(), spec, layout, RngStream(31, 1));
  const auto path = std::filesystem::temp_directory_path() / "adaptraj_scenes_test.jsonl";
  save_scenes(path, scenes);
  const auto back = load_scenes(path);
  std::filesystem::remove(path);
  ASSERT_EQ(back.size(), scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) EXPECT_TRUE(back[i] == scenes[i]);
}

TEST(SceneIo, MalformedLine) {
  EXPECT_THROW(scene_from_line("{\"scene_id\": 1}"), PersistenceError);
  EXPECT_THROW(scene_from_line("not json"), PersistenceError);
}
