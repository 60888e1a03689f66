#include <gtest/gtest.h>

#include <cmath>

#include "adaptraj/numcore/errors.hpp"
#include "adaptraj/pretrain/pretrain.hpp"
#include "adaptraj/util/log.hpp"

using namespace adaptraj;
using namespace adaptraj::pretrain;
using numcore::RngStream;

namespace {

predictor::PredictorConfig small_model() {
  predictor::PredictorConfig c;
  c.embed_dim = 8;
  c.hidden_dim = 16;
  c.modes = 3;
  return c;
}

scenegen::DomainFamily source_family() {
  scenegen::DomainFamily f;
  f.speed_mean = {8.0, 1.0};
  f.speed_std = {0.8, 0.2};
  f.yaw_rate_scale = {0.01, 0.005};
  f.process_noise_std = {0.03, 0.01};
  f.interaction_gain = {0.2, 0.1};
  f.curvature_min = -0.001;
  f.curvature_max = 0.001;
  return f;
}

std::vector<scenegen::Scene> corpus(std::size_t n, std::uint64_t seed, std::size_t length = 76) {
  scenegen::CorpusSpec spec;
  spec.scenes = n;
  spec.length = length;
  return scenegen::generate_corpus(source_family(), spec, scenegen::SceneLayout{}, RngStream(seed, 1));
}

MetaConfig meta_cfg() {
  MetaConfig c;
  c.alpha_in = 0.002;
  c.seed = 3;
  return c;
}

scenegen::TaskSet tasks_of(const std::vector<scenegen::Scene>& scenes, std::size_t k = 4) {
  scenegen::SceneLayout layout;
  layout.inner_steps = k;
  RngStream rng(1, 1);
  return scenegen::make_ttt_task_set(scenes, layout, rng);
}

}  // namespace

TEST(Offline, LossDropsByTwentyPercent) {
  const auto scenes = corpus(12, 5);
  predictor::Predictor model(small_model(), 1);
  OfflineConfig cfg;
  cfg.epochs = 6;
  cfg.sample_stride = 2;
  cfg.learning_rate = 3e-3;
  cfg.validation_fraction = 0.25;
  const auto rep = offline_pretrain(model, scenes, cfg);
  ASSERT_EQ(rep.epochs.size(), 6u);
  EXPECT_LT(rep.final_val_loss, 0.8 * rep.initial_val_loss);
  EXPECT_TRUE(model.actor_tokens_zero());
}

TEST(Offline, ZeroEpochsUnchanged) {
  const auto scenes = corpus(3, 5);
  predictor::Predictor model(small_model(), 1);
  const auto before = model.params();
  OfflineConfig cfg;
  cfg.epochs = 0;
  offline_pretrain(model, scenes, cfg);
  EXPECT_TRUE(model.params().values_equal(before));
}

TEST(Offline, Deterministic) {
  const auto scenes = corpus(4, 5);
  OfflineConfig cfg;
  cfg.epochs = 2;
  cfg.sample_stride = 3;
  predictor::Predictor a(small_model(), 1), b(small_model(), 1);
  offline_pretrain(a, scenes, cfg);
  offline_pretrain(b, scenes, cfg);
  EXPECT_TRUE(a.params().values_equal(b.params()));
  EXPECT_EQ(a.params().checksum(), b.params().checksum());
}

TEST(Offline, DivergenceRestoresLastGood) {
  auto scenes = corpus(3, 5);
  scenes[0].tracks[0][30].x = std::nan("");
  predictor::Predictor model(small_model(), 1);
  const auto before = model.params();
  OfflineConfig cfg;
  cfg.epochs = 1;
  cfg.validation_fraction = 0.34;
  EXPECT_THROW(offline_pretrain(model, scenes, cfg), TrainingError);
  EXPECT_TRUE(model.params().values_equal(before));
}

TEST(Offline, BadConfig) {
  OfflineConfig cfg;
  cfg.learning_rate = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  predictor::Predictor model(small_model(), 1);
  EXPECT_THROW(offline_pretrain(model, {}, OfflineConfig{}), ConfigError);
}

TEST(Meta, CosineSchedule) {
  MetaConfig c;
  const std::size_t total = 37;
  EXPECT_NEAR(cosine_beta(c, 0, total), 5e-4, 1e-12);
  EXPECT_NEAR(cosine_beta(c, total - 1, total), 1e-6, 1e-12);
  for (std::size_t s = 1; s < total; ++s) EXPECT_LE(cosine_beta(c, s, total), cosine_beta(c, s - 1, total));
  EXPECT_EQ(cosine_beta(c, 0, 1), 5e-4);
}

TEST(Meta, ConfigValidation) {
  MetaConfig c;
  c.beta_final = 1e-3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = MetaConfig{};
  c.alpha_in = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NO_THROW(c.validate(true));
  c.batch = 0;
  EXPECT_THROW(c.validate(true), ConfigError);
}

TEST(Inner, DoesNotMutateAndIsDeterministic) {
  const auto scenes = corpus(2, 7);
  const auto ts = tasks_of(scenes);
  predictor::Predictor model(small_model(), 2);
  const auto sum = model.params().checksum();
  const auto r1 = inner_adapt(model, ts.tasks[0], 0.01, 4, meta_cfg(), 1);
  const auto r2 = inner_adapt(model, ts.tasks[0], 0.01, 4, meta_cfg(), 1);
  EXPECT_EQ(model.params().checksum(), sum);
  EXPECT_FALSE(r1.failed);
  EXPECT_TRUE(r1.adapted.values_equal(r2.adapted));
  EXPECT_FALSE(r1.adapted.values_equal(model.params()));
  EXPECT_EQ(r1.final_loss, r2.final_loss);
}

TEST(Inner, FrozenInnerLoopIsIdentity) {
  const auto scenes = corpus(2, 7);
  const auto ts = tasks_of(scenes);
  predictor::Predictor model(small_model(), 2);
  const auto cfg = meta_cfg();
  const auto r = inner_adapt(model, ts.tasks[0], 0.0, 4, cfg, 1);
  EXPECT_TRUE(r.adapted.values_equal(model.params()));
  const auto& t = ts.tasks[0];
  const std::size_t ev = t.evaluation_sample();
  auto mask = meta_mask_stream(cfg.seed, 1, t.scene_index, cfg.inner_steps);
  predictor::Predictor copy = model;
  const double direct = copy.loss_mae(scenegen::observation_at(*t.scene, ev, 4),
                                      scenegen::future_at(*t.scene, ev, 12), true, mask)
                            .total;
  EXPECT_EQ(r.final_loss, direct);
}

TEST(Inner, DescentOnFrozenBackbone) {
  const auto scenes = corpus(1, 9);
  predictor::Predictor model(small_model(), 4);
  const auto x = scenegen::observation_at(scenes[0], 20, 4);
  const auto y = scenegen::future_at(scenes[0], 20, 12);
  std::vector<double> lr(model.params().layer_count(), 0.0);
  for (std::size_t l = 0; l < lr.size(); ++l)
    if (model.params().registry().layer_name(l).rfind("dec_", 0) == 0) lr[l] = 1e-3;
  RngStream m1(1, 1);
  const double before = model.loss_mae(x, y, false, m1).total;
  model.backward();
  numcore::sgd_step(model.params(), lr);
  RngStream m2(1, 1);
  EXPECT_LE(model.loss_mae(x, y, false, m2).total, before);
}

TEST(Inner, FirstOrderOracleSingleStep) {
  const auto scenes = corpus(2, 7);
  const auto ts = tasks_of(scenes, 1);
  auto cfg = meta_cfg();
  cfg.inner_steps = 1;
  predictor::Predictor model(small_model(), 6);
  const auto& t = ts.tasks[0];
  const auto r = inner_adapt(model, t, cfg.alpha_in, 1, cfg, 2);
  // theta' = theta - alpha grad L_sup(theta), then grad L_eval(theta')
  predictor::Predictor ref = model;
  auto m0 = meta_mask_stream(cfg.seed, 2, t.scene_index, 0);
  const std::size_t s = t.supervision_sample(0);
  ref.loss_mae(scenegen::observation_at(*t.scene, s, 4), scenegen::future_at(*t.scene, s, 12), true, m0);
  ref.backward();
  numcore::sgd_step(ref.params(), std::vector<double>(ref.params().layer_count(), cfg.alpha_in));
  auto m1 = meta_mask_stream(cfg.seed, 2, t.scene_index, 1);
  const std::size_t ev = t.evaluation_sample();
  ref.loss_mae(scenegen::observation_at(*t.scene, ev, 4), scenegen::future_at(*t.scene, ev, 12), true, m1);
  const auto g = ref.backward();
  ASSERT_EQ(g.size(), r.final_grads.size());
  for (std::size_t l = 0; l < g.size(); ++l) EXPECT_EQ(g[l], r.final_grads[l]);
}

TEST(Outer, SingleTaskGradientApplied) {
  const auto scenes = corpus(2, 7);
  const auto ts = tasks_of(scenes);
  auto cfg = meta_cfg();
  cfg.outer_optimizer = numcore::OptimizerKind::kSgd;
  predictor::Predictor model(small_model(), 6);
  const auto before = model.params();
  const auto r = inner_adapt(model, ts.tasks[0], cfg.alpha_in, cfg.inner_steps, cfg, 1);
  numcore::Optimizer outer(numcore::OptimizerKind::kSgd, {});
  meta_outer_step(model, {&ts.tasks[0]}, cfg, 0.01, outer, 1);
  const auto& reg = before.registry();
  for (std::size_t l = 0; l < reg.layer_count(); ++l) {
    std::size_t off = 0;
    for (const std::size_t ti : reg.tensors_of(l)) {
      for (std::size_t k = 0; k < before.tensor(ti).size(); ++k) {
        const double g = l == model.token_layer() ? 0.0 : r.final_grads[l][off + k];
        EXPECT_EQ(model.params().tensor(ti).values[k], before.tensor(ti).values[k] - 0.01 * g);
      }
      off += before.tensor(ti).size();
    }
  }
  EXPECT_TRUE(model.actor_tokens_zero());
}

TEST(Outer, AllFailedSkips) {
  auto scenes = corpus(1, 7);
  for (auto& tr : scenes[0].tracks)
    for (auto& p : tr) p.x = std::nan("");
  const auto ts = tasks_of(scenes);
  predictor::Predictor model(small_model(), 6);
  const auto before = model.params();
  numcore::Optimizer outer(numcore::OptimizerKind::kAdamW, {});
  util::set_log_level(util::LogLevel::kQuiet);
  const auto r = meta_outer_step(model, {&ts.tasks[0]}, meta_cfg(), 0.01, outer, 1);
  util::set_log_level(util::LogLevel::kWarn);
  EXPECT_TRUE(r.skipped);
  EXPECT_EQ(r.used_tasks, 0u);
  EXPECT_TRUE(model.params().values_equal(before));
}

TEST(MetaPretrain, AnchorAndTokens) {
  const auto scenes = corpus(6, 11);
  const auto ts = tasks_of(scenes);
  auto cfg = meta_cfg();
  cfg.epochs = 2;
  predictor::Predictor model(small_model(), 8);
  const double anchor = mean_adapted_loss(model, ts.tasks, cfg, 0);
  const auto rep = meta_pretrain(model, ts, cfg);
  ASSERT_EQ(rep.epochs.size(), 3u);
  EXPECT_EQ(rep.epochs[0].train_loss, anchor);
  EXPECT_EQ(rep.outer_steps, 4u);
  EXPECT_TRUE(model.actor_tokens_zero());
}

TEST(MetaPretrain, FrozenInnerEqualsPlainTraining) {
  const auto scenes = corpus(6, 11);
  const auto ts = tasks_of(scenes);
  auto cfg = meta_cfg();
  cfg.alpha_in = 0.0;
  cfg.epochs = 2;
  cfg.batch = 3;
  predictor::Predictor model(small_model(), 8);
  predictor::Predictor ref = model;
  meta_pretrain(model, ts, cfg);

  // reference: AdamW on summed evaluation-sample gradients at theta
  numcore::AdamW opt({0.9, 0.999, 1e-8, cfg.weight_decay});
  const std::size_t n = ts.tasks.size();
  const std::size_t total = cfg.epochs * ((n + cfg.batch - 1) / cfg.batch);
  std::size_t step = 0;
  for (std::size_t ep = 1; ep <= cfg.epochs; ++ep) {
    const auto order = meta_epoch_order(cfg.seed, ep, n);
    for (std::size_t b0 = 0; b0 < n; b0 += cfg.batch) {
      numcore::LayerVectors sum;
      for (std::size_t i = b0; i < std::min(n, b0 + cfg.batch); ++i) {
        const auto& t = ts.tasks[order[i]];
        auto mask = meta_mask_stream(cfg.seed, ep, t.scene_index, cfg.inner_steps);
        const std::size_t ev = t.evaluation_sample();
        ref.loss_mae(scenegen::observation_at(*t.scene, ev, 4), scenegen::future_at(*t.scene, ev, 12), true, mask);
        const auto g = ref.backward();
        if (sum.empty()) {
          sum = g;
        } else {
          for (std::size_t l = 0; l < g.size(); ++l)
            for (std::size_t k = 0; k < g[l].size(); ++k) sum[l][k] += g[l][k];
        }
      }
      auto& p = ref.params();
      for (std::size_t l = 0; l < p.layer_count(); ++l) {
        std::size_t off = 0;
        for (const std::size_t ti : p.registry().tensors_of(l)) {
          for (std::size_t k = 0; k < p.tensor(ti).size(); ++k)
            p.tensor(ti).grad[k] = l == ref.token_layer() ? 0.0 : sum[l][off + k];
          off += p.tensor(ti).size();
        }
      }
      std::vector<double> rate(p.layer_count(), cosine_beta(cfg, step++, total));
      rate[ref.token_layer()] = 0.0;
      opt.step(p, rate);
    }
  }
  EXPECT_TRUE(model.params().values_equal(ref.params()));
}
