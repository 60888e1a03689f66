#include "adaptraj/pretrain/pretrain.hpp"

#include <cmath>
#include <json.hpp>
#include <numbers>

#include "adaptraj/numcore/errors.hpp"
#include "adaptraj/util/log.hpp"

namespace adaptraj::pretrain {

namespace {

constexpr std::uint64_t kOfflineShuffle = 0x0FF1'0001;
constexpr std::uint64_t kOfflineMask = 0x0FF1'0002;
constexpr std::uint64_t kValMask = 0x0FF1'0003;
constexpr std::uint64_t kMetaShuffle = 0x3E7A'0001;
constexpr std::uint64_t kMetaMask = 0x3E7A'0002;

struct SampleRef {
  std::size_t scene;
  std::size_t t;
};

void add_into(numcore::LayerVectors& acc, const numcore::LayerVectors& g) {
  if (acc.empty()) {
    acc = g;
    return;
  }
  for (std::size_t l = 0; l < g.size(); ++l)
    for (std::size_t i = 0; i < g[l].size(); ++i) acc[l][i] += g[l][i];
}

// Writes per-layer flattened gradients back into the tensors' grad buffers.
void load_grads(numcore::ParameterSet& params, const numcore::LayerVectors& g) {
  const auto& reg = params.registry();
  for (std::size_t l = 0; l < reg.layer_count(); ++l) {
    std::size_t off = 0;
    for (const std::size_t ti : reg.tensors_of(l)) {
      auto& t = params.tensor(ti);
      for (std::size_t k = 0; k < t.size(); ++k) t.grad[k] = g[l][off + k];
      off += t.size();
    }
  }
}

double sample_loss(predictor::Predictor& model, const scenegen::Scene& s, std::size_t t, numcore::RngStream& mask) {
  const auto& c = model.config();
  return model
      .loss_mae(scenegen::observation_at(s, t, c.past_steps), scenegen::future_at(s, t, c.future_steps), false, mask)
      .total;
}

}  // namespace

void OfflineConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("offline.lr must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("offline.weight_decay must be >= 0");
  if (batch_size < 1) throw ConfigError("offline.batch must be >= 1");
  if (sample_stride < 1) throw ConfigError("offline.stride must be >= 1");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw ConfigError("offline.val_fraction must be in [0, 1)");
}

std::string EpochLog::to_json_line(const char* stage) const {
  nlohmann::ordered_json j;
  j["schema"] = "adaptraj.trainlog/1";
  j["stage"] = stage;
  j["epoch"] = epoch;
  j["train_loss"] = train_loss;
  j["val_loss"] = val_loss;
  j["beta"] = beta;
  j["failed_tasks"] = failed_tasks;
  j["skipped_steps"] = skipped_steps;
  return j.dump();
}

OfflineReport offline_pretrain(predictor::Predictor& model, const std::vector<scenegen::Scene>& scenes,
                               const OfflineConfig& cfg) {
  cfg.validate();
  if (scenes.empty()) throw ConfigError("offline pretraining needs a non-empty source corpus");
  const auto& mc = model.config();

  const std::size_t n_val =
      scenes.size() > 1 ? static_cast<std::size_t>(std::floor(cfg.validation_fraction * scenes.size())) : 0;
  const std::size_t n_train = scenes.size() - n_val;
  std::vector<SampleRef> train, val;
  for (std::size_t i = 0; i < scenes.size(); ++i)
    for (std::size_t t = mc.past_steps; t <= scenes[i].length; t += cfg.sample_stride)
      (i < n_train ? train : val).push_back({i, t});
  if (val.empty()) val = train;

  auto val_loss = [&] {
    double sum = 0.0;
    for (std::size_t i = 0; i < val.size(); ++i) {
      numcore::RngStream mask = numcore::RngStream(cfg.seed, kValMask).child(i);
      try {
        sum += sample_loss(model, scenes[val[i].scene], val[i].t, mask);
      } catch (const NumericError&) {
        return std::numeric_limits<double>::quiet_NaN();
      }
    }
    return sum / static_cast<double>(val.size());
  };

  OfflineReport rep;
  rep.initial_val_loss = rep.final_val_loss = val_loss();
  if (!std::isfinite(rep.initial_val_loss)) throw TrainingError("offline pretraining: non-finite validation loss");
  numcore::AdamW opt({0.9, 0.999, 1e-8, cfg.weight_decay});
  const std::vector<double> lr(model.params().layer_count(), cfg.learning_rate);
  predictor::ModelParams last_good = model.params();

  for (std::size_t ep = 0; ep < cfg.epochs; ++ep) {
    auto order = train;
    auto shuffle_rng = numcore::RngStream(cfg.seed, kOfflineShuffle).child(ep);
    shuffle_rng.shuffle(order);
    auto mask_rng = numcore::RngStream(cfg.seed, kOfflineMask).child(ep);
    double epoch_sum = 0.0;
    EpochLog log;
    log.epoch = ep + 1;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      numcore::LayerVectors acc;
      double batch_loss = 0.0;
      for (std::size_t i = b0; i < b1; ++i) {
        double l = 0.0;
        try {
          l = sample_loss(model, scenes[order[i].scene], order[i].t, mask_rng);
        } catch (const NumericError&) {
          l = std::numeric_limits<double>::quiet_NaN();
        }
        if (!std::isfinite(l)) {
          model.params() = last_good;
          throw TrainingError("offline pretraining diverged at epoch " + std::to_string(ep + 1) +
                              "; parameters restored to the last good state");
        }
        batch_loss += l;
        add_into(acc, model.backward());
      }
      const double inv = 1.0 / static_cast<double>(b1 - b0);
      for (auto& layer : acc)
        for (double& g : layer) g *= inv;
      load_grads(model.params(), acc);
      if (!opt.step(model.params(), lr)) {
        ++log.skipped_steps;
        continue;
      }
      epoch_sum += batch_loss;
    }
    log.train_loss = epoch_sum / static_cast<double>(order.size());
    log.val_loss = val_loss();
    if (!std::isfinite(log.val_loss)) {
      model.params() = last_good;
      throw TrainingError("offline pretraining diverged after epoch " + std::to_string(ep + 1) +
                          "; parameters restored to the last good state");
    }
    last_good = model.params();
    rep.final_val_loss = log.val_loss;
    util::log_info("offline epoch " + std::to_string(log.epoch) + " train " + std::to_string(log.train_loss) +
                   " val " + std::to_string(log.val_loss));
    rep.epochs.push_back(log);
  }
  return rep;
}

void MetaConfig::validate(bool allow_frozen_inner) const {
  if (batch < 1) throw ConfigError("meta.batch must be >= 1");
  if (inner_steps < 1) throw ConfigError("meta.inner_steps must be >= 1");
  if (!(alpha_in > 0.0) && !(allow_frozen_inner && alpha_in == 0.0))
    throw ConfigError("meta.alpha_in must be > 0");
  if (!(beta_final > 0.0) || !(beta_init >= beta_final)) throw ConfigError("meta: need beta_init >= beta_final > 0");
  if (interval < 1) throw ConfigError("meta.interval must be >= 1");
  if (!(weight_decay >= 0.0)) throw ConfigError("meta.weight_decay must be >= 0");
}

std::vector<std::size_t> meta_epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  auto rng = numcore::RngStream(seed, kMetaShuffle).child(epoch);
  rng.shuffle(order);
  return order;
}

double cosine_beta(const MetaConfig& cfg, std::size_t s, std::size_t total) {
  if (total <= 1 || s == 0) return cfg.beta_init;
  if (s + 1 >= total) return cfg.beta_final;
  const double frac = static_cast<double>(s) / static_cast<double>(total - 1);
  return cfg.beta_final + 0.5 * (cfg.beta_init - cfg.beta_final) * (1.0 + std::cos(std::numbers::pi * frac));
}

numcore::RngStream meta_mask_stream(std::uint64_t seed, std::size_t epoch, std::size_t scene_index, std::size_t j) {
  return numcore::RngStream(seed, kMetaMask).child(epoch).child(scene_index).child(j);
}

InnerResult inner_adapt(const predictor::Predictor& model, const scenegen::TttTask& task, double alpha_in,
                        std::size_t inner_steps, const MetaConfig& cfg, std::size_t epoch) {
  if (task.scene == nullptr) throw UsageError("inner_adapt: task without scene");
  if (inner_steps > task.schedule.size()) throw ConfigError("inner_adapt: more steps than scheduled");
  predictor::Predictor work = model;
  work.reset_actor_tokens();
  const auto& mc = work.config();
  scenegen::OnlineSequence seq(*task.scene, mc.past_steps, mc.future_steps);
  const std::vector<double> lr(work.params().layer_count(), alpha_in);
  numcore::Optimizer opt(cfg.inner_optimizer, {0.9, 0.999, 1e-8, 0.0});
  InnerResult res;
  try {
    for (std::size_t j = 0; j < inner_steps; ++j) {
      seq.advance_to(task.update_clock(j));
      const std::size_t s = task.supervision_sample(j);
      auto mask = meta_mask_stream(cfg.seed, epoch, task.scene_index, j);
      const double l = work.loss_mae(seq.observe(s), seq.future(s), cfg.inner_tokens, mask).total;
      if (!std::isfinite(l)) throw NumericError("inner loss not finite");
      work.backward();
      if (!opt.step(work.params(), lr)) throw NumericError("inner gradient not finite");
    }
    const std::size_t ev = inner_steps == task.schedule.size() ? task.evaluation_sample()
                                                               : task.origin + inner_steps * task.interval;
    seq.advance_to(std::max(seq.clock(), ev + mc.future_steps));
    auto mask = meta_mask_stream(cfg.seed, epoch, task.scene_index, cfg.inner_steps);
    res.final_loss = work.loss_mae(seq.observe(ev), seq.future(ev), cfg.inner_tokens, mask).total;
    if (!std::isfinite(res.final_loss)) throw NumericError("evaluation loss not finite");
    res.final_grads = work.backward();
  } catch (const NumericError& e) {
    res.failed = true;
    util::log_warn("meta: task on scene " + std::to_string(task.scene_index) + " failed: " + e.what());
  }
  res.adapted = std::move(work.params());
  return res;
}

OuterStepResult meta_outer_step(predictor::Predictor& model, const std::vector<const scenegen::TttTask*>& batch,
                                const MetaConfig& cfg, double beta, numcore::Optimizer& outer, std::size_t epoch) {
  OuterStepResult out;
  numcore::LayerVectors acc;
  double loss_sum = 0.0;
  for (const auto* task : batch) {
    auto r = inner_adapt(model, *task, cfg.alpha_in, cfg.inner_steps, cfg, epoch);
    if (r.failed) continue;
    ++out.used_tasks;
    loss_sum += r.final_loss;
    add_into(acc, r.final_grads);
  }
  if (out.used_tasks == 0) {
    out.skipped = true;
    util::log_warn("meta: every task in the batch failed; outer step skipped");
    return out;
  }
  out.mean_loss = loss_sum / static_cast<double>(out.used_tasks);
  std::fill(acc[model.token_layer()].begin(), acc[model.token_layer()].end(), 0.0);
  load_grads(model.params(), acc);
  std::vector<double> rate(model.params().layer_count(), beta);
  rate[model.token_layer()] = 0.0;
  if (!outer.step(model.params(), rate)) {
    out.skipped = true;
    util::log_warn("meta: non-finite outer gradient; step skipped");
  }
  return out;
}

double mean_adapted_loss(const predictor::Predictor& model, const std::vector<scenegen::TttTask>& tasks,
                         const MetaConfig& cfg, std::size_t epoch) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& t : tasks) {
    const auto r = inner_adapt(model, t, cfg.alpha_in, cfg.inner_steps, cfg, epoch);
    if (r.failed) continue;
    sum += r.final_loss;
    ++n;
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(n);
}

MetaReport meta_pretrain(predictor::Predictor& model, const scenegen::TaskSet& tasks, const MetaConfig& cfg) {
  cfg.validate(true);
  if (tasks.tasks.empty()) throw ConfigError("meta pretraining needs a non-empty task set");
  MetaReport rep;
  EpochLog anchor;
  anchor.epoch = 0;
  anchor.train_loss = anchor.val_loss = mean_adapted_loss(model, tasks.tasks, cfg, 0);
  anchor.beta = cfg.beta_init;
  rep.epochs.push_back(anchor);

  const std::size_t per_epoch = (tasks.tasks.size() + cfg.batch - 1) / cfg.batch;
  const std::size_t total = per_epoch * cfg.epochs;
  numcore::Optimizer outer(cfg.outer_optimizer, {0.9, 0.999, 1e-8, cfg.weight_decay});
  std::size_t s = 0;
  for (std::size_t ep = 1; ep <= cfg.epochs; ++ep) {
    std::vector<const scenegen::TttTask*> order;
    for (const std::size_t i : meta_epoch_order(cfg.seed, ep, tasks.tasks.size())) order.push_back(&tasks.tasks[i]);
    EpochLog log;
    log.epoch = ep;
    double loss_sum = 0.0;
    std::size_t used = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch) {
      const std::vector<const scenegen::TttTask*> batch(order.begin() + static_cast<std::ptrdiff_t>(b0),
                                                        order.begin() + static_cast<std::ptrdiff_t>(
                                                                            std::min(order.size(), b0 + cfg.batch)));
      const double beta = cosine_beta(cfg, s++, total);
      log.beta = beta;
      const auto r = meta_outer_step(model, batch, cfg, beta, outer, ep);
      log.failed_tasks += batch.size() - r.used_tasks;
      if (r.skipped) ++log.skipped_steps;
      loss_sum += r.mean_loss * static_cast<double>(r.used_tasks);
      used += r.used_tasks;
      ++rep.outer_steps;
    }
    log.train_loss = used ? loss_sum / static_cast<double>(used) : std::numeric_limits<double>::quiet_NaN();
    log.val_loss = log.train_loss;
    util::log_info("meta epoch " + std::to_string(ep) + " loss " + std::to_string(log.train_loss));
    rep.epochs.push_back(log);
  }
  return rep;
}

}  // namespace adaptraj::pretrain
