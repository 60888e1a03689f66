#include "adaptraj/ttt/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <json.hpp>

#include "adaptraj/numcore/errors.hpp"
#include "adaptraj/util/log.hpp"

namespace adaptraj::ttt {

namespace {
constexpr std::uint64_t kMaskTag = 0x7717'0001;
}

std::string to_string(ErrorSignal s) { return s == ErrorSignal::kRegression ? "reg" : "total"; }

ErrorSignal parse_error_signal(const std::string& text) {
  if (text == "reg") return ErrorSignal::kRegression;
  if (text == "total") return ErrorSignal::kTotal;
  throw ConfigError("unknown error signal '" + text + "' (expected reg or total)");
}

void TttConfig::validate(std::size_t future_steps) const {
  if (interval < 1) throw ConfigError("ttt.interval must be >= 1");
  if (interval < future_steps)
    throw ConfigError("ttt.interval must be >= future_steps so supervision labels have matured");
  if (update_frequency < 1) throw ConfigError("ttt.frequency must be >= 1");
  if (!(alpha_min > 0.0) || !(alpha_max >= alpha_min)) throw ConfigError("ttt alpha bounds invalid");
  if (!(alpha_init >= alpha_min && alpha_init <= alpha_max))
    throw ConfigError("ttt.alpha_init must lie in [alpha_min, alpha_max]");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("ttt.gamma must be >= 0");
  if (alpha_window < 1) throw ConfigError("ttt.alpha_window must be >= 1");
  if (!(k > 0.0)) throw ConfigError("ttt.k must be > 0");
  if (!(stat_decay > 0.0 && stat_decay <= 1.0)) throw ConfigError("ttt.stat_decay must be in (0, 1]");
  if (stat_warmup < 1) throw ConfigError("ttt.stat_warmup must be >= 1");
}

double RunningStats::stddev() const { return std::sqrt(std::max(var, 0.0)); }

void update_running_stats(RunningStats& s, double e, double decay, std::size_t warmup) {
  if (!std::isfinite(e) || e < 0.0) {
    util::log_warn("ttt: ignoring non-finite supervision error");
    return;
  }
  if (s.count < warmup) {
    // exact mean / population variance (Welford)
    ++s.count;
    const double d = e - s.mean;
    s.mean += d / static_cast<double>(s.count);
    const double m2 = s.var * static_cast<double>(s.count - 1) + d * (e - s.mean);
    s.var = m2 / static_cast<double>(s.count);
    return;
  }
  ++s.count;
  const double d = e - s.mean;
  s.mean += decay * d;
  s.var = (1.0 - decay) * (s.var + decay * d * d);
}

bool is_hard_sample(const RunningStats& s, double e, double k, std::size_t warmup) {
  if (s.count < warmup) return false;
  return e > s.mean + k * s.stddev();
}

TttState::TttState(const TttConfig& cfg, std::size_t layers)
    : alpha(layers, cfg.alpha_init),
      grad_history(layers),
      last_grad(layers),
      optimizer(cfg.optimizer, cfg.adamw) {}

bool is_opportunity(std::size_t t, std::size_t interval, std::size_t past_steps, std::size_t last_sample) {
  return t % interval == 0 && t >= interval + past_steps && t - interval <= last_sample;
}

std::size_t opportunity_index(std::size_t t, std::size_t interval, std::size_t past_steps) {
  const std::size_t first = (interval + past_steps + interval - 1) / interval;  // in units of tau
  return t / interval - first;
}

std::optional<SupervisionEvent> schedule_supervision(const scenegen::OnlineSequence& stream, std::size_t t,
                                                     const TttConfig& cfg, std::size_t offset) {
  if (!is_opportunity(t, cfg.interval, stream.past_steps(), stream.last_sample())) return std::nullopt;
  if ((offset + opportunity_index(t, cfg.interval, stream.past_steps())) % cfg.update_frequency != 0)
    return std::nullopt;
  SupervisionEvent ev;
  ev.t = t;
  ev.sample = t - cfg.interval;
  ev.x = stream.observe(ev.sample);
  ev.y = stream.future(ev.sample);
  return ev;
}

std::size_t count_regular_updates(std::size_t interval, std::size_t frequency, std::size_t past_steps,
                                  std::size_t last_clock) {
  const std::size_t first = (interval + past_steps + interval - 1) / interval;
  const std::size_t last = last_clock / interval;
  if (last < first) return 0;
  const std::size_t opportunities = last - first + 1;
  return (opportunities + frequency - 1) / frequency;
}

bool sgd_step(numcore::ParameterSet& params, std::span<const double> alpha) {
  const bool ok = numcore::sgd_step(params, alpha);
  if (!ok) util::log_warn("ttt: non-finite gradient, step skipped");
  return ok;
}

bool adaptive_step(numcore::ParameterSet& params, std::span<const double> alpha, numcore::AdamW& opt) {
  const bool ok = opt.step(params, alpha);
  if (!ok) util::log_warn("ttt: non-finite gradient, step skipped");
  return ok;
}

namespace {

std::vector<double> history_mean(const std::deque<std::vector<double>>& h) {
  std::vector<double> mean(h.front().size(), 0.0);
  for (const auto& g : h)
    for (std::size_t i = 0; i < g.size(); ++i) mean[i] += g[i];
  const double inv = 1.0 / static_cast<double>(h.size());
  for (double& v : mean) v *= inv;
  return mean;
}

}  // namespace

std::vector<double> hypergradient(const TttState& state, const numcore::LayerVectors& grads) {
  std::vector<double> out(grads.size(), 0.0);
  for (std::size_t l = 0; l < grads.size(); ++l) {
    if (state.grad_history[l].empty()) continue;
    out[l] = -numcore::dot(grads[l], history_mean(state.grad_history[l]));
  }
  return out;
}

void hypergrad_update_alpha(TttState& state, const numcore::LayerVectors& grads, const TttConfig& cfg,
                            const numcore::LayerVectors* directions) {
  if (grads.size() != state.alpha.size()) throw UsageError("hypergrad: layer count mismatch");
  const bool apply = !cfg.strict_alpha_interval || (state.steps % cfg.alpha_window == 0);
  if (apply) {
    const auto hg = hypergradient(state, grads);
    for (std::size_t l = 0; l < grads.size(); ++l) {
      if (state.grad_history[l].empty()) continue;
      const double a = state.alpha[l] - cfg.gamma * hg[l];
      const double c = std::clamp(a, cfg.alpha_min, cfg.alpha_max);
      if (c != a || !std::isfinite(a)) {
        ++state.alpha_clamps;
        util::log_debug("ttt: alpha clamped on layer " + std::to_string(l));
      }
      state.alpha[l] = std::isfinite(a) ? c : state.alpha[l];
    }
  }
  const auto& pushed = directions ? *directions : grads;
  for (std::size_t l = 0; l < grads.size(); ++l) {
    state.grad_history[l].push_back(pushed[l]);
    while (state.grad_history[l].size() > cfg.alpha_window) state.grad_history[l].pop_front();
    state.last_grad[l] = grads[l];
  }
}

std::string to_string(HypergradDirection d) { return d == HypergradDirection::kGradient ? "gradient" : "update"; }

HypergradDirection parse_hypergrad_direction(const std::string& text) {
  if (text == "gradient") return HypergradDirection::kGradient;
  if (text == "update") return HypergradDirection::kUpdate;
  throw ConfigError("ttt.hypergrad_direction must be 'gradient' or 'update' (got '" + text + "')");
}

std::string StepLog::to_json_line() const {
  nlohmann::ordered_json j;
  j["schema"] = kSchema;
  j["scene"] = scene_id;
  j["t"] = t;
  j["kind"] = !opportunity ? "none" : regular ? (hard ? "regular+hard" : "regular") : (hard ? "hard" : "check");
  j["skipped"] = skipped;
  j["reg"] = reg;
  j["recon"] = recon;
  j["total"] = total;
  if (std::isfinite(e)) j["e"] = e; else j["e"] = nullptr;
  j["m"] = m;
  j["sigma"] = sigma;
  j["hard"] = hard;
  j["alpha"] = alpha;
  if (hard) j["alpha_after_hard"] = alpha_after;
  j["history"] = history_size;
  j["wall_us"] = wall_us;
  return j.dump();
}

numcore::RngStream ttt_mask_stream(std::uint64_t mask_seed, int scene_id, std::size_t t, EventKind kind) {
  return numcore::RngStream(mask_seed, kMaskTag)
      .child(static_cast<std::uint64_t>(static_cast<std::int64_t>(scene_id)))
      .child(static_cast<std::uint64_t>(t) * 2 + (kind == EventKind::kHardExtra ? 1 : 0));
}

TttEngine::TttEngine(TttConfig cfg, const predictor::Predictor& model)
    : cfg_(std::move(cfg)), state_(cfg_, model.params().layer_count()) {
  cfg_.validate(model.config().future_steps);
}

void TttEngine::begin_scene(predictor::Predictor& model, int scene_id) {
  state_.optimizer.reset();
  if (cfg_.reset_tokens_per_scene) model.reset_actor_tokens();
  state_.scene_id = scene_id;
}

bool TttEngine::apply_update(predictor::Predictor& model) {
  bool ok = state_.optimizer.step(model.params(), state_.alpha);
  if (!ok) {
    ++state_.skipped_updates;
    util::log_warn("ttt: non-finite gradient, step skipped");
  }
  return ok;
}

StepLog TttEngine::step(predictor::Predictor& model, const scenegen::OnlineSequence& stream, std::size_t t) {
  const auto t0 = std::chrono::steady_clock::now();
  if (stream.clock() != t) throw UsageError("ttt_step: stream clock differs from t");
  StepLog log;
  log.scene_id = stream.scene().scene_id;
  log.t = t;
  log.opportunity = is_opportunity(t, cfg_.interval, stream.past_steps(), stream.last_sample());

  if (log.opportunity) {
    ++state_.opportunities;
    const std::size_t sample = t - cfg_.interval;
    std::optional<Observation> x;
    std::optional<Futures> y;
    auto fetch = [&] {
      if (!x) {
        x = stream.observe(sample);
        y = stream.future(sample);
      }
    };

    double e = std::numeric_limits<double>::quiet_NaN();
    if ((state_.opportunities - 1) % cfg_.update_frequency == 0) {
      log.regular = true;
      fetch();
      auto mask = ttt_mask_stream(cfg_.mask_seed, log.scene_id, t, EventKind::kRegular);
      try {
        const auto br = model.loss_mae(*x, *y, cfg_.use_tokens, mask);
        log.reg = br.reg;
        log.recon = br.recon;
        log.total = br.total;
        e = cfg_.error_signal == ErrorSignal::kRegression ? br.reg : br.total;
        const auto grads = model.backward();
        const bool track = cfg_.dlo_active() && cfg_.hypergrad_direction == HypergradDirection::kUpdate &&
                           cfg_.optimizer != numcore::OptimizerKind::kSgd;
        numcore::LayerVectors before;
        if (track) before = model.params().layer_values();
        const auto alpha_used = state_.alpha;
        if (apply_update(model)) {
          ++state_.steps;
          ++state_.regular_updates;
          if (track) {
            auto dir = model.params().layer_values();
            for (std::size_t l = 0; l < dir.size(); ++l)
              for (std::size_t i = 0; i < dir[l].size(); ++i) dir[l][i] = (before[l][i] - dir[l][i]) / alpha_used[l];
            hypergrad_update_alpha(state_, grads, cfg_, &dir);
          } else if (cfg_.dlo_active()) {
            hypergrad_update_alpha(state_, grads, cfg_);
          }
        } else {
          log.skipped = true;
        }
      } catch (const NumericError& err) {
        ++state_.skipped_updates;
        log.skipped = true;
        util::log_warn(std::string("ttt: regular update skipped: ") + err.what());
      }
    }

    if (cfg_.hsd) {
      fetch();
      try {
        if (!log.regular) {
          if (cfg_.error_signal == ErrorSignal::kRegression) {
            e = predictor::loss_reg(model.predict(*x, cfg_.use_tokens), *y).loss;
          } else {
            auto mask = ttt_mask_stream(cfg_.mask_seed, log.scene_id, t, EventKind::kRegular);
            e = model.loss_mae(*x, *y, cfg_.use_tokens, mask).total;
          }
        }
      } catch (const NumericError&) {
        e = std::numeric_limits<double>::quiet_NaN();
      }
      log.e = e;
      log.m = state_.stats.mean;
      log.sigma = state_.stats.stddev();
      if (std::isfinite(e)) {
        ++state_.hsd_checks;
        log.hard = is_hard_sample(state_.stats, e, cfg_.k, cfg_.stat_warmup);
        update_running_stats(state_.stats, e, cfg_.stat_decay, cfg_.stat_warmup);
      } else {
        ++state_.ignored_errors;
      }
      log.alpha = state_.alpha;
      if (log.hard) {
        auto mask = ttt_mask_stream(cfg_.mask_seed, log.scene_id, t, EventKind::kHardExtra);
        try {
          model.loss_mae(*x, *y, cfg_.use_tokens, mask);
          model.backward();
          if (apply_update(model)) ++state_.hard_updates;
        } catch (const NumericError& err) {
          ++state_.skipped_updates;
          util::log_warn(std::string("ttt: hard update skipped: ") + err.what());
        }
        log.alpha_after = state_.alpha;
      }
    }
  }
  if (log.alpha.empty()) log.alpha = state_.alpha;
  log.history_size = state_.grad_history.empty() ? 0 : state_.grad_history.front().size();
  log.wall_us =
      std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - t0).count();
  return log;
}

StepLog ttt_step(predictor::Predictor& model, TttEngine& engine, const scenegen::OnlineSequence& stream,
                 std::size_t t) {
  return engine.step(model, stream, t);
}

}  // namespace adaptraj::ttt
