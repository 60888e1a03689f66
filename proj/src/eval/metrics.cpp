#include "adaptraj/eval/metrics.hpp"

#include <cmath>
#include <deque>
#include <fstream>
#include <json.hpp>

#include "adaptraj/numcore/errors.hpp"

namespace adaptraj::eval {

std::vector<ModeErrors> displacement_errors(const predictor::Prediction& prediction, const Futures& truth) {
  if (prediction.agent_count() != truth.size()) throw ConfigError("metrics: agent count mismatch");
  std::vector<ModeErrors> out(truth.size());
  for (std::size_t a = 0; a < truth.size(); ++a) {
    const auto& y = truth[a];
    if (y.empty()) throw ConfigError("metrics: empty horizon");
    for (const auto& mode : prediction.trajectories[a]) {
      if (mode.size() != y.size()) throw ConfigError("metrics: horizon mismatch");
      double sum = 0.0;
      for (std::size_t s = 0; s < y.size(); ++s) sum += std::hypot(mode[s].x - y[s].x, mode[s].y - y[s].y);
      out[a].ade.push_back(sum / static_cast<double>(y.size()));
      out[a].fde.push_back(std::hypot(mode.back().x - y.back().x, mode.back().y - y.back().y));
    }
  }
  return out;
}

BestOfK best_of_k(const ModeErrors& e, std::size_t k, double miss_threshold) {
  if (k == 0) throw ConfigError("best_of_k: K must be >= 1");
  if (k > e.ade.size()) throw ConfigError("best_of_k: K exceeds the number of modes");
  BestOfK r;
  r.ade_k = e.ade[0];
  double min_fde = e.fde[0];
  for (std::size_t m = 1; m < k; ++m) {
    if (e.ade[m] < r.ade_k) {
      r.ade_k = e.ade[m];
      r.mode = m;
    }
    min_fde = std::min(min_fde, e.fde[m]);
  }
  r.fde_k = min_fde;
  r.miss = min_fde > miss_threshold;
  r.ade_1 = e.ade[0];
  return r;
}

void MetricsLedger::add(const Record& r) {
  if (!(r.ade_k >= 0.0) || !(r.fde_k >= 0.0) || !(r.ade_1 >= 0.0))
    throw NumericError("metrics ledger: negative or non-finite displacement");
  records_.push_back(r);
  sum_ade_ += r.ade_k;
  sum_fde_ += r.fde_k;
  sum_ade1_ += r.ade_1;
  misses_ += r.miss ? 1 : 0;
}

void MetricsLedger::merge(const MetricsLedger& other) {
  for (const auto& r : other.records_) add(r);
}

namespace {
double safe_mean(double sum, std::size_t n) {
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(n);
}
}  // namespace

double MetricsLedger::mean_ade_k() const { return safe_mean(sum_ade_, records_.size()); }
double MetricsLedger::mean_fde_k() const { return safe_mean(sum_fde_, records_.size()); }
double MetricsLedger::miss_rate() const { return safe_mean(static_cast<double>(misses_), records_.size()); }
double MetricsLedger::mean_ade_1() const { return safe_mean(sum_ade1_, records_.size()); }

MetricsLedger MetricsLedger::recomputed() const {
  MetricsLedger l;
  for (const auto& r : records_) l.add(r);
  return l;
}

std::string MetricsLedger::to_json(bool with_records) const {
  nlohmann::ordered_json j;
  j["schema"] = "adaptraj.metrics/1";
  j["count"] = records_.size();
  j["mADE_K"] = mean_ade_k();
  j["mFDE_K"] = mean_fde_k();
  j["MR_K"] = miss_rate();
  j["mADE_1"] = mean_ade_1();
  if (with_records) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : records_) {
      nlohmann::ordered_json o;
      o["scene"] = r.scene_id;
      o["t"] = r.t;
      o["actor"] = r.actor_id;
      o["ade_k"] = r.ade_k;
      o["fde_k"] = r.fde_k;
      o["ade_1"] = r.ade_1;
      o["miss"] = r.miss;
      o["mode"] = r.mode;
      o["checksum"] = r.model_checksum;
      arr.push_back(std::move(o));
    }
    j["records"] = std::move(arr);
  }
  return j.dump(1);
}

void MetricsLedger::save(const std::filesystem::path& path, bool with_records) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PersistenceError("cannot open " + path.string());
  out << to_json(with_records) << '\n';
  if (!out) throw PersistenceError("write failed: " + path.string());
}

void streaming_eval(predictor::Predictor& model, scenegen::OnlineSequence& stream, const TttHook& hook,
                    const EvalConfig& cfg, MetricsLedger& ledger) {
  struct Pending {
    std::size_t t;
    predictor::Prediction pred;
    std::vector<int> actors;
    std::uint64_t checksum;
  };
  std::deque<Pending> pending;
  const int scene_id = stream.scene().scene_id;

  auto score_ready = [&] {
    while (!pending.empty() && stream.matured(pending.front().t)) {
      const auto& p = pending.front();
      const auto truth = stream.future(p.t);
      const auto errs = displacement_errors(p.pred, truth);
      for (std::size_t a = 0; a < errs.size(); ++a) {
        const auto b = best_of_k(errs[a], cfg.k, cfg.miss_threshold);
        ledger.add({scene_id, p.t, p.actors[a], b.ade_k, b.fde_k, b.ade_1, b.miss, b.mode, p.checksum});
      }
      pending.pop_front();
    }
  };

  for (std::size_t t = stream.first_sample(); t <= stream.last_sample(); ++t) {
    stream.advance_to(t);
    score_ready();
    if (hook) hook(model, stream, t);
    const auto obs = stream.observe(t);
    pending.push_back({t, model.predict(obs, cfg.ttt_mode), obs.actor_ids,
                       cfg.record_checksums ? model.params().checksum() : 0});
  }
  stream.advance_to(stream.horizon());
  score_ready();
}

AuditReport causality_audit(const scenegen::AccessTrace* trace) {
  if (trace == nullptr) throw AuditError("causality audit requires a run with access tracing enabled");
  AuditReport r;
  r.accesses = trace->accesses();
  r.violations = trace->violations();
  return r;
}

}  // namespace adaptraj::eval
