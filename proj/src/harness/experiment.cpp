#include "adaptraj/harness/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <ctime>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "adaptraj/numcore/checkpoint.hpp"
#include "adaptraj/numcore/errors.hpp"
#include "adaptraj/numcore/rng.hpp"
#include "adaptraj/util/log.hpp"

#ifndef ADAPTRAJ_VERSION
#define ADAPTRAJ_VERSION "0.0.0-unknown"
#endif

namespace adaptraj::harness {

std::string version_string() { return ADAPTRAJ_VERSION; }

std::string CellSpec::id() const {
  std::ostringstream os;
  os << matrix << "/" << (method.empty() ? toggles.label() : method) << "/a" << format_double(alpha_init) << "/f"
     << frequency << "/b" << (budget_limited ? std::to_string(budget) : std::string("all")) << "/s" << seed;
  return os.str();
}

std::uint64_t stage_seed(std::uint64_t seed, Stage stage) {
  return numcore::mix64(numcore::mix64(seed) ^ (static_cast<std::uint64_t>(stage) * 0x9e3779b97f4a7c15ULL));
}

SeedArtifacts::SeedArtifacts(const ExperimentConfig& cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {}

const std::vector<scenegen::Scene>& SeedArtifacts::source() {
  std::lock_guard lock(mu_);
  if (!source_) {
    numcore::RngStream rng(stage_seed(seed_, Stage::kSource), 0);
    source_ = scenegen::generate_corpus(cfg_.source.family, cfg_.source.corpus, cfg_.layout(), rng);
  }
  return *source_;
}

const std::vector<scenegen::Scene>& SeedArtifacts::target() {
  std::lock_guard lock(mu_);
  if (!target_) {
    numcore::RngStream rng(stage_seed(seed_, Stage::kTarget), 0);
    target_ = scenegen::generate_corpus(cfg_.target.family, cfg_.target.corpus, cfg_.layout(), rng);
  }
  return *target_;
}

const numcore::ParameterSet& SeedArtifacts::offline() {
  const auto& src = source();
  std::lock_guard lock(mu_);
  if (!offline_) {
    predictor::Predictor model(cfg_.model_config(), stage_seed(seed_, Stage::kInit));
    auto oc = cfg_.offline;
    oc.seed = stage_seed(seed_, Stage::kOffline);
    offline_report_ = pretrain::offline_pretrain(model, src, oc);
    offline_ = model.params();
  }
  return *offline_;
}

const pretrain::OfflineReport& SeedArtifacts::offline_report() {
  offline();
  return offline_report_;
}

const numcore::ParameterSet& SeedArtifacts::meta(double alpha_in) {
  const auto& base = offline();
  const auto& src = source();
  std::lock_guard lock(mu_);
  auto mc = cfg_.meta_config(alpha_in);
  auto it = meta_.find(mc.alpha_in);
  if (it == meta_.end()) {
    predictor::Predictor model(cfg_.model_config(), stage_seed(seed_, Stage::kInit));
    numcore::assign_values(model.params(), base);
    numcore::RngStream rng(stage_seed(seed_, Stage::kTasks), 0);
    const auto tasks = scenegen::make_ttt_task_set(src, cfg_.layout(), rng);
    mc.seed = stage_seed(seed_, Stage::kMeta);
    auto report = pretrain::meta_pretrain(model, tasks, mc);
    it = meta_.emplace(mc.alpha_in, std::make_pair(model.params(), std::move(report))).first;
  }
  return it->second.first;
}

const pretrain::MetaReport& SeedArtifacts::meta_report(double alpha_in) {
  meta(alpha_in);
  std::lock_guard lock(mu_);
  return meta_.at(cfg_.meta_config(alpha_in).alpha_in).second;
}

SeedArtifacts& ArtifactCache::get(std::uint64_t seed) {
  std::lock_guard lock(mu_);
  auto& slot = seeds_[seed];
  if (!slot) slot = std::make_unique<SeedArtifacts>(cfg_, seed);
  return *slot;
}

namespace {

double thread_cpu_seconds() {
  timespec ts{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return static_cast<double>(ts.tv_sec) + 1e-9 * static_cast<double>(ts.tv_nsec);
}

ResultRow blank_row(const CellSpec& cell) {
  ResultRow r;
  r.cell_id = cell.id();
  r.matrix = cell.matrix;
  r.method = cell.method.empty() ? cell.toggles.label() : cell.method;
  r.toggles = cell.toggles;
  r.seed = cell.seed;
  r.alpha_init = cell.alpha_init;
  r.frequency = cell.frequency;
  r.budget = cell.budget;
  r.budget_limited = cell.budget_limited;
  return r;
}

}  // namespace

ResultRow run_cell(const ExperimentConfig& cfg, const CellSpec& cell, ArtifactCache& cache,
                   scenegen::AccessTrace* trace, const CellHooks* hooks) {
  ResultRow row = blank_row(cell);
  std::string stage = "setup";
  try {
    auto& art = cache.get(cell.seed);
    stage = "scenegen";
    const auto& scenes = art.target();
    stage = "offline";
    const auto* params = &art.offline();
    if (cell.toggles.mp) {
      stage = "meta";
      params = &art.meta(cell.alpha_init);
    }

    stage = "eval";
    predictor::Predictor model(cfg.model_config(), stage_seed(cell.seed, Stage::kInit));
    numcore::assign_values(model.params(), *params);

    const bool adapt = cell.toggles.ttt;
    std::optional<ttt::TttEngine> engine;
    if (adapt) {
      auto tc = cfg.ttt_config(cell.toggles, cell.alpha_init, cell.frequency);
      tc.mask_seed = stage_seed(cell.seed, Stage::kTtt);
      engine.emplace(tc, model);
    }

    eval::EvalConfig ec;
    ec.k = cfg.eval_k;
    ec.miss_threshold = cfg.miss_threshold;
    ec.ttt_mode = adapt && cfg.ttt.use_tokens;

    const auto layout = cfg.layout();
    std::size_t used = 0;
    eval::TttHook hook;
    if (adapt || (hooks && hooks->extra)) {
      hook = [&](predictor::Predictor& m, const scenegen::OnlineSequence& s, std::size_t t) {
        if (adapt && (!cell.budget_limited || used < cell.budget)) {
          const auto log = engine->step(m, s, t);
          // labels read at this opportunity, by the update or the hardness check
          if (log.regular || (log.opportunity && cell.toggles.hsd)) used += s.scene().actor_ids.size();
          if (hooks && hooks->on_step) hooks->on_step(log);
        }
        if (hooks && hooks->extra) hooks->extra(m, s, t);
      };
    }

    eval::MetricsLedger ledger;
    const auto start = std::chrono::steady_clock::now();
    const double cpu_start = thread_cpu_seconds();
    for (const auto& scene : scenes) {
      auto stream = scenegen::build_online_sequence(scene, layout.past_steps, layout.future_steps, trace);
      if (engine) engine->begin_scene(model, scene.scene_id);
      streaming_eval(model, stream, hook, ec, ledger);
      row.eval_steps += stream.last_sample() - stream.first_sample() + 1;
    }
    row.eval_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    row.eval_cpu_seconds = thread_cpu_seconds() - cpu_start;
    row.fps = row.eval_seconds > 0.0 ? static_cast<double>(row.eval_steps) / row.eval_seconds : 0.0;

    row.ade_k = ledger.mean_ade_k();
    row.fde_k = ledger.mean_fde_k();
    row.ade_1 = ledger.mean_ade_1();
    row.miss_rate = ledger.miss_rate();
    row.records = ledger.size();
    row.supervision_used = used;
    row.budget_exhausted = cell.budget_limited && used >= cell.budget;
    if (cell.budget_limited && !row.budget_exhausted && adapt)
      util::log_warn("cell " + row.cell_id + ": budget exceeds available supervision, all of it was used");
    if (engine) {
      const auto& st = engine->state();
      row.regular_updates = st.regular_updates;
      row.hard_updates = st.hard_updates;
      row.hsd_checks = st.hsd_checks;
      row.final_alpha = st.alpha;
    }
    if (trace) row.violations = trace->violation_count();
  } catch (const std::exception& e) {
    row.ok = false;
    row.failed_stage = stage;
    row.error = e.what();
    util::log_error("cell " + row.cell_id + " failed in " + stage + ": " + e.what());
  }
  return row;
}

std::vector<ResultRow> run_cells(const ExperimentConfig& cfg, const std::vector<CellSpec>& cells, ArtifactCache& cache,
                                 std::size_t jobs) {
  std::vector<ResultRow> rows(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      std::unique_ptr<scenegen::AccessTrace> trace;
      if (cfg.trace) trace = std::make_unique<scenegen::AccessTrace>();
      rows[i] = run_cell(cfg, cells[i], cache, trace.get());
      util::log_info("done " + rows[i].cell_id);
    }
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, cells.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return rows;
}

namespace {

CellSpec make_cell(const std::string& matrix, const Toggles& tg, std::uint64_t seed, double alpha, std::size_t f) {
  CellSpec c;
  c.matrix = matrix;
  c.toggles = tg;
  c.method = tg.label();
  c.seed = seed;
  c.alpha_init = alpha;
  c.frequency = f;
  return c;
}

}  // namespace

std::vector<CellSpec> ablation_cells(const ExperimentConfig& cfg) {
  const std::vector<Toggles> rows = {
      {false, false, false, false}, {true, false, false, false}, {true, true, false, false},
      {true, false, true, false},   {true, false, false, true},  {true, true, true, false},
      {true, true, true, true}};
  std::vector<CellSpec> cells;
  for (const auto& tg : rows)
    for (auto s : cfg.seeds) cells.push_back(make_cell("ablate", tg, s, cfg.ttt.alpha_init, cfg.ttt.update_frequency));
  return cells;
}

std::vector<CellSpec> lr_sweep_cells(const ExperimentConfig& cfg) {
  const std::vector<Toggles> rows = {{true, false, false, false}, {true, false, true, false}, {true, true, true, true}};
  std::vector<CellSpec> cells;
  for (double a : cfg.sweep_alphas)
    for (const auto& tg : rows)
      for (auto s : cfg.seeds) cells.push_back(make_cell("lr-sweep", tg, s, a, cfg.ttt.update_frequency));
  return cells;
}

std::vector<CellSpec> frequency_cells(const ExperimentConfig& cfg) {
  const std::vector<Toggles> rows = {{true, false, false, false}, {true, true, true, true}};
  std::vector<CellSpec> cells;
  for (const auto& tg : rows)
    for (auto f : cfg.sweep_frequencies)
      for (auto s : cfg.seeds) cells.push_back(make_cell("freq-sweep", tg, s, cfg.ttt.alpha_init, f));
  return cells;
}

std::vector<CellSpec> fewshot_cells(const ExperimentConfig& cfg) {
  const std::vector<Toggles> rows = {{true, false, false, false}, {true, true, true, true}};
  std::vector<CellSpec> cells;
  for (const auto& tg : rows)
    for (auto b : cfg.fewshot_budgets)
      for (auto s : cfg.seeds) {
        auto c = make_cell("fewshot", tg, s, cfg.ttt.alpha_init, cfg.ttt.update_frequency);
        c.budget = b;
        c.budget_limited = true;
        cells.push_back(c);
      }
  return cells;
}

std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows) {
  std::vector<SummaryRow> out;
  std::vector<std::vector<const ResultRow*>> groups;
  for (const auto& r : rows) {
    auto same = [&](const SummaryRow& s) {
      return s.matrix == r.matrix && s.method == r.method && s.alpha_init == r.alpha_init &&
             s.frequency == r.frequency && s.budget == r.budget && s.budget_limited == r.budget_limited;
    };
    auto it = std::find_if(out.begin(), out.end(), same);
    if (it == out.end()) {
      SummaryRow s;
      s.matrix = r.matrix;
      s.method = r.method;
      s.alpha_init = r.alpha_init;
      s.frequency = r.frequency;
      s.budget = r.budget;
      s.budget_limited = r.budget_limited;
      out.push_back(s);
      groups.emplace_back();
      it = out.end() - 1;
    }
    groups[static_cast<std::size_t>(it - out.begin())].push_back(&r);
  }
  for (std::size_t g = 0; g < out.size(); ++g) {
    auto& s = out[g];
    std::vector<const ResultRow*> ok;
    for (const auto* r : groups[g]) (r->ok ? ok.push_back(r) : void(++s.failed));
    s.seeds = ok.size();
    if (ok.empty()) continue;
    auto stat = [&](double ResultRow::*field, double& mean, double& sd) {
      double sum = 0.0;
      for (const auto* r : ok) sum += r->*field;
      mean = sum / static_cast<double>(ok.size());
      double ss = 0.0;
      for (const auto* r : ok) ss += (r->*field - mean) * (r->*field - mean);
      sd = ok.size() > 1 ? std::sqrt(ss / static_cast<double>(ok.size() - 1)) : 0.0;
    };
    stat(&ResultRow::ade_k, s.ade_k, s.ade_k_std);
    stat(&ResultRow::fde_k, s.fde_k, s.fde_k_std);
    stat(&ResultRow::ade_1, s.ade_1, s.ade_1_std);
    stat(&ResultRow::miss_rate, s.miss_rate, s.miss_rate_std);
    double reg = 0.0, hard = 0.0, fps = 0.0;
    for (const auto* r : ok) {
      reg += static_cast<double>(r->regular_updates);
      hard += static_cast<double>(r->hard_updates);
      fps += r->fps;
    }
    s.regular_updates = reg / static_cast<double>(ok.size());
    s.hard_updates = hard / static_cast<double>(ok.size());
    s.fps = fps / static_cast<double>(ok.size());
  }
  return out;
}

std::string results_csv_header() {
  return "cell_id,matrix,method,ttt,mp,dlo,hsd,seed,alpha_init,frequency,budget,budget_exhausted,"
         "ade_6,fde_6,ade_1,mr_6,records,eval_steps,regular_updates,hard_updates,hsd_checks,supervision_used,"
         "status,failed_stage";
}

namespace {

std::string budget_text(bool limited, std::size_t b) { return limited ? std::to_string(b) : "all"; }

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += (c == '"') ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

}  // namespace

std::string to_csv_line(const ResultRow& r) {
  std::ostringstream os;
  os << csv_escape(r.cell_id) << ',' << r.matrix << ',' << csv_escape(r.method) << ',' << r.toggles.ttt << ','
     << r.toggles.mp << ',' << r.toggles.dlo << ',' << r.toggles.hsd << ',' << r.seed << ','
     << format_double(r.alpha_init) << ',' << r.frequency << ',' << budget_text(r.budget_limited, r.budget) << ','
     << r.budget_exhausted << ',' << format_double(r.ade_k) << ',' << format_double(r.fde_k) << ','
     << format_double(r.ade_1) << ',' << format_double(r.miss_rate) << ',' << r.records << ',' << r.eval_steps << ','
     << r.regular_updates << ',' << r.hard_updates << ',' << r.hsd_checks << ',' << r.supervision_used << ','
     << (r.ok ? "ok" : "failed") << ',' << r.failed_stage;
  return os.str();
}

std::string summary_csv_header() {
  return "matrix,method,alpha_init,frequency,budget,seeds,failed,ade_6,ade_6_std,fde_6,fde_6_std,ade_1,ade_1_std,"
         "mr_6,mr_6_std,regular_updates,hard_updates";
}

std::string to_csv_line(const SummaryRow& s) {
  std::ostringstream os;
  os << s.matrix << ',' << csv_escape(s.method) << ',' << format_double(s.alpha_init) << ',' << s.frequency << ','
     << budget_text(s.budget_limited, s.budget) << ',' << s.seeds << ',' << s.failed << ','
     << format_double(s.ade_k) << ',' << format_double(s.ade_k_std) << ',' << format_double(s.fde_k) << ','
     << format_double(s.fde_k_std) << ',' << format_double(s.ade_1) << ',' << format_double(s.ade_1_std) << ','
     << format_double(s.miss_rate) << ',' << format_double(s.miss_rate_std) << ','
     << format_double(s.regular_updates) << ',' << format_double(s.hard_updates);
  return os.str();
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PersistenceError("cannot write " + path.string());
  out << text;
  if (!out) throw PersistenceError("write failed: " + path.string());
}

}  // namespace

void write_results(const std::vector<ResultRow>& rows, const ExperimentConfig& cfg, const std::string& command,
                   const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw PersistenceError("cannot create " + dir.string() + ": " + ec.message());

  std::string csv = results_csv_header() + "\n";
  for (const auto& r : rows) csv += to_csv_line(r) + "\n";
  write_text(dir / "results.csv", csv);

  const auto summary = summarize(rows);
  std::string scsv = summary_csv_header() + "\n";
  for (const auto& s : summary) scsv += to_csv_line(s) + "\n";
  write_text(dir / "summary.csv", scsv);

  std::string timing = "cell_id,eval_steps,eval_seconds,eval_cpu_seconds,fps\n";
  for (const auto& r : rows)
    timing += csv_escape(r.cell_id) + "," + std::to_string(r.eval_steps) + "," + format_double(r.eval_seconds) + "," +
              format_double(r.eval_cpu_seconds) + "," +
              format_double(r.fps) + "\n";
  write_text(dir / "timing.csv", timing);

  nlohmann::ordered_json j;
  j["schema"] = "adaptraj.summary/1";
  j["command"] = command;
  j["version"] = version_string();
  j["config_hash"] = config_hash(cfg);
  j["seeds"] = cfg.seeds;
  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.ok ? 0 : 1;
  j["cells"] = rows.size();
  j["failed_cells"] = failed;
  auto& arr = j["rows"] = nlohmann::ordered_json::array();
  for (const auto& s : summary) {
    nlohmann::ordered_json o;
    o["matrix"] = s.matrix;
    o["method"] = s.method;
    o["alpha_init"] = s.alpha_init;
    o["frequency"] = s.frequency;
    o["budget"] = budget_text(s.budget_limited, s.budget);
    o["seeds"] = s.seeds;
    o["failed"] = s.failed;
    o["ade_6"] = {{"mean", s.ade_k}, {"std", s.ade_k_std}};
    o["fde_6"] = {{"mean", s.fde_k}, {"std", s.fde_k_std}};
    o["ade_1"] = {{"mean", s.ade_1}, {"std", s.ade_1_std}};
    o["mr_6"] = {{"mean", s.miss_rate}, {"std", s.miss_rate_std}};
    o["regular_updates"] = s.regular_updates;
    o["hard_updates"] = s.hard_updates;
    arr.push_back(o);
  }
  nlohmann::ordered_json errors = nlohmann::ordered_json::array();
  for (const auto& r : rows)
    if (!r.ok) errors.push_back({{"cell_id", r.cell_id}, {"stage", r.failed_stage}, {"error", r.error}});
  j["errors"] = errors;
  write_text(dir / "summary.json", j.dump(2) + "\n");
}

}  // namespace adaptraj::harness
