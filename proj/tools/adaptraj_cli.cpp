#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "adaptraj/harness/config.hpp"
#include "adaptraj/harness/experiment.hpp"
#include "adaptraj/numcore/checkpoint.hpp"
#include "adaptraj/numcore/errors.hpp"
#include "adaptraj/util/log.hpp"

namespace fs = std::filesystem;
using namespace adaptraj;
using namespace adaptraj::harness;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;

struct Common {
  std::string config;
  std::vector<std::uint64_t> seeds;
  std::string out;
  std::size_t jobs = 1;
  std::vector<std::string> overrides;
  std::string log_level = "warn";
};

struct Audit {
  std::size_t plant = 0;
};

ExperimentConfig resolve_config(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!c.seeds.empty()) cfg.seeds = c.seeds;
  cfg.validate();
  return cfg;
}

fs::path resolve_out(const Common& c, const std::string& command) {
  if (!c.out.empty()) return c.out;
  const char* root = std::getenv("ADAPTRAJ_OUT");
  return fs::path(root && *root ? root : "runs") / command;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw PersistenceError("cannot write " + p.string());
  out << text;
}

void prepare_dir(const fs::path& dir, const ExperimentConfig& cfg) {
  fs::create_directories(dir);
  write_file(dir / "config.txt", dump_config(cfg));
}

int matrix_exit(const std::vector<ResultRow>& rows) {
  for (const auto& r : rows)
    if (!r.ok) return kRuntime;
  return kOk;
}

int cmd_gen(const ExperimentConfig& cfg, const fs::path& out) {
  prepare_dir(out, cfg);
  ArtifactCache cache(cfg);
  for (auto s : cfg.seeds) {
    auto& art = cache.get(s);
    const auto dir = out / ("seed_" + std::to_string(s));
    fs::create_directories(dir);
    scenegen::save_scenes(dir / "source.jsonl", art.source());
    scenegen::save_scenes(dir / "target.jsonl", art.target());
  }
  return kOk;
}

int cmd_pretrain(const ExperimentConfig& cfg, const fs::path& out, bool meta) {
  prepare_dir(out, cfg);
  ArtifactCache cache(cfg);
  for (auto s : cfg.seeds) {
    auto& art = cache.get(s);
    const auto dir = out / ("seed_" + std::to_string(s));
    fs::create_directories(dir);
    numcore::save_checkpoint(dir / "theta_off.ckpt", art.offline());
    std::string log;
    for (const auto& e : art.offline_report().epochs) log += e.to_json_line("offline") + "\n";
    if (meta) {
      const double a = cfg.ttt.alpha_init;
      numcore::save_checkpoint(dir / "theta_meta.ckpt", art.meta(a));
      for (const auto& e : art.meta_report(a).epochs) log += e.to_json_line("meta") + "\n";
    }
    write_file(dir / "trainlog.jsonl", log);
  }
  return kOk;
}

int cmd_ttt(const ExperimentConfig& cfg, const fs::path& out, std::size_t jobs) {
  prepare_dir(out, cfg);
  ArtifactCache cache(cfg);
  std::vector<CellSpec> cells;
  for (auto s : cfg.seeds) {
    CellSpec c;
    c.matrix = "ttt";
    c.toggles = cfg.toggles;
    c.method = cfg.toggles.label();
    c.seed = s;
    c.alpha_init = cfg.ttt.alpha_init;
    c.frequency = cfg.ttt.update_frequency;
    c.budget = cfg.fewshot_budget;
    c.budget_limited = cfg.fewshot_budget > 0;
    cells.push_back(c);
  }
  std::vector<ResultRow> rows;
  if (cfg.step_log) {
    // serial so each seed's step log is written in order
    for (const auto& c : cells) {
      std::ofstream steps(out / ("steps_seed_" + std::to_string(c.seed) + ".jsonl"), std::ios::trunc);
      CellHooks hooks;
      hooks.on_step = [&](const ttt::StepLog& l) {
        if (l.opportunity) steps << l.to_json_line() << "\n";
      };
      scenegen::AccessTrace trace;
      rows.push_back(run_cell(cfg, c, cache, cfg.trace ? &trace : nullptr, &hooks));
    }
  } else {
    rows = run_cells(cfg, cells, cache, jobs);
  }
  write_results(rows, cfg, "ttt", out);
  return matrix_exit(rows);
}

int cmd_matrix(const std::string& name, const ExperimentConfig& cfg, const fs::path& out, std::size_t jobs) {
  prepare_dir(out, cfg);
  ArtifactCache cache(cfg);
  std::vector<CellSpec> cells;
  if (name == "ablate") cells = ablation_cells(cfg);
  else if (name == "lr-sweep") cells = lr_sweep_cells(cfg);
  else if (name == "freq-sweep") cells = frequency_cells(cfg);
  else cells = fewshot_cells(cfg);
  const auto rows = run_cells(cfg, cells, cache, jobs);
  write_results(rows, cfg, name, out);
  for (const auto& s : summarize(rows))
    std::cout << s.method << " a=" << format_double(s.alpha_init) << " f=" << s.frequency
              << (s.budget_limited ? " b=" + std::to_string(s.budget) : std::string()) << "  mADE6=" << s.ade_k
              << " (+-" << s.ade_k_std << ")  mFDE6=" << s.fde_k << "  MR6=" << s.miss_rate << "\n";
  return matrix_exit(rows);
}

int cmd_audit(const ExperimentConfig& cfg, const fs::path& out, const Audit& a) {
  prepare_dir(out, cfg);
  ArtifactCache cache(cfg);
  nlohmann::ordered_json j;
  j["schema"] = "adaptraj.audit/1";
  j["config_hash"] = config_hash(cfg);
  j["planted"] = a.plant;
  auto& runs = j["runs"] = nlohmann::ordered_json::array();
  bool clean = true;
  for (auto s : cfg.seeds) {
    CellSpec c;
    c.matrix = "audit";
    c.toggles = cfg.toggles;
    c.method = cfg.toggles.label();
    c.seed = s;
    c.alpha_init = cfg.ttt.alpha_init;
    c.frequency = cfg.ttt.update_frequency;
    scenegen::AccessTrace trace;
    CellHooks hooks;
    std::size_t planted = 0;
    if (a.plant > 0) {
      // adversarial: read the label of the current sample before it matures
      hooks.extra = [&](predictor::Predictor&, const scenegen::OnlineSequence& st, std::size_t t) {
        if (planted >= a.plant) return;
        ++planted;
        try {
          (void)st.future(t);
        } catch (const MaturationError&) {
        }
      };
    }
    const auto row = run_cell(cfg, c, cache, &trace, &hooks);
    if (!row.ok) throw TrainingError("audit run failed in " + row.failed_stage + ": " + row.error);
    const auto report = eval::causality_audit(&trace);
    nlohmann::ordered_json r;
    r["seed"] = s;
    r["accesses"] = report.accesses;
    r["violations"] = report.violations.size();
    r["planted"] = planted;
    auto& v = r["first_violations"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < report.violations.size() && i < 10; ++i) {
      const auto& e = report.violations[i];
      v.push_back({{"scene_id", e.scene_id}, {"sample", e.sample}, {"clock", e.clock}});
    }
    runs.push_back(r);
    clean = clean && report.violations.size() == planted;
    std::cout << "seed " << s << ": " << report.accesses << " accesses, " << report.violations.size()
              << " violations (" << planted << " planted)\n";
  }
  write_file(out / "audit.json", j.dump(2) + "\n");
  return clean ? kOk : kRuntime;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "config file (key = value)")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seeds, "seed(s); overrides run.seeds");
  sub->add_option("--out", c.out, "output directory (default $ADAPTRAJ_OUT/<command> or runs/<command>)");
  sub->add_option("--jobs", c.jobs, "worker threads for independent cells")->check(CLI::PositiveNumber);
  sub->add_option("--set", c.overrides, "override a config key: --set ttt.k=2");
  sub->add_option("--log-level", c.log_level, "debug|info|warn|error|quiet");
}

util::LogLevel parse_level(const std::string& s) {
  if (s == "debug") return util::LogLevel::kDebug;
  if (s == "info") return util::LogLevel::kInfo;
  if (s == "warn") return util::LogLevel::kWarn;
  if (s == "error") return util::LogLevel::kError;
  if (s == "quiet") return util::LogLevel::kQuiet;
  throw ConfigError("unknown log level: " + s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adaptraj: online test-time adaptation benchmark for trajectory prediction"};
  app.require_subcommand(1);
  Common common;
  Audit audit;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen", "generate source/target corpora"},
      {"pretrain", "offline pretraining; writes theta_off checkpoints"},
      {"meta", "offline + meta pretraining; writes both checkpoints"},
      {"ttt", "stream the target corpus with the configured toggles"},
      {"ablate", "component ablation matrix"},
      {"lr-sweep", "learning-rate robustness matrix"},
      {"freq-sweep", "update frequency vs throughput"},
      {"fewshot", "limited supervision budgets"},
      {"audit", "causality audit of a traced run"},
      {"keys", "list config keys with defaults"}};
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    if (name != "keys") add_common(sub, common);
    subs[name] = sub;
  }
  subs["audit"]->add_option("--plant", audit.plant, "plant this many premature label reads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kValidation;
  }

  std::string name;
  for (const auto& [n, sub] : subs)
    if (sub->parsed()) name = n;

  if (name == "keys") {
    for (const auto& k : config_keys())
      std::cout << k.name << " = " << k.default_value << "    # " << k.doc << "\n";
    return kOk;
  }

  ExperimentConfig cfg;
  fs::path out;
  try {
    util::set_log_level(parse_level(common.log_level));
    cfg = resolve_config(common);
    out = resolve_out(common, name);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kValidation;
  }

  try {
    if (name == "gen") return cmd_gen(cfg, out);
    if (name == "pretrain") return cmd_pretrain(cfg, out, false);
    if (name == "meta") return cmd_pretrain(cfg, out, true);
    if (name == "ttt") return cmd_ttt(cfg, out, common.jobs);
    if (name == "audit") return cmd_audit(cfg, out, audit);
    return cmd_matrix(name, cfg, out, common.jobs);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
}
