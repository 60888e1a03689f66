#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "adaptraj/harness/config.hpp"
#include "adaptraj/harness/experiment.hpp"
#include "adaptraj/numcore/errors.hpp"

using namespace adaptraj;
using namespace adaptraj::harness;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny() {
  ExperimentConfig c;
  c.source.corpus = {6, 2, 3, 76};
  c.target.corpus = {3, 2, 3, 76};
  c.model.embed_dim = 8;
  c.model.hidden_dim = 12;
  c.offline.epochs = 2;
  c.offline.sample_stride = 4;
  c.meta.epochs = 1;
  c.seeds = {0, 1};
  c.validate();
  return c;
}

CellSpec cell_of(const Toggles& tg, std::uint64_t seed, double alpha = 0.001, std::size_t f = 1) {
  CellSpec c;
  c.toggles = tg;
  c.method = tg.label();
  c.seed = seed;
  c.alpha_init = alpha;
  c.frequency = f;
  return c;
}

std::string read(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// metrics and counts only; the label columns are allowed to differ
std::string metric_part(const ResultRow& r) {
  std::ostringstream os;
  os << format_double(r.ade_k) << ' ' << format_double(r.fde_k) << ' ' << format_double(r.ade_1) << ' '
     << format_double(r.miss_rate) << ' ' << r.records;
  return os.str();
}

std::string config_error(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, EmptyFileGivesDefaults) {
  const auto cfg = parse_config("");
  EXPECT_EQ(dump_config(cfg), dump_config(ExperimentConfig{}));
  EXPECT_EQ(cfg.meta.batch, 4u);
  EXPECT_EQ(cfg.meta.inner_steps, 4u);
  EXPECT_DOUBLE_EQ(cfg.ttt.gamma, 3e-6);
  EXPECT_EQ(cfg.ttt.hypergrad_direction, ttt::HypergradDirection::kUpdate);
  EXPECT_EQ(cfg.ttt.alpha_window, 8u);
  EXPECT_DOUBLE_EQ(cfg.ttt.k, 3.0);
  EXPECT_EQ(cfg.interval(), 12u);
  EXPECT_EQ(cfg.seeds.size(), 10u);
}

TEST(Config, NegativeKNamesKey) {
  const auto msg = config_error("ttt.k = -1\n");
  EXPECT_NE(msg.find("ttt.k"), std::string::npos) << msg;
}

TEST(Config, UnknownKeysAreListed) {
  const auto msg = config_error("foo.bar = 1\nttt.k = 2\nbaz = x\n");
  EXPECT_NE(msg.find("foo.bar"), std::string::npos) << msg;
  EXPECT_NE(msg.find("baz"), std::string::npos) << msg;
}

TEST(Config, TypeErrorsNameKey) {
  EXPECT_NE(config_error("ttt.k = abc").find("ttt.k"), std::string::npos);
  EXPECT_NE(config_error("meta.batch = 2.5").find("meta.batch"), std::string::npos);
  EXPECT_NE(config_error("toggles.mp = maybe").find("toggles.mp"), std::string::npos);
  EXPECT_NE(config_error("ttt.optimizer = lbfgs").find("optimizer"), std::string::npos);
  EXPECT_FALSE(config_error("no equals sign").empty());
}

TEST(Config, CommentsAndWhitespace) {
  const auto cfg = parse_config("# comment\n\n  ttt.k   =  2.5   # trailing\ntoggles.hsd=true\n");
  EXPECT_DOUBLE_EQ(cfg.ttt.k, 2.5);
  EXPECT_TRUE(cfg.toggles.hsd);
}

TEST(Config, ValidationNamesFieldPath) {
  EXPECT_NE(config_error("eval.k = 9").find("eval.k"), std::string::npos);
  EXPECT_NE(config_error("ttt.interval = 5").find("ttt.interval"), std::string::npos);
  EXPECT_NE(config_error("run.seeds = ").find("run.seeds"), std::string::npos);
  EXPECT_NE(config_error("target.max_agents = 2\ntarget.min_agents = 3").find("target.max_agents"),
            std::string::npos);
  // short horizon needs longer scenes than the defaults
  EXPECT_NE(config_error("horizon.preset = short").find(".length"), std::string::npos);
  EXPECT_NE(config_error("horizon.preset = medium").find("horizon.preset"), std::string::npos);
}

TEST(Config, ShortHorizonPreset) {
  const auto cfg = parse_config("horizon.preset = short\nsource.length = 200\ntarget.length = 200\n");
  const auto l = cfg.layout();
  EXPECT_EQ(l.past_steps, 10u);
  EXPECT_EQ(l.future_steps, 30u);
  EXPECT_DOUBLE_EQ(l.dt, 0.1);
  EXPECT_EQ(cfg.interval(), 30u);
  EXPECT_EQ(cfg.model_config().future_steps, 30u);
  EXPECT_EQ(cfg.ttt_config(cfg.toggles, 0.01, 2).interval, 30u);
  EXPECT_EQ(cfg.meta_config(0.01).interval, 30u);
}

TEST(Config, MetaAlphaFollowsTtt) {
  auto cfg = parse_config("");
  EXPECT_DOUBLE_EQ(cfg.meta_config(0.01).alpha_in, 0.01);
  cfg = parse_config("meta.alpha_in_follows_ttt = false\nmeta.alpha_in = 0.005\n");
  EXPECT_DOUBLE_EQ(cfg.meta_config(0.01).alpha_in, 0.005);
}

TEST(Config, RoundTripIsExact) {
  auto cfg = ExperimentConfig{};
  set_config_value(cfg, "ttt.alpha_init", "0.0123456789012345");
  set_config_value(cfg, "target.speed_mean", "11.1");
  set_config_value(cfg, "run.seeds", "3, 5,7");
  set_config_value(cfg, "sweep.alphas", "0.02,0.002");
  set_config_value(cfg, "ttt.error_signal", "total");
  set_config_value(cfg, "toggles.dlo", "on");
  const auto text = dump_config(cfg);
  const auto back = parse_config(text);
  EXPECT_EQ(dump_config(back), text);
  EXPECT_EQ(config_hash(back), config_hash(cfg));
  EXPECT_EQ(back.seeds, (std::vector<std::uint64_t>{3, 5, 7}));
  EXPECT_DOUBLE_EQ(back.ttt.alpha_init, 0.0123456789012345);
}

TEST(Config, KeyTableIsComplete) {
  std::set<std::string> names;
  for (const auto& k : config_keys()) {
    EXPECT_TRUE(names.insert(k.name).second) << "duplicate " << k.name;
    EXPECT_FALSE(k.doc.empty()) << k.name;
    EXPECT_EQ(get_config_value(ExperimentConfig{}, k.name), k.default_value);
  }
  EXPECT_THROW(get_config_value(ExperimentConfig{}, "nope"), ConfigError);
}

TEST(Config, HashChangesIffAnyFieldChanges) {
  const ExperimentConfig base;
  const auto h0 = config_hash(base);
  EXPECT_EQ(config_hash(ExperimentConfig{}), h0);
  std::set<std::string> seen{h0};
  for (const auto& k : config_keys()) {
    ExperimentConfig c;
    const auto v = k.default_value;
    std::string nv;
    if (v == "true" || v == "false") nv = v == "true" ? "false" : "true";
    else if (k.name == "horizon.preset") nv = "short";
    else if (k.name.find("optimizer") != std::string::npos) nv = v == "sgd" ? "adamw" : "sgd";
    else if (k.name == "ttt.error_signal") nv = "total";
    else if (k.name == "ttt.hypergrad_direction") nv = v == "update" ? "gradient" : "update";
    else if (v.find(',') != std::string::npos || k.name == "run.seeds") nv = v + ",7";
    else nv = format_double(std::stod(v) + 1.0);
    set_config_value(c, k.name, nv);
    const auto h = config_hash(c);
    EXPECT_NE(h, h0) << k.name;
    EXPECT_TRUE(seen.insert(h).second) << k.name;
    set_config_value(c, k.name, v);
    EXPECT_EQ(config_hash(c), h0) << k.name;
  }
  EXPECT_EQ(h0.size(), 16u);
}

TEST(Config, LoadMissingFileFails) { EXPECT_THROW(load_config("/nonexistent/x.cfg"), ConfigError); }

TEST(Toggles, Labels) {
  EXPECT_EQ((Toggles{false, false, false, false}).label(), "no-adapt");
  EXPECT_EQ((Toggles{true, false, false, false}).label(), "fixed");
  EXPECT_EQ((Toggles{true, true, true, true}).label(), "MP+DLO+HSD");
  EXPECT_EQ((Toggles{true, false, true, true}).label(), "DLO+HSD");
}

TEST(Matrix, Shapes) {
  auto cfg = tiny();
  EXPECT_EQ(ablation_cells(cfg).size(), 7u * 2);
  EXPECT_EQ(lr_sweep_cells(cfg).size(), 9u * 2);
  EXPECT_EQ(frequency_cells(cfg).size(), 2u * 4 * 2);
  EXPECT_EQ(fewshot_cells(cfg).size(), 2u * 3 * 2);
  std::set<std::string> ids;
  for (const auto& c : lr_sweep_cells(cfg)) EXPECT_TRUE(ids.insert(c.id()).second) << c.id();
}

TEST(Results, GoldenHeader) {
  EXPECT_EQ(results_csv_header(),
            "cell_id,matrix,method,ttt,mp,dlo,hsd,seed,alpha_init,frequency,budget,budget_exhausted,"
            "ade_6,fde_6,ade_1,mr_6,records,eval_steps,regular_updates,hard_updates,hsd_checks,supervision_used,"
            "status,failed_stage");
  EXPECT_EQ(summary_csv_header(),
            "matrix,method,alpha_init,frequency,budget,seeds,failed,ade_6,ade_6_std,fde_6,fde_6_std,ade_1,ade_1_std,"
            "mr_6,mr_6_std,regular_updates,hard_updates");
}

TEST(Results, SummaryMeanIsRowMean) {
  std::vector<ResultRow> rows(3);
  const double ades[] = {1.0, 2.0, 4.0};
  for (int i = 0; i < 3; ++i) {
    rows[i].matrix = "ablate";
    rows[i].method = "fixed";
    rows[i].seed = static_cast<std::uint64_t>(i);
    rows[i].ade_k = ades[i];
  }
  rows.push_back(rows[0]);
  rows.back().method = "MP";
  rows.push_back(rows[0]);
  rows.back().ok = false;
  const auto s = summarize(rows);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].method, "fixed");
  EXPECT_EQ(s[0].seeds, 3u);
  EXPECT_EQ(s[0].failed, 1u);
  EXPECT_DOUBLE_EQ(s[0].ade_k, 7.0 / 3.0);
  EXPECT_NEAR(s[0].ade_k_std, std::sqrt(((1 - 7. / 3) * (1 - 7. / 3) + (2 - 7. / 3) * (2 - 7. / 3) +
                                         (4 - 7. / 3) * (4 - 7. / 3)) / 2.0), 1e-12);
  EXPECT_EQ(s[1].seeds, 1u);
}

class HarnessRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    cfg_ = new ExperimentConfig(tiny());
    cache_ = new ArtifactCache(*cfg_);
  }
  static void TearDownTestSuite() {
    delete cache_;
    delete cfg_;
  }
  static ExperimentConfig* cfg_;
  static ArtifactCache* cache_;
};
ExperimentConfig* HarnessRun::cfg_ = nullptr;
ArtifactCache* HarnessRun::cache_ = nullptr;

TEST_F(HarnessRun, CellIsDeterministic) {
  const auto a = run_cell(*cfg_, cell_of({true, true, true, true}, 0), *cache_);
  ArtifactCache fresh(*cfg_);
  const auto b = run_cell(*cfg_, cell_of({true, true, true, true}, 0), fresh);
  ASSERT_TRUE(a.ok) << a.error;
  EXPECT_EQ(to_csv_line(a), to_csv_line(b));
  EXPECT_EQ(a.final_alpha, b.final_alpha);
  EXPECT_GT(a.records, 0u);
  EXPECT_GT(a.fps, 0.0);
}

TEST_F(HarnessRun, SeedsDiffer) {
  const auto a = run_cell(*cfg_, cell_of({true, false, false, false}, 0), *cache_);
  const auto b = run_cell(*cfg_, cell_of({true, false, false, false}, 1), *cache_);
  EXPECT_NE(a.ade_k, b.ade_k);
}

TEST_F(HarnessRun, ToggleParityGammaZero) {
  auto cfg = *cfg_;
  cfg.ttt.gamma = 0.0;
  ArtifactCache cache(cfg);
  const auto fixed = run_cell(cfg, cell_of({true, false, false, false}, 0), cache);
  const auto dlo = run_cell(cfg, cell_of({true, false, true, false}, 0), cache);
  EXPECT_EQ(metric_part(fixed), metric_part(dlo));
}

TEST_F(HarnessRun, NoAdaptHasNoUpdates) {
  const auto r = run_cell(*cfg_, cell_of({false, false, false, false}, 0), *cache_);
  EXPECT_EQ(r.regular_updates, 0u);
  EXPECT_EQ(r.hard_updates, 0u);
  const auto t = run_cell(*cfg_, cell_of({true, false, false, false}, 0), *cache_);
  EXPECT_GT(t.regular_updates, 0u);
  EXPECT_NE(metric_part(r), metric_part(t));
}

TEST_F(HarnessRun, BudgetZeroEqualsNoAdapt) {
  const auto na = run_cell(*cfg_, cell_of({false, false, false, false}, 1), *cache_);
  auto c = cell_of({true, true, true, true}, 1);
  c.budget_limited = true;
  c.budget = 0;
  const auto b0 = run_cell(*cfg_, c, *cache_);
  // MP changes the starting point, so compare against no-adapt from the same one
  auto nm = cell_of({false, true, false, false}, 1);
  const auto na_mp = run_cell(*cfg_, nm, *cache_);
  EXPECT_EQ(metric_part(b0), metric_part(na_mp));
  auto f0 = cell_of({true, false, false, false}, 1);
  f0.budget_limited = true;
  const auto fb0 = run_cell(*cfg_, f0, *cache_);
  EXPECT_EQ(metric_part(fb0), metric_part(na));
  EXPECT_EQ(fb0.supervision_used, 0u);
}

TEST_F(HarnessRun, BudgetStopsAdaptation) {
  auto c = cell_of({true, false, false, false}, 0);
  const auto all = run_cell(*cfg_, c, *cache_);
  c.budget_limited = true;
  c.budget = 4;
  const auto some = run_cell(*cfg_, c, *cache_);
  EXPECT_TRUE(some.budget_exhausted);
  EXPECT_GE(some.supervision_used, 4u);
  EXPECT_LT(some.regular_updates, all.regular_updates);
  EXPECT_EQ(some.records, all.records);  // evaluation continues over the full stream
  c.budget = 100000;
  const auto big = run_cell(*cfg_, c, *cache_);
  EXPECT_FALSE(big.budget_exhausted);
  EXPECT_EQ(metric_part(big), metric_part(all));
}

TEST_F(HarnessRun, HardnessChecksConsumeBudget) {
  // f = 2: the check reads labels at every opportunity, updates at every other
  const auto fixed = run_cell(*cfg_, cell_of({true, false, false, false}, 0, 0.001, 2), *cache_);
  const auto hsd = run_cell(*cfg_, cell_of({true, false, false, true}, 0, 0.001, 2), *cache_);
  const auto f1 = run_cell(*cfg_, cell_of({true, false, false, false}, 0, 0.001, 1), *cache_);
  EXPECT_LT(fixed.supervision_used, hsd.supervision_used);
  EXPECT_EQ(hsd.supervision_used, f1.supervision_used);
}

TEST_F(HarnessRun, FrequencyHalvesUpdates) {
  const auto f1 = run_cell(*cfg_, cell_of({true, false, false, false}, 0, 0.001, 1), *cache_);
  const auto f2 = run_cell(*cfg_, cell_of({true, false, false, false}, 0, 0.001, 2), *cache_);
  // the opportunity count runs over the whole stream, so only the last one rounds
  EXPECT_EQ(f2.regular_updates, (f1.regular_updates + 1) / 2);
  EXPECT_LT(f2.regular_updates, f1.regular_updates);
}

TEST_F(HarnessRun, ParallelEqualsSerial) {
  auto cells = ablation_cells(*cfg_);
  const auto serial = run_cells(*cfg_, cells, *cache_, 1);
  ArtifactCache fresh(*cfg_);
  const auto parallel = run_cells(*cfg_, cells, fresh, 3);
  ASSERT_EQ(serial.size(), parallel.size());
  for (std::size_t i = 0; i < serial.size(); ++i) EXPECT_EQ(to_csv_line(serial[i]), to_csv_line(parallel[i]));
}

TEST_F(HarnessRun, FailedCellIsIsolated) {
  CellHooks boom;
  boom.extra = [](predictor::Predictor&, const scenegen::OnlineSequence&, std::size_t t) {
    if (t > 20) throw NumericError("planted failure");
  };
  const auto bad = run_cell(*cfg_, cell_of({true, false, false, false}, 0), *cache_, nullptr, &boom);
  EXPECT_FALSE(bad.ok);
  EXPECT_EQ(bad.failed_stage, "eval");
  EXPECT_NE(bad.error.find("planted"), std::string::npos);
  const auto good = run_cell(*cfg_, cell_of({true, false, false, false}, 0), *cache_);
  ArtifactCache fresh(*cfg_);
  const auto ref = run_cell(*cfg_, cell_of({true, false, false, false}, 0), fresh);
  EXPECT_EQ(to_csv_line(good), to_csv_line(ref));
}

TEST_F(HarnessRun, TracedRunIsClean) {
  scenegen::AccessTrace trace;
  const auto r = run_cell(*cfg_, cell_of({true, true, true, true}, 0), *cache_, &trace);
  ASSERT_TRUE(r.ok) << r.error;
  EXPECT_GT(trace.accesses(), 0u);
  EXPECT_EQ(trace.violation_count(), 0u);
  EXPECT_EQ(r.violations, 0u);
}

TEST_F(HarnessRun, WriteResultsIsByteStable) {
  const auto rows = run_cells(*cfg_, fewshot_cells(*cfg_), *cache_, 1);
  const auto dir = fs::temp_directory_path() / "adaptraj_test_results";
  fs::remove_all(dir);
  write_results(rows, *cfg_, "fewshot", dir / "a");
  write_results(rows, *cfg_, "fewshot", dir / "b");
  for (const char* f : {"results.csv", "summary.csv", "summary.json"}) {
    const auto a = read(dir / "a" / f);
    EXPECT_FALSE(a.empty()) << f;
    EXPECT_EQ(a, read(dir / "b" / f)) << f;
  }
  const auto csv = read(dir / "a" / "results.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), results_csv_header());
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), rows.size() + 1);
  EXPECT_NE(read(dir / "a" / "summary.json").find(config_hash(*cfg_)), std::string::npos);
  EXPECT_THROW(write_results(rows, *cfg_, "x", "/proc/forbidden/dir"), PersistenceError);
  fs::remove_all(dir);
}
