#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "adaptraj/eval/metrics.hpp"
#include "adaptraj/harness/config.hpp"
#include "adaptraj/numcore/tensor.hpp"

namespace adaptraj::harness {

/// One point of an experiment matrix.
struct CellSpec {
  std::string matrix = "ttt";  // ablate | lr-sweep | freq-sweep | fewshot | ttt
  std::string method;          // row label; defaults to toggles.label()
  Toggles toggles;
  std::uint64_t seed = 0;
  double alpha_init = 0.001;
  std::size_t frequency = 1;
  std::size_t budget = 0;      // agent-level supervision samples
  bool budget_limited = false; // false: unlimited

  std::string id() const;
};

struct ResultRow {
  std::string cell_id;
  std::string matrix;
  std::string method;
  Toggles toggles;
  std::uint64_t seed = 0;
  double alpha_init = 0.0;
  std::size_t frequency = 1;
  std::size_t budget = 0;
  bool budget_limited = false;
  bool budget_exhausted = false;

  double ade_k = 0.0, fde_k = 0.0, ade_1 = 0.0, miss_rate = 0.0;
  std::size_t records = 0;
  std::size_t eval_steps = 0;
  std::size_t regular_updates = 0, hard_updates = 0, hsd_checks = 0;
  std::size_t supervision_used = 0;
  std::vector<double> final_alpha;
  std::size_t violations = 0;

  bool ok = true;
  std::string failed_stage;
  std::string error;

  // host-dependent, kept out of results.csv
  double eval_seconds = 0.0;
  double eval_cpu_seconds = 0.0;  // evaluating thread only
  double fps = 0.0;               // from wall time
};

/// Hooks for tests: observe the engine's step logs or plant extra accesses.
struct CellHooks {
  std::function<void(const ttt::StepLog&)> on_step;
  eval::TttHook extra;  // runs after the TTT hook at each tick
};

/// Source/target corpora and trained checkpoints for one seed, shared by
/// every cell with that seed. Thread-safe; each artifact is built once.
class SeedArtifacts {
 public:
  SeedArtifacts(const ExperimentConfig& cfg, std::uint64_t seed);

  const std::vector<scenegen::Scene>& source();
  const std::vector<scenegen::Scene>& target();
  /// Offline-pretrained parameters.
  const numcore::ParameterSet& offline();
  const pretrain::OfflineReport& offline_report();
  /// Meta-pretrained parameters for the given inner rate.
  const numcore::ParameterSet& meta(double alpha_in);
  const pretrain::MetaReport& meta_report(double alpha_in);

  std::uint64_t seed() const { return seed_; }

 private:
  const ExperimentConfig& cfg_;
  std::uint64_t seed_;
  std::mutex mu_;
  std::optional<std::vector<scenegen::Scene>> source_, target_;
  std::optional<numcore::ParameterSet> offline_;
  pretrain::OfflineReport offline_report_;
  std::map<double, std::pair<numcore::ParameterSet, pretrain::MetaReport>> meta_;
};

class ArtifactCache {
 public:
  explicit ArtifactCache(const ExperimentConfig& cfg) : cfg_(cfg) {}
  SeedArtifacts& get(std::uint64_t seed);

 private:
  const ExperimentConfig& cfg_;
  std::mutex mu_;
  std::map<std::uint64_t, std::unique_ptr<SeedArtifacts>> seeds_;
};

// Per-stage stream tags under the seed's root stream.
enum class Stage : std::uint64_t { kSource = 1, kTarget = 2, kInit = 3, kOffline = 4, kTasks = 5, kMeta = 6, kTtt = 7 };
std::uint64_t stage_seed(std::uint64_t seed, Stage stage);

/// Streams every target scene in order through one model; TTT state carries
/// across scenes. `trace` (optional) records every ground-truth access.
ResultRow run_cell(const ExperimentConfig& cfg, const CellSpec& cell, ArtifactCache& cache,
                   scenegen::AccessTrace* trace = nullptr, const CellHooks* hooks = nullptr);

/// Runs `cells` on `jobs` workers; rows come back in cell order.
std::vector<ResultRow> run_cells(const ExperimentConfig& cfg, const std::vector<CellSpec>& cells, ArtifactCache& cache,
                                 std::size_t jobs);

// Matrices.
std::vector<CellSpec> ablation_cells(const ExperimentConfig& cfg);
std::vector<CellSpec> lr_sweep_cells(const ExperimentConfig& cfg);
std::vector<CellSpec> frequency_cells(const ExperimentConfig& cfg);
std::vector<CellSpec> fewshot_cells(const ExperimentConfig& cfg);

/// Seed-averaged row per (matrix, method, alpha, f, budget), in first-seen order.
struct SummaryRow {
  std::string matrix, method;
  double alpha_init = 0.0;
  std::size_t frequency = 1;
  std::size_t budget = 0;
  bool budget_limited = false;
  std::size_t seeds = 0, failed = 0;
  double ade_k = 0.0, ade_k_std = 0.0;
  double fde_k = 0.0, fde_k_std = 0.0;
  double ade_1 = 0.0, ade_1_std = 0.0;
  double miss_rate = 0.0, miss_rate_std = 0.0;
  double regular_updates = 0.0, hard_updates = 0.0;
  double fps = 0.0;
};

std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows);

std::string results_csv_header();
std::string to_csv_line(const ResultRow& row);
std::string summary_csv_header();
std::string to_csv_line(const SummaryRow& row);

std::string version_string();

/// results.csv, summary.csv, summary.json (deterministic) and timing.csv.
void write_results(const std::vector<ResultRow>& rows, const ExperimentConfig& cfg, const std::string& command,
                   const std::filesystem::path& dir);

}  // namespace adaptraj::harness
