#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "adaptraj/predictor/predictor.hpp"
#include "adaptraj/scenegen/sequence.hpp"

namespace adaptraj::eval {

/// Per-mode errors of one agent.
struct ModeErrors {
  std::vector<double> ade;
  std::vector<double> fde;
};

/// ADE = mean pointwise L2 over the horizon, FDE = L2 at the last point.
std::vector<ModeErrors> displacement_errors(const predictor::Prediction& prediction, const Futures& truth);

struct BestOfK {
  double ade_k = 0.0;
  double fde_k = 0.0;
  bool miss = false;
  double ade_1 = 0.0;
  std::size_t mode = 0;  // argmin ADE among the first K modes
};

/// Mode 0 is the designated primary mode for ADE_1. Miss = min FDE over the
/// first K modes above `miss_threshold`.
BestOfK best_of_k(const ModeErrors& errors, std::size_t k, double miss_threshold);

struct Record {
  int scene_id = 0;
  std::size_t t = 0;
  int actor_id = 0;
  double ade_k = 0.0;
  double fde_k = 0.0;
  double ade_1 = 0.0;
  bool miss = false;
  std::size_t mode = 0;
  std::uint64_t model_checksum = 0;  // 0 unless checksums are recorded
};

class MetricsLedger {
 public:
  void add(const Record& r);
  void merge(const MetricsLedger& other);

  std::size_t size() const { return records_.size(); }
  const std::vector<Record>& records() const { return records_; }

  double mean_ade_k() const;
  double mean_fde_k() const;
  double miss_rate() const;
  double mean_ade_1() const;

  /// Aggregates rebuilt from the records.
  MetricsLedger recomputed() const;

  /// Versioned structured-text metrics file.
  std::string to_json(bool with_records) const;
  void save(const std::filesystem::path& path, bool with_records) const;

 private:
  std::vector<Record> records_;
  double sum_ade_ = 0.0, sum_fde_ = 0.0, sum_ade1_ = 0.0;
  std::size_t misses_ = 0;
};

struct EvalConfig {
  std::size_t k = 6;
  double miss_threshold = 2.0;
  bool ttt_mode = false;        // predict with actor tokens
  bool record_checksums = false;
};

/// Called at each clock tick before the prediction for that tick.
using TttHook = std::function<void(predictor::Predictor&, const scenegen::OnlineSequence&, std::size_t t)>;

/// Online evaluation of one sequence: for each t in [first, last] the clock
/// advances to t, the hook runs, X_t is predicted with the current model,
/// and each prediction is scored once Y_t has matured. Records go into
/// `ledger`; on a hook exception the records scored so far are kept and the
/// exception propagates.
void streaming_eval(predictor::Predictor& model, scenegen::OnlineSequence& stream, const TttHook& hook,
                    const EvalConfig& cfg, MetricsLedger& ledger);

struct AuditReport {
  std::size_t accesses = 0;
  std::vector<scenegen::AccessEvent> violations;

  bool clean() const { return violations.empty(); }
};

/// AuditError when the run had no trace attached.
AuditReport causality_audit(const scenegen::AccessTrace* trace);

}  // namespace adaptraj::eval
