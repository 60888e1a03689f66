#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adaptraj/numcore/optim.hpp"
#include "adaptraj/numcore/rng.hpp"
#include "adaptraj/numcore/tensor.hpp"
#include "adaptraj/predictor/predictor.hpp"
#include "adaptraj/scenegen/sequence.hpp"

namespace adaptraj::ttt {

/// Which loss drives the hard-sample test.
enum class ErrorSignal { kRegression, kTotal };

std::string to_string(ErrorSignal s);
ErrorSignal parse_error_signal(const std::string& text);

enum class HypergradDirection { kGradient, kUpdate };
std::string to_string(HypergradDirection d);
HypergradDirection parse_hypergrad_direction(const std::string& text);

struct TttConfig {
  std::size_t interval = 12;          // tau
  std::size_t update_frequency = 1;   // f: regular update every f-th opportunity
  double alpha_init = 0.001;
  double alpha_min = 1e-6;
  double alpha_max = 1.0;
  double gamma = 1e-4;                // learning rate of alpha
  std::size_t alpha_window = 8;       // tau_alpha
  bool strict_alpha_interval = false; // update alpha only every tau_alpha steps
  // What d(theta)/d(alpha) is taken to be: the raw gradient of each past step
  // or the step the optimizer actually took, divided by alpha. Identical for SGD.
  HypergradDirection hypergrad_direction = HypergradDirection::kGradient;
  double k = 3.0;
  double stat_decay = 0.05;           // rho
  std::size_t stat_warmup = 10;
  ErrorSignal error_signal = ErrorSignal::kRegression;
  numcore::OptimizerKind optimizer = numcore::OptimizerKind::kAdamW;
  numcore::AdamWSettings adamw{0.9, 0.999, 1e-8, 1e-3};
  bool dlo = true;
  bool hsd = true;
  bool reset_tokens_per_scene = true;
  bool use_tokens = true;             // ttt_mode for forward passes
  std::uint64_t mask_seed = 0;

  bool dlo_active() const { return dlo && gamma > 0.0; }
  /// `future_steps` is t_f: supervision labels must have matured by t.
  void validate(std::size_t future_steps) const;
};

/// Exponential-moving mean/std with exact averaging for the first `warmup`
/// samples.
struct RunningStats {
  double mean = 0.0;
  double var = 0.0;
  std::size_t count = 0;

  double stddev() const;
};

void update_running_stats(RunningStats& stats, double e, double decay, std::size_t warmup);
/// e > m + k*sigma using the current (pre-fold) statistics; false during warm-up.
bool is_hard_sample(const RunningStats& stats, double e, double k, std::size_t warmup);

struct TttState {
  std::size_t steps = 0;  // p: regular update steps taken
  std::vector<double> alpha;
  std::vector<std::deque<std::vector<double>>> grad_history;  // per layer
  std::vector<std::vector<double>> last_grad;
  RunningStats stats;
  numcore::Optimizer optimizer{numcore::OptimizerKind::kAdamW, {}};
  int scene_id = -1;
  std::size_t opportunities = 0;  // over the whole stream; drives f

  // counters
  std::size_t regular_updates = 0;
  std::size_t hard_updates = 0;
  std::size_t hsd_checks = 0;
  std::size_t skipped_updates = 0;
  std::size_t alpha_clamps = 0;
  std::size_t ignored_errors = 0;

  TttState() = default;
  TttState(const TttConfig& cfg, std::size_t layers);
};

enum class EventKind { kRegular, kHardExtra };

struct SupervisionEvent {
  std::size_t t = 0;
  std::size_t sample = 0;  // t - tau
  Observation x;
  Futures y;
  EventKind kind = EventKind::kRegular;
};

/// t is an update opportunity: a multiple of tau with t >= tau + t_h and a
/// supervised sample inside the stream.
bool is_opportunity(std::size_t t, std::size_t interval, std::size_t past_steps, std::size_t last_sample);
/// Index of the opportunity at t among opportunities of the stream.
std::size_t opportunity_index(std::size_t t, std::size_t interval, std::size_t past_steps);

/// Regular event at t, or none. Reads the supervision pair through the
/// stream's gated accessors. `offset` is the number of opportunities seen in
/// earlier sequences of the same stream (the f counter does not reset at
/// scene boundaries).
std::optional<SupervisionEvent> schedule_supervision(const scenegen::OnlineSequence& stream, std::size_t t,
                                                     const TttConfig& cfg, std::size_t offset = 0);

/// Closed-form regular update count for clocks t_h .. last_clock of a single
/// sequence starting at opportunity 0.
std::size_t count_regular_updates(std::size_t interval, std::size_t frequency, std::size_t past_steps,
                                  std::size_t last_clock);

/// Plain gradient step with per-layer rates on the grads held in `params`.
bool sgd_step(numcore::ParameterSet& params, std::span<const double> alpha);
/// AdamW step with per-layer rates; `opt` holds the moments.
bool adaptive_step(numcore::ParameterSet& params, std::span<const double> alpha, numcore::AdamW& opt);

/// dL/dalpha per layer for plain GD: -<g_current, mean(history)>. Layers with
/// empty history give 0.
std::vector<double> hypergradient(const TttState& state, const numcore::LayerVectors& grads);

/// alpha += gamma * <g_current, mean(history)> per layer, clamped; then the
/// current gradient enters the history window. Empty history: no alpha change.
/// `directions` (optional) replaces `grads` as the vector pushed into the
/// history, i.e. the per-layer step direction the optimizer took.
void hypergrad_update_alpha(TttState& state, const numcore::LayerVectors& grads, const TttConfig& cfg,
                            const numcore::LayerVectors* directions = nullptr);

struct StepLog {
  static constexpr const char* kSchema = "adaptraj.steplog/1";

  int scene_id = 0;
  std::size_t t = 0;
  bool opportunity = false;
  bool regular = false;
  bool hard = false;
  bool skipped = false;
  double reg = 0.0, recon = 0.0, total = 0.0;
  double e = std::numeric_limits<double>::quiet_NaN();
  double m = 0.0, sigma = 0.0;  // statistics used by the hardness test
  std::vector<double> alpha;        // after the regular step's alpha update
  std::vector<double> alpha_after;  // after the hard-extra step (if any)
  std::size_t history_size = 0;
  std::int64_t wall_us = 0;

  std::string to_json_line() const;
};

class TttEngine {
 public:
  TttEngine(TttConfig cfg, const predictor::Predictor& model);

  const TttConfig& config() const { return cfg_; }
  const TttState& state() const { return state_; }
  TttState& state() { return state_; }

  /// Scene boundary: optimizer moments and (optionally) actor tokens reset;
  /// weights, alpha, error statistics and the opportunity count carry over.
  void begin_scene(predictor::Predictor& model, int scene_id);

  /// One clock tick: regular update (if scheduled) then HSD (at every
  /// opportunity). Requires stream.clock() == t.
  StepLog step(predictor::Predictor& model, const scenegen::OnlineSequence& stream, std::size_t t);

 private:
  bool apply_update(predictor::Predictor& model);

  TttConfig cfg_;
  TttState state_;
};

/// Reconstruction-mask stream for the update at (scene, t, kind). Depends
/// only on these, so runs that differ in toggles see the same masks.
numcore::RngStream ttt_mask_stream(std::uint64_t mask_seed, int scene_id, std::size_t t, EventKind kind);

/// Free-function form of TttEngine::step.
StepLog ttt_step(predictor::Predictor& model, TttEngine& engine, const scenegen::OnlineSequence& stream,
                 std::size_t t);

}  // namespace adaptraj::ttt
