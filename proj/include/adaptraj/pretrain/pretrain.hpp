#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "adaptraj/numcore/optim.hpp"
#include "adaptraj/numcore/rng.hpp"
#include "adaptraj/predictor/predictor.hpp"
#include "adaptraj/scenegen/scene.hpp"
#include "adaptraj/scenegen/sequence.hpp"

namespace adaptraj::pretrain {

struct OfflineConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  double weight_decay = 1e-3;
  std::size_t sample_stride = 1;  // use every n-th timestep of each scene
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double beta = 0.0;          // meta only
  std::size_t failed_tasks = 0;  // meta only
  std::size_t skipped_steps = 0;

  std::string to_json_line(const char* stage) const;
};

struct OfflineReport {
  double initial_val_loss = 0.0;
  double final_val_loss = 0.0;
  std::vector<EpochLog> epochs;
};

/// Joint L_reg + L_recon minimisation over source samples with AdamW. Runs
/// with actor tokens off. On a non-finite loss the parameters are restored
/// to the last good state and TrainingError is thrown.
OfflineReport offline_pretrain(predictor::Predictor& model, const std::vector<scenegen::Scene>& scenes,
                               const OfflineConfig& cfg);

struct MetaConfig {
  std::size_t batch = 4;        // B
  std::size_t inner_steps = 4;  // K_inner
  double alpha_in = 0.001;
  double beta_init = 5e-4;
  double beta_final = 1e-6;
  std::size_t epochs = 8;
  std::size_t interval = 12;    // tau
  numcore::OptimizerKind inner_optimizer = numcore::OptimizerKind::kSgd;
  numcore::OptimizerKind outer_optimizer = numcore::OptimizerKind::kAdamW;
  double weight_decay = 1e-3;   // outer AdamW
  bool inner_tokens = true;     // ttt_mode during the inner loop
  std::uint64_t seed = 0;

  /// `allow_frozen_inner` also accepts alpha_in == 0 (inner loop is the
  /// identity; meta training collapses to plain training).
  void validate(bool allow_frozen_inner = false) const;
};

/// Task order used in meta epoch `epoch` (a permutation of 0..n-1).
std::vector<std::size_t> meta_epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n);

/// beta for outer step s of `total` (cosine from beta_init to beta_final).
double cosine_beta(const MetaConfig& cfg, std::size_t s, std::size_t total);

/// Mask stream for inner step j (j == inner_steps: the evaluation sample).
numcore::RngStream meta_mask_stream(std::uint64_t seed, std::size_t epoch, std::size_t scene_index, std::size_t j);

struct InnerResult {
  predictor::ModelParams adapted;
  double final_loss = 0.0;
  numcore::LayerVectors final_grads;  // gradient of the evaluation loss at the adapted params
  bool failed = false;
};

/// K plain-GD steps (or the configured inner optimizer) on the task's
/// scheduled supervision samples, then L_mae and its gradient on the
/// evaluation sample. `model` is not modified. `inner_steps` may be 0.
InnerResult inner_adapt(const predictor::Predictor& model, const scenegen::TttTask& task, double alpha_in,
                        std::size_t inner_steps, const MetaConfig& cfg, std::size_t epoch);

struct OuterStepResult {
  std::size_t used_tasks = 0;
  double mean_loss = 0.0;
  bool skipped = false;
};

/// First-order outer update: sum of evaluation-loss gradients taken at each
/// task's adapted parameters, applied at the meta parameters with rate beta.
/// Gradients of the actor-token layer are dropped.
OuterStepResult meta_outer_step(predictor::Predictor& model, const std::vector<const scenegen::TttTask*>& batch,
                                const MetaConfig& cfg, double beta, numcore::Optimizer& outer, std::size_t epoch);

struct MetaReport {
  std::vector<EpochLog> epochs;  // entry 0: adapted loss of the initial parameters
  std::size_t outer_steps = 0;
};

MetaReport meta_pretrain(predictor::Predictor& model, const scenegen::TaskSet& tasks, const MetaConfig& cfg);

/// Mean adapted evaluation loss over tasks (no meta update).
double mean_adapted_loss(const predictor::Predictor& model, const std::vector<scenegen::TttTask>& tasks,
                         const MetaConfig& cfg, std::size_t epoch);

}  // namespace adaptraj::pretrain
