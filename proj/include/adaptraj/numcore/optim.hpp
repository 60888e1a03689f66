#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "adaptraj/numcore/tensor.hpp"

namespace adaptraj::numcore {

enum class OptimizerKind { kSgd, kAdamW };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(const std::string& text);

/// theta -= lr[layer] * grad, using the grads currently stored in `params`.
/// Returns false (and leaves params untouched) if any gradient is non-finite.
bool sgd_step(ParameterSet& params, std::span<const double> layer_lr);

struct AdamWSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Adam with decoupled weight decay and bias correction. The per-layer rate
/// scales both the moment step and the decay term.
class AdamW {
 public:
  explicit AdamW(AdamWSettings settings = {}) : settings_(settings) {}

  /// Same contract as sgd_step.
  bool step(ParameterSet& params, std::span<const double> layer_lr);
  void reset();

  std::size_t step_count() const { return steps_; }
  const AdamWSettings& settings() const { return settings_; }
  AdamWSettings& settings() { return settings_; }

 private:
  AdamWSettings settings_;
  std::size_t steps_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

/// Either optimizer behind one interface; used by training loops and TTT.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, AdamWSettings settings) : kind_(kind), adamw_(settings) {}

  bool step(ParameterSet& params, std::span<const double> layer_lr);
  void reset() { adamw_.reset(); }
  OptimizerKind kind() const { return kind_; }

 private:
  OptimizerKind kind_;
  AdamW adamw_;
};

bool grads_finite(const ParameterSet& params);

}  // namespace adaptraj::numcore
