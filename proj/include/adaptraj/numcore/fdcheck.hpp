#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "adaptraj/numcore/tensor.hpp"

namespace adaptraj::numcore {

struct FdOptions {
  double step = 1e-6;
  double tolerance = 1e-5;
  /// Coordinates probed per tensor; 0 probes every coordinate.
  std::size_t coords_per_tensor = 0;
  /// Random unit directions probed per layer (directional derivative).
  std::size_t directions_per_layer = 1;
  std::uint64_t seed = 0;
  /// Denominator floor so all-zero layers compare absolutely.
  double abs_floor = 1e-8;
};

struct LayerFdResult {
  std::string layer;
  double max_rel_error = 0.0;
  std::size_t probes = 0;
  bool flagged = false;
};

struct FdReport {
  std::vector<LayerFdResult> layers;
  double max_rel_error = 0.0;

  bool passed() const;
  std::vector<std::string> flagged_layers() const;
};

using LossFn = std::function<double(const ParameterSet&)>;

/// Compares an analytic per-layer gradient to central finite differences of
/// `loss`. Relative error of a layer is the largest probe discrepancy scaled
/// by the layer's gradient magnitude. `params` is perturbed in place and
/// restored bit-exactly before returning. Throws AuditError if `loss` is not
/// deterministic.
FdReport finite_diff_check(const LossFn& loss, ParameterSet& params,
                           const LayerVectors& analytic_grad, const FdOptions& options = {});

}  // namespace adaptraj::numcore
