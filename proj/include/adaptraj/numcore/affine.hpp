#pragma once

#include <span>
#include <vector>

#include "adaptraj/numcore/tensor.hpp"

namespace adaptraj::numcore {

/// Input saved by affine_forward for the matching backward. A cache is
/// consumed by exactly one backward call.
struct AffineCache {
  std::vector<double> input;
  std::size_t out_dim = 0;
  bool valid = false;
};

/// y = W x + b with W stored row-major as [out, in].
std::vector<double> affine_forward(std::span<const double> input, const ParamTensor& weights,
                                   const ParamTensor& bias, AffineCache* cache = nullptr);

/// Accumulates dL/dW and dL/db into the tensors' grad buffers and returns
/// dL/dx. Throws UsageError on a missing or already-consumed cache.
std::vector<double> affine_backward(std::span<const double> output_grad, AffineCache& cache,
                                    ParamTensor& weights, ParamTensor& bias);

}  // namespace adaptraj::numcore
