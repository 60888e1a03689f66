#include "adaptraj/numcore/affine.hpp"

#include <cmath>
#include <string>

#include "adaptraj/numcore/errors.hpp"

namespace adaptraj::numcore {

namespace {

void check_shapes(const ParamTensor& w, const ParamTensor& b) {
  if (w.shape.size() != 2) throw ConfigError("affine: weights '" + w.name + "' must be rank 2");
  if (b.size() != w.rows()) throw ConfigError("affine: bias '" + b.name + "' does not match weights");
}

}  // namespace

std::vector<double> affine_forward(std::span<const double> input, const ParamTensor& weights,
                                   const ParamTensor& bias, AffineCache* cache) {
  check_shapes(weights, bias);
  const std::size_t out = weights.rows();
  const std::size_t in = weights.cols();
  if (input.size() != in) {
    throw ConfigError("affine: input length " + std::to_string(input.size()) +
                      " does not match '" + weights.name + "' input dimension " +
                      std::to_string(in));
  }
  std::vector<double> y(bias.values);
  const double* w = weights.values.data();
  for (std::size_t r = 0; r < out; ++r) {
    const double* row = w + r * in;
    double s = 0.0;
    for (std::size_t c = 0; c < in; ++c) s += row[c] * input[c];
    y[r] += s;
  }
  for (const double v : y) {
    if (!std::isfinite(v)) throw NumericError("affine: non-finite output in '" + weights.name + "'");
  }
  if (cache != nullptr) {
    cache->input.assign(input.begin(), input.end());
    cache->out_dim = out;
    cache->valid = true;
  }
  return y;
}

std::vector<double> affine_backward(std::span<const double> output_grad, AffineCache& cache,
                                    ParamTensor& weights, ParamTensor& bias) {
  if (!cache.valid) throw UsageError("affine_backward: no matching forward for '" + weights.name + "'");
  check_shapes(weights, bias);
  const std::size_t out = weights.rows();
  const std::size_t in = weights.cols();
  if (cache.out_dim != out || cache.input.size() != in || output_grad.size() != out) {
    throw UsageError("affine_backward: stale cache for '" + weights.name + "'");
  }
  std::vector<double> dx(in, 0.0);
  const double* w = weights.values.data();
  double* gw = weights.grad.data();
  const double* x = cache.input.data();
  for (std::size_t r = 0; r < out; ++r) {
    const double g = output_grad[r];
    bias.grad[r] += g;
    if (g == 0.0) continue;
    const double* row = w + r * in;
    double* grow = gw + r * in;
    for (std::size_t c = 0; c < in; ++c) {
      grow[c] += g * x[c];
      dx[c] += g * row[c];
    }
  }
  cache.valid = false;
  return dx;
}

}  // namespace adaptraj::numcore
