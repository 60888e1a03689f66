#include "adaptraj/numcore/optim.hpp"

#include <cmath>

#include "adaptraj/numcore/errors.hpp"

namespace adaptraj::numcore {

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kSgd ? "sgd" : "adamw";
}

OptimizerKind parse_optimizer_kind(const std::string& text) {
  if (text == "sgd") return OptimizerKind::kSgd;
  if (text == "adamw") return OptimizerKind::kAdamW;
  throw ConfigError("unknown optimizer '" + text + "' (expected sgd or adamw)");
}

bool grads_finite(const ParameterSet& params) {
  for (const auto& t : params.tensors()) {
    for (const double g : t.grad) {
      if (!std::isfinite(g)) return false;
    }
  }
  return true;
}

namespace {

void check_rates(const ParameterSet& params, std::span<const double> layer_lr) {
  if (layer_lr.size() != params.layer_count()) {
    throw ConfigError("optimizer: expected one learning rate per layer");
  }
}

}  // namespace

bool sgd_step(ParameterSet& params, std::span<const double> layer_lr) {
  check_rates(params, layer_lr);
  if (!grads_finite(params)) return false;
  for (std::size_t i = 0; i < params.tensor_count(); ++i) {
    auto& t = params.tensor(i);
    const double lr = layer_lr[params.registry().owner_of(i)];
    for (std::size_t k = 0; k < t.size(); ++k) t.values[k] -= lr * t.grad[k];
  }
  return true;
}

void AdamW::reset() {
  steps_ = 0;
  m_.clear();
  v_.clear();
}

bool AdamW::step(ParameterSet& params, std::span<const double> layer_lr) {
  check_rates(params, layer_lr);
  if (!grads_finite(params)) return false;
  if (m_.size() != params.tensor_count()) {
    m_.assign(params.tensor_count(), {});
    v_.assign(params.tensor_count(), {});
    for (std::size_t i = 0; i < params.tensor_count(); ++i) {
      m_[i].assign(params.tensor(i).size(), 0.0);
      v_[i].assign(params.tensor(i).size(), 0.0);
    }
  }
  ++steps_;
  const auto& s = settings_;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.tensor_count(); ++i) {
    auto& t = params.tensor(i);
    auto& m = m_[i];
    auto& v = v_[i];
    const double lr = layer_lr[params.registry().owner_of(i)];
    for (std::size_t k = 0; k < t.size(); ++k) {
      const double g = t.grad[k];
      m[k] = s.beta1 * m[k] + (1.0 - s.beta1) * g;
      v[k] = s.beta2 * v[k] + (1.0 - s.beta2) * g * g;
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      t.values[k] -= lr * (mhat / (std::sqrt(vhat) + s.eps) + s.weight_decay * t.values[k]);
    }
  }
  return true;
}

bool Optimizer::step(ParameterSet& params, std::span<const double> layer_lr) {
  return kind_ == OptimizerKind::kSgd ? sgd_step(params, layer_lr) : adamw_.step(params, layer_lr);
}

}  // namespace adaptraj::numcore
