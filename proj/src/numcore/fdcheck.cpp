#include "adaptraj/numcore/fdcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "adaptraj/numcore/errors.hpp"
#include "adaptraj/numcore/rng.hpp"

namespace adaptraj::numcore {

bool FdReport::passed() const {
  return std::none_of(layers.begin(), layers.end(), [](const auto& l) { return l.flagged; });
}

std::vector<std::string> FdReport::flagged_layers() const {
  std::vector<std::string> out;
  for (const auto& l : layers) {
    if (l.flagged) out.push_back(l.layer);
  }
  return out;
}

namespace {

// (tensor index, coordinate) pairs making up a layer's flat vector
struct Slot {
  std::size_t tensor;
  std::size_t coord;
};

std::vector<Slot> layer_slots(const ParameterSet& params, std::size_t layer) {
  std::vector<Slot> slots;
  for (const auto ti : params.registry().tensors_of(layer)) {
    for (std::size_t c = 0; c < params.tensor(ti).size(); ++c) slots.push_back({ti, c});
  }
  return slots;
}

}  // namespace

FdReport finite_diff_check(const LossFn& loss, ParameterSet& params,
                           const LayerVectors& analytic_grad, const FdOptions& options) {
  if (analytic_grad.size() != params.layer_count()) {
    throw ConfigError("finite_diff_check: analytic gradient has wrong layer count");
  }
  const double base = loss(params);
  const double again = loss(params);
  if (std::memcmp(&base, &again, sizeof(double)) != 0) {
    throw AuditError("finite_diff_check: loss function is not deterministic");
  }

  const double h = options.step;
  FdReport report;
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    const auto slots = layer_slots(params, l);
    const auto& grad = analytic_grad[l];
    if (grad.size() != slots.size()) {
      throw ConfigError("finite_diff_check: analytic gradient size mismatch in layer '" +
                        params.registry().layer_name(l) + "'");
    }
    LayerFdResult result;
    result.layer = params.registry().layer_name(l);
    if (slots.empty()) {
      report.layers.push_back(result);
      continue;
    }
    RngStream rng(options.seed, l);

    std::vector<std::size_t> picks;
    if (options.coords_per_tensor == 0) {
      for (std::size_t i = 0; i < slots.size(); ++i) picks.push_back(i);
    } else {
      std::size_t offset = 0;
      for (const auto ti : params.registry().tensors_of(l)) {
        const std::size_t n = params.tensor(ti).size();
        for (std::size_t k = 0; k < std::min(n, options.coords_per_tensor); ++k) {
          picks.push_back(offset + static_cast<std::size_t>(rng.uniform_index(n)));
        }
        offset += n;
      }
    }

    std::vector<double> numeric;
    std::vector<double> analytic;
    for (const auto i : picks) {
      double& v = params.tensor(slots[i].tensor).values[slots[i].coord];
      const double saved = v;
      v = saved + h;
      const double plus = loss(params);
      v = saved - h;
      const double minus = loss(params);
      v = saved;
      numeric.push_back((plus - minus) / (2.0 * h));
      analytic.push_back(grad[i]);
    }
    double scale = std::max({max_abs(numeric), max_abs(analytic), options.abs_floor});
    double worst = 0.0;
    for (std::size_t k = 0; k < numeric.size(); ++k) {
      worst = std::max(worst, std::abs(numeric[k] - analytic[k]) / scale);
    }

    const double grad_norm = std::sqrt(dot(grad, grad));
    for (std::size_t d = 0; d < options.directions_per_layer; ++d) {
      std::vector<double> dir(slots.size());
      double norm = 0.0;
      for (auto& x : dir) {
        x = rng.normal();
        norm += x * x;
      }
      norm = std::sqrt(norm);
      for (auto& x : dir) x /= norm;
      std::vector<double> saved(slots.size());
      for (std::size_t i = 0; i < slots.size(); ++i) {
        saved[i] = params.tensor(slots[i].tensor).values[slots[i].coord];
      }
      auto apply = [&](double sign) {
        for (std::size_t i = 0; i < slots.size(); ++i) {
          params.tensor(slots[i].tensor).values[slots[i].coord] = saved[i] + sign * h * dir[i];
        }
      };
      apply(1.0);
      const double plus = loss(params);
      apply(-1.0);
      const double minus = loss(params);
      for (std::size_t i = 0; i < slots.size(); ++i) {
        params.tensor(slots[i].tensor).values[slots[i].coord] = saved[i];
      }
      const double fd = (plus - minus) / (2.0 * h);
      const double an = dot(grad, dir);
      const double denom = std::max({grad_norm, std::abs(fd), options.abs_floor});
      worst = std::max(worst, std::abs(fd - an) / denom);
      ++result.probes;
    }
    result.probes += picks.size();
    result.max_rel_error = worst;
    result.flagged = !(worst < options.tolerance);
    report.max_rel_error = std::max(report.max_rel_error, worst);
    report.layers.push_back(result);
  }
  return report;
}

}  // namespace adaptraj::numcore
