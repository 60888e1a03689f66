#include "adaptraj/numcore/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "adaptraj/numcore/errors.hpp"

namespace adaptraj::numcore {

std::size_t shape_volume(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (const auto d : shape) n *= d;
  return shape.empty() ? 0 : n;
}

ParamTensor::ParamTensor(std::string tensor_name, std::vector<std::size_t> tensor_shape)
    : name(std::move(tensor_name)),
      shape(std::move(tensor_shape)),
      values(shape_volume(shape), 0.0),
      grad(values.size(), 0.0) {}

void ParamTensor::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

bool ParamTensor::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

std::size_t LayerRegistry::add_layer(std::string name) {
  names_.push_back(std::move(name));
  members_.emplace_back();
  return names_.size() - 1;
}

void LayerRegistry::attach(std::size_t layer, std::size_t tensor_index) {
  if (layer >= names_.size()) throw UsageError("attach: unknown layer index");
  if (tensor_index != owner_.size()) throw UsageError("attach: tensors must be attached in order");
  members_[layer].push_back(tensor_index);
  owner_.push_back(layer);
}

std::size_t LayerRegistry::find_layer(const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw ConfigError("unknown layer '" + name + "'");
  return static_cast<std::size_t>(it - names_.begin());
}

std::size_t ParameterSet::add(const std::string& layer, const std::string& name,
                              std::vector<std::size_t> shape) {
  for (const auto& t : tensors_) {
    if (t.name == name) throw ConfigError("duplicate tensor name '" + name + "'");
  }
  std::size_t layer_index = 0;
  bool found = false;
  for (std::size_t i = 0; i < registry_.layer_count(); ++i) {
    if (registry_.layer_name(i) == layer) {
      layer_index = i;
      found = true;
    }
  }
  if (!found) layer_index = registry_.add_layer(layer);
  tensors_.emplace_back(name, std::move(shape));
  registry_.attach(layer_index, tensors_.size() - 1);
  return tensors_.size() - 1;
}

std::size_t ParameterSet::find_tensor(const std::string& name) const {
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].name == name) return i;
  }
  throw ConfigError("unknown tensor '" + name + "'");
}

void ParameterSet::zero_grad() {
  for (auto& t : tensors_) t.zero_grad();
}

std::size_t ParameterSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

LayerVectors ParameterSet::layer_grads() const {
  LayerVectors out(layer_count());
  for (std::size_t l = 0; l < layer_count(); ++l) {
    for (const auto ti : registry_.tensors_of(l)) {
      const auto& g = tensors_[ti].grad;
      out[l].insert(out[l].end(), g.begin(), g.end());
    }
  }
  return out;
}

LayerVectors ParameterSet::layer_values() const {
  LayerVectors out(layer_count());
  for (std::size_t l = 0; l < layer_count(); ++l) {
    for (const auto ti : registry_.tensors_of(l)) {
      const auto& v = tensors_[ti].values;
      out[l].insert(out[l].end(), v.begin(), v.end());
    }
  }
  return out;
}

void ParameterSet::set_layer_values(const LayerVectors& values) {
  if (values.size() != layer_count()) throw ConfigError("set_layer_values: layer count mismatch");
  for (std::size_t l = 0; l < layer_count(); ++l) {
    std::size_t offset = 0;
    for (const auto ti : registry_.tensors_of(l)) {
      auto& v = tensors_[ti].values;
      if (offset + v.size() > values[l].size()) throw ConfigError("set_layer_values: size mismatch");
      std::copy_n(values[l].begin() + static_cast<std::ptrdiff_t>(offset), v.size(), v.begin());
      offset += v.size();
    }
    if (offset != values[l].size()) throw ConfigError("set_layer_values: size mismatch");
  }
}

bool ParameterSet::same_layout(const ParameterSet& other) const {
  if (!(registry_ == other.registry_)) return false;
  if (tensors_.size() != other.tensors_.size()) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].name != other.tensors_[i].name) return false;
    if (tensors_[i].shape != other.tensors_[i].shape) return false;
  }
  return true;
}

bool ParameterSet::values_equal(const ParameterSet& other) const {
  if (!same_layout(other)) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    const auto& a = tensors_[i].values;
    const auto& b = other.tensors_[i].values;
    if (std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

std::uint64_t ParameterSet::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& t : tensors_) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.values.data());
    for (std::size_t i = 0; i < t.values.size() * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (const double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace adaptraj::numcore
