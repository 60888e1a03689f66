#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace adaptraj::numcore {

/// A named dense parameter with a gradient buffer of identical shape.
struct ParamTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;
  std::vector<double> grad;

  ParamTensor() = default;
  ParamTensor(std::string tensor_name, std::vector<std::size_t> tensor_shape);

  std::size_t size() const { return values.size(); }
  /// Row count for a rank-2 tensor, element count for rank 1.
  std::size_t rows() const { return shape.empty() ? 0 : shape.front(); }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  void zero_grad();
  bool all_finite() const;
};

std::size_t shape_volume(const std::vector<std::size_t>& shape);

/// Order of layers and the tensors each one owns. Fixed once the model is
/// constructed; serialization writes layers in this order.
class LayerRegistry {
 public:
  std::size_t add_layer(std::string name);
  void attach(std::size_t layer, std::size_t tensor_index);

  std::size_t layer_count() const { return names_.size(); }
  const std::string& layer_name(std::size_t layer) const { return names_.at(layer); }
  const std::vector<std::size_t>& tensors_of(std::size_t layer) const { return members_.at(layer); }
  /// Index of the layer owning a tensor.
  std::size_t owner_of(std::size_t tensor_index) const { return owner_.at(tensor_index); }
  /// Throws ConfigError when the name is unknown.
  std::size_t find_layer(const std::string& name) const;

  bool operator==(const LayerRegistry&) const = default;

 private:
  std::vector<std::string> names_;
  std::vector<std::vector<std::size_t>> members_;
  std::vector<std::size_t> owner_;
};

/// Flattened per-layer vectors (gradients or parameter snapshots).
using LayerVectors = std::vector<std::vector<double>>;

/// Parameter tensors grouped into registered layers.
class ParameterSet {
 public:
  /// Adds a zero-initialized tensor to an existing or new layer.
  std::size_t add(const std::string& layer, const std::string& name,
                  std::vector<std::size_t> shape);

  const LayerRegistry& registry() const { return registry_; }
  std::size_t layer_count() const { return registry_.layer_count(); }
  std::size_t tensor_count() const { return tensors_.size(); }

  ParamTensor& tensor(std::size_t index) { return tensors_.at(index); }
  const ParamTensor& tensor(std::size_t index) const { return tensors_.at(index); }
  std::size_t find_tensor(const std::string& name) const;

  std::vector<ParamTensor>& tensors() { return tensors_; }
  const std::vector<ParamTensor>& tensors() const { return tensors_; }

  void zero_grad();
  std::size_t parameter_count() const;

  LayerVectors layer_grads() const;
  LayerVectors layer_values() const;
  void set_layer_values(const LayerVectors& values);

  /// True when both sets have the same layers, tensor names and shapes.
  bool same_layout(const ParameterSet& other) const;
  bool values_equal(const ParameterSet& other) const;

  /// FNV-1a over the raw bytes of every value, in registry order.
  std::uint64_t checksum() const;

 private:
  LayerRegistry registry_;
  std::vector<ParamTensor> tensors_;
};

double dot(std::span<const double> a, std::span<const double> b);
double max_abs(std::span<const double> v);

}  // namespace adaptraj::numcore
