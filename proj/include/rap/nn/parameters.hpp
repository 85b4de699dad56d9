#pragma once

#include "rap/random.hpp"
#include "rap/types.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace rap::nn {

/// Stable handle into a ParameterStore; survives copies of the store.
struct ParamId {
  std::size_t index = 0;
};

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool decay = true;  // subject to decoupled weight decay
};

/// Named tensors with same-shaped gradient buffers. Insertion order is the
/// canonical order for flattening and serialization.
class ParameterStore {
 public:
  ParamId add(std::string name, Matrix init, bool decay = true);

  Parameter& operator[](ParamId id) { return params_.at(id.index); }
  const Parameter& operator[](ParamId id) const { return params_.at(id.index); }
  Matrix& value(ParamId id) { return params_.at(id.index).value; }
  const Matrix& value(ParamId id) const { return params_.at(id.index).value; }
  Matrix& grad(ParamId id) { return params_.at(id.index).grad; }

  std::optional<ParamId> find(const std::string& name) const;
  ParamId id(const std::string& name) const;

  std::size_t size() const { return params_.size(); }
  Eigen::Index element_count() const;
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  void scale_grad(double factor);
  bool grads_finite() const;

  Vector flatten_values() const;
  Vector flatten_grads() const;
  void assign_values(const Vector& flat);

  /// Copies values for every parameter present in both stores (matched by name).
  void copy_values_from(const ParameterStore& other);

 private:
  std::vector<Parameter> params_;
};

}  // namespace rap::nn
