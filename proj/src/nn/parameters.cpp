#include "rap/nn/parameters.hpp"

namespace rap::nn {

ParamId ParameterStore::add(std::string name, Matrix init, bool decay) {
  if (find(name)) throw Error("duplicate parameter", name);
  Parameter p;
  p.name = std::move(name);
  p.grad = Matrix::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  p.decay = decay;
  params_.push_back(std::move(p));
  return ParamId{params_.size() - 1};
}

std::optional<ParamId> ParameterStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return ParamId{i};
  }
  return std::nullopt;
}

ParamId ParameterStore::id(const std::string& name) const {
  if (auto found = find(name)) return *found;
  throw Error("unknown parameter", name);
}

Eigen::Index ParameterStore::element_count() const {
  Eigen::Index n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

void ParameterStore::scale_grad(double factor) {
  for (auto& p : params_) p.grad *= factor;
}

bool ParameterStore::grads_finite() const {
  for (const auto& p : params_) {
    if (!p.grad.allFinite()) return false;
  }
  return true;
}

Vector ParameterStore::flatten_values() const {
  Vector flat(element_count());
  Eigen::Index at = 0;
  for (const auto& p : params_) {
    flat.segment(at, p.value.size()) = p.value.reshaped();
    at += p.value.size();
  }
  return flat;
}

Vector ParameterStore::flatten_grads() const {
  Vector flat(element_count());
  Eigen::Index at = 0;
  for (const auto& p : params_) {
    flat.segment(at, p.grad.size()) = p.grad.reshaped();
    at += p.grad.size();
  }
  return flat;
}

void ParameterStore::assign_values(const Vector& flat) {
  if (flat.size() != element_count()) throw Error("shape mismatch", "flat parameter vector has wrong length");
  Eigen::Index at = 0;
  for (auto& p : params_) {
    p.value.reshaped() = flat.segment(at, p.value.size());
    at += p.value.size();
  }
}

void ParameterStore::copy_values_from(const ParameterStore& other) {
  for (auto& p : params_) {
    if (auto id = other.find(p.name)) {
      const auto& src = other[*id].value;
      if (src.rows() != p.value.rows() || src.cols() != p.value.cols()) {
        throw Error("shape mismatch", "parameter '" + p.name + "' differs in shape");
      }
      p.value = src;
    }
  }
}

}  // namespace rap::nn
