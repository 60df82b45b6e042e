#include "lad/nn/parameters.hpp"

#include "lad/error.hpp"

namespace lad::nn {

ParamId ParameterSet::add(std::string name, Index rows, Index cols) {
  if (by_name_.count(name)) throw Error("duplicate parameter name: " + name);
  const auto id = static_cast<ParamId>(params_.size());
  by_name_.emplace(name, id);
  params_.push_back({std::move(name), Matrix::Zero(rows, cols)});
  return id;
}

ParamId ParameterSet::add_normal(std::string name, Index rows, Index cols, double stddev, Rng& rng) {
  const ParamId id = add(std::move(name), rows, cols);
  Matrix& m = params_.back().value;
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(rng.normal() * stddev);
  return id;
}

ParamId ParameterSet::add_constant(std::string name, Index rows, Index cols, float value) {
  const ParamId id = add(std::move(name), rows, cols);
  params_.back().value.setConstant(value);
  return id;
}

ParamId ParameterSet::id(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw Error("unknown parameter: " + name);
  return it->second;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

bool ParameterSet::all_finite() const {
  for (const auto& p : params_) {
    if (!p.value.allFinite()) return false;
  }
  return true;
}

Gradients::Gradients(const ParameterSet& params) {
  grads_.reserve(params.size());
  for (const auto& p : params) grads_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
}

void Gradients::zero() {
  for (auto& g : grads_) g.setZero();
}

void Gradients::add(const Gradients& other) {
  for (std::size_t i = 0; i < grads_.size(); ++i) grads_[i] += other.grads_[i];
}

void Gradients::scale(float s) {
  for (auto& g : grads_) g *= s;
}

double Gradients::squared_norm() const {
  double total = 0.0;
  for (const auto& g : grads_) total += static_cast<double>(g.squaredNorm());
  return total;
}

}  // namespace lad::nn
