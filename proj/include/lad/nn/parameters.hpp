#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "lad/rng.hpp"

namespace lad::nn {

using Matrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;
using ParamId = std::int32_t;

struct Parameter {
  std::string name;
  Matrix value;
};

// Owns every learnable tensor of a model, in registration order. The order is
// the checkpoint tensor directory order.
class ParameterSet {
 public:
  ParamId add(std::string name, Index rows, Index cols);
  ParamId add_normal(std::string name, Index rows, Index cols, double stddev, Rng& rng);
  ParamId add_constant(std::string name, Index rows, Index cols, float value);

  ParamId id(const std::string& name) const;
  const Parameter& operator[](ParamId id) const { return params_[static_cast<std::size_t>(id)]; }
  Parameter& operator[](ParamId id) { return params_[static_cast<std::size_t>(id)]; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }

  bool all_finite() const;

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, ParamId> by_name_;
};

// One gradient matrix per parameter, same shapes.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParameterSet& params);

  Matrix& operator[](ParamId id) { return grads_[static_cast<std::size_t>(id)]; }
  const Matrix& operator[](ParamId id) const { return grads_[static_cast<std::size_t>(id)]; }
  std::size_t size() const { return grads_.size(); }

  void zero();
  void add(const Gradients& other);
  void scale(float s);
  double squared_norm() const;

 private:
  std::vector<Matrix> grads_;
};

}  // namespace lad::nn
