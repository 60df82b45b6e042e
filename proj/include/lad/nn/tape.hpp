#pragma once

#include <functional>
#include <span>
#include <vector>

#include "lad/nn/parameters.hpp"
#include "lad/vocab.hpp"

namespace lad::nn {

// Handle to a value recorded on a Tape.
struct Var {
  std::int32_t id = -1;
};

// Reverse-mode autodiff over row-major float matrices. A tape built without a
// Gradients sink records values only (inference); otherwise backward() adds
// parameter gradients into the sink. One tape per forward pass; not shared
// between threads.
class Tape {
 public:
  explicit Tape(const ParameterSet& params, Gradients* sink = nullptr);

  bool recording() const { return sink_ != nullptr; }

  Var param(ParamId id);
  Var constant(Matrix value);
  const Matrix& value(Var v) const;
  float scalar(Var v) const { return value(v)(0, 0); }

  Var matmul(Var a, Var b);
  // x * W + b, with W stored in x in-features by out-features.
  Var linear(Var x, ParamId weight, ParamId bias);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var add_row(Var a, Var row);
  Var scale(Var a, float s);
  Var relu(Var a);
  Var layer_norm(Var x, ParamId gamma, ParamId beta, float eps = 1e-5f);
  Var gather_rows(ParamId table, std::span<const TokenId> ids, float scale = 1.0f);
  Var concat_rows(std::span<const Var> parts);
  Var row(Var x, Index i);
  // Multi-head scaled dot-product attention on already-projected q, k, v.
  // key_mask[j] == false hides key j from every query.
  Var attention(Var q, Var k, Var v, int heads, bool causal, const std::vector<bool>* key_mask = nullptr);
  // Self-attention restricted to diagonal blocks: rows [start, start + len)
  // attend only within their own block. `starts` is increasing, first is 0.
  Var block_attention(Var q, Var k, Var v, int heads, std::span<const Index> starts);
  // Rows x(rows[i]) stacked.
  Var select_rows(Var x, std::span<const Index> rows);
  Var log_softmax(Var x);
  // Column vector with x(i, cols[i]).
  Var pick(Var x, std::span<const TokenId> cols);
  Var sum(Var x);
  Var log_sigmoid(Var x);

  // Seeds d(root)/d(root) = 1 (root must be 1x1) and propagates.
  void backward(Var root);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Matrix grad;
    bool has_grad = false;
    ParamId param = -1;
    std::function<void(Tape&, const Node&)> backward;
  };

  Var push(Matrix value, std::function<void(Tape&, const Node&)> backward = {});
  Matrix& grad_for(std::int32_t id);
  const Matrix& node_value(const Node& n) const { return n.external ? *n.external : n.value; }

  const ParameterSet& params_;
  Gradients* sink_;
  std::vector<Node> nodes_;
};

}  // namespace lad::nn
