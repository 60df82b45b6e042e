#include "lad/nn/tape.hpp"

#include <cmath>
#include <limits>

#include "lad/error.hpp"

namespace lad::nn {

namespace {

void require_shape(bool ok, const char* op) {
  if (!ok) throw ShapeError(std::string("shape mismatch in ") + op);
}

}  // namespace

Tape::Tape(const ParameterSet& params, Gradients* sink) : params_(params), sink_(sink) {
  nodes_.reserve(512);
}

Var Tape::push(Matrix value, std::function<void(Tape&, const Node&)> backward) {
  Node n;
  n.value = std::move(value);
  if (recording()) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Matrix& Tape::grad_for(std::int32_t id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.has_grad) {
    const Matrix& v = node_value(n);
    n.grad = Matrix::Zero(v.rows(), v.cols());
    n.has_grad = true;
  }
  return n.grad;
}

const Matrix& Tape::value(Var v) const { return node_value(nodes_[static_cast<std::size_t>(v.id)]); }

Var Tape::param(ParamId id) {
  Node n;
  n.external = &params_[id].value;
  n.param = id;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::constant(Matrix value) { return push(std::move(value)); }

Var Tape::matmul(Var a, Var b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  require_shape(va.cols() == vb.rows(), "matmul");
  Matrix out = va * vb;
  return push(std::move(out), [a, b](Tape& t, const Node& self) {
    const Matrix& g = self.grad;
    t.grad_for(a.id).noalias() += g * t.value(b).transpose();
    t.grad_for(b.id).noalias() += t.value(a).transpose() * g;
  });
}

Var Tape::linear(Var x, ParamId weight, ParamId bias) {
  const Matrix& vx = value(x);
  const Matrix& w = params_[weight].value;
  const Matrix& b = params_[bias].value;
  require_shape(vx.cols() == w.rows() && b.rows() == 1 && b.cols() == w.cols(), "linear");
  Matrix out = vx * w;
  out.rowwise() += b.row(0);
  return push(std::move(out), [this, x, weight, bias](Tape& t, const Node& self) {
    const Matrix& g = self.grad;
    const Matrix& w = params_[weight].value;
    t.grad_for(x.id).noalias() += g * w.transpose();
    (*sink_)[weight].noalias() += t.value(x).transpose() * g;
    (*sink_)[bias].row(0) += g.colwise().sum();
  });
}

Var Tape::add(Var a, Var b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  require_shape(va.rows() == vb.rows() && va.cols() == vb.cols(), "add");
  Matrix out = va + vb;
  return push(std::move(out), [a, b](Tape& t, const Node& self) {
    t.grad_for(a.id) += self.grad;
    t.grad_for(b.id) += self.grad;
  });
}

Var Tape::sub(Var a, Var b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  require_shape(va.rows() == vb.rows() && va.cols() == vb.cols(), "sub");
  Matrix out = va - vb;
  return push(std::move(out), [a, b](Tape& t, const Node& self) {
    t.grad_for(a.id) += self.grad;
    t.grad_for(b.id) -= self.grad;
  });
}

Var Tape::add_row(Var a, Var row) {
  const Matrix& va = value(a);
  const Matrix& vr = value(row);
  require_shape(vr.rows() == 1 && vr.cols() == va.cols(), "add_row");
  Matrix out = va;
  out.rowwise() += vr.row(0);
  return push(std::move(out), [a, row](Tape& t, const Node& self) {
    t.grad_for(a.id) += self.grad;
    t.grad_for(row.id).row(0) += self.grad.colwise().sum();
  });
}

Var Tape::scale(Var a, float s) {
  Matrix out = value(a) * s;
  return push(std::move(out), [a, s](Tape& t, const Node& self) { t.grad_for(a.id) += self.grad * s; });
}

Var Tape::relu(Var a) {
  Matrix out = value(a).cwiseMax(0.0f);
  return push(std::move(out), [a](Tape& t, const Node& self) {
    const Matrix& va = t.value(a);
    Matrix& ga = t.grad_for(a.id);
    for (Index i = 0; i < va.size(); ++i) {
      if (va.data()[i] > 0.0f) ga.data()[i] += self.grad.data()[i];
    }
  });
}

Var Tape::layer_norm(Var x, ParamId gamma, ParamId beta, float eps) {
  const Matrix& vx = value(x);
  const Matrix& g = params_[gamma].value;
  const Matrix& b = params_[beta].value;
  require_shape(g.cols() == vx.cols() && b.cols() == vx.cols(), "layer_norm");
  const Index n = vx.rows();
  const Index d = vx.cols();
  Matrix xhat(n, d);
  Eigen::VectorXf inv_std(n);
  for (Index i = 0; i < n; ++i) {
    const float mean = vx.row(i).mean();
    const float var = (vx.row(i).array() - mean).square().mean();
    inv_std(i) = 1.0f / std::sqrt(var + eps);
    xhat.row(i) = (vx.row(i).array() - mean) * inv_std(i);
  }
  Matrix out(n, d);
  for (Index i = 0; i < n; ++i) out.row(i) = xhat.row(i).cwiseProduct(g.row(0)) + b.row(0);
  return push(std::move(out), [this, x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                                  Tape& t, const Node& self) {
    const Matrix& dy = self.grad;
    const Matrix& g = params_[gamma].value;
    const Index n = dy.rows();
    const float inv_d = 1.0f / static_cast<float>(dy.cols());
    Matrix& dx = t.grad_for(x.id);
    for (Index i = 0; i < n; ++i) {
      Eigen::RowVectorXf dxhat = dy.row(i).cwiseProduct(g.row(0));
      const float m1 = dxhat.sum() * inv_d;
      const float m2 = dxhat.dot(xhat.row(i)) * inv_d;
      dx.row(i) += ((dxhat.array() - m1 - xhat.row(i).array() * m2) * inv_std(i)).matrix();
    }
    (*sink_)[gamma].row(0) += dy.cwiseProduct(xhat).colwise().sum();
    (*sink_)[beta].row(0) += dy.colwise().sum();
  });
}

Var Tape::gather_rows(ParamId table, std::span<const TokenId> ids, float scale) {
  const Matrix& tab = params_[table].value;
  Matrix out(static_cast<Index>(ids.size()), tab.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= tab.rows()) throw ShapeError("gather_rows: id out of range");
    out.row(static_cast<Index>(i)) = tab.row(ids[i]) * scale;
  }
  std::vector<TokenId> kept(ids.begin(), ids.end());
  return push(std::move(out), [this, table, kept = std::move(kept), scale](Tape&, const Node& self) {
    Matrix& gt = (*sink_)[table];
    for (std::size_t i = 0; i < kept.size(); ++i) gt.row(kept[i]) += self.grad.row(static_cast<Index>(i)) * scale;
  });
}

Var Tape::concat_rows(std::span<const Var> parts) {
  Index rows = 0;
  Index cols = -1;
  for (Var p : parts) {
    const Matrix& v = value(p);
    if (v.rows() == 0) continue;
    if (cols < 0) cols = v.cols();
    require_shape(v.cols() == cols, "concat_rows");
    rows += v.rows();
  }
  if (cols < 0) cols = parts.empty() ? 0 : value(parts.front()).cols();
  Matrix out(rows, cols);
  Index at = 0;
  for (Var p : parts) {
    const Matrix& v = value(p);
    if (v.rows() == 0) continue;
    out.middleRows(at, v.rows()) = v;
    at += v.rows();
  }
  std::vector<Var> kept(parts.begin(), parts.end());
  return push(std::move(out), [kept = std::move(kept)](Tape& t, const Node& self) {
    Index at = 0;
    for (Var p : kept) {
      const Index r = t.value(p).rows();
      if (r == 0) continue;
      t.grad_for(p.id) += self.grad.middleRows(at, r);
      at += r;
    }
  });
}

Var Tape::row(Var x, Index i) {
  const Matrix& vx = value(x);
  require_shape(i >= 0 && i < vx.rows(), "row");
  Matrix out = vx.row(i);
  return push(std::move(out), [x, i](Tape& t, const Node& self) { t.grad_for(x.id).row(i) += self.grad.row(0); });
}

Var Tape::attention(Var q, Var k, Var v, int heads, bool causal, const std::vector<bool>* key_mask) {
  const Matrix& vq = value(q);
  const Matrix& vk = value(k);
  const Matrix& vv = value(v);
  require_shape(vq.cols() == vk.cols() && vk.cols() == vv.cols() && vk.rows() == vv.rows(), "attention");
  require_shape(heads > 0 && vq.cols() % heads == 0, "attention heads");
  require_shape(!key_mask || static_cast<Index>(key_mask->size()) == vk.rows(), "attention mask");
  const Index nq = vq.rows();
  const Index nk = vk.rows();
  const Index dh = vq.cols() / heads;
  const float s = 1.0f / std::sqrt(static_cast<float>(dh));
  // Causal offset aligns the last query with the last key.
  const Index offset = nk - nq;

  Matrix out(nq, vq.cols());
  std::vector<Matrix> probs(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const Index c0 = h * dh;
    Matrix scores = (vq.middleCols(c0, dh) * vk.middleCols(c0, dh).transpose()) * s;
    for (Index i = 0; i < nq; ++i) {
      float mx = -std::numeric_limits<float>::infinity();
      for (Index j = 0; j < nk; ++j) {
        const bool visible = (!causal || j <= i + offset) && (!key_mask || (*key_mask)[static_cast<std::size_t>(j)]);
        if (!visible) scores(i, j) = -std::numeric_limits<float>::infinity();
        mx = std::max(mx, scores(i, j));
      }
      if (!std::isfinite(mx)) {
        scores.row(i).setZero();
        continue;
      }
      float total = 0.0f;
      for (Index j = 0; j < nk; ++j) {
        const float e = std::isfinite(scores(i, j)) ? std::exp(scores(i, j) - mx) : 0.0f;
        scores(i, j) = e;
        total += e;
      }
      scores.row(i) /= total;
    }
    out.middleCols(c0, dh).noalias() = scores * vv.middleCols(c0, dh);
    probs[static_cast<std::size_t>(h)] = std::move(scores);
  }
  return push(std::move(out), [q, k, v, heads, dh, s, probs = std::move(probs)](Tape& t, const Node& self) {
    const Matrix& dout = self.grad;
    Matrix& dq = t.grad_for(q.id);
    Matrix& dk = t.grad_for(k.id);
    Matrix& dv = t.grad_for(v.id);
    const Matrix& vq = t.value(q);
    const Matrix& vk = t.value(k);
    const Matrix& vv = t.value(v);
    for (int h = 0; h < heads; ++h) {
      const Index c0 = h * dh;
      const Matrix& p = probs[static_cast<std::size_t>(h)];
      const auto doh = dout.middleCols(c0, dh);
      dv.middleCols(c0, dh).noalias() += p.transpose() * doh;
      Matrix dp = doh * vv.middleCols(c0, dh).transpose();
      Eigen::VectorXf rowdot = (dp.cwiseProduct(p)).rowwise().sum();
      Matrix ds = p.cwiseProduct(dp.colwise() - rowdot);
      dq.middleCols(c0, dh).noalias() += (ds * vk.middleCols(c0, dh)) * s;
      dk.middleCols(c0, dh).noalias() += (ds.transpose() * vq.middleCols(c0, dh)) * s;
    }
  });
}

Var Tape::block_attention(Var q, Var k, Var v, int heads, std::span<const Index> starts) {
  const Matrix& vq = value(q);
  const Matrix& vk = value(k);
  const Matrix& vv = value(v);
  require_shape(vq.rows() == vk.rows() && vk.rows() == vv.rows() && vq.cols() == vk.cols() && vk.cols() == vv.cols(),
                "block_attention");
  require_shape(heads > 0 && vq.cols() % heads == 0, "block_attention heads");
  require_shape(!starts.empty() && starts.front() == 0, "block_attention starts");
  const Index n = vq.rows();
  const Index dh = vq.cols() / heads;
  const float s = 1.0f / std::sqrt(static_cast<float>(dh));
  std::vector<std::pair<Index, Index>> blocks;
  for (std::size_t b = 0; b < starts.size(); ++b) {
    const Index end = b + 1 < starts.size() ? starts[b + 1] : n;
    require_shape(end > starts[b] && end <= n, "block_attention block");
    blocks.emplace_back(starts[b], end - starts[b]);
  }

  Matrix out(n, vq.cols());
  // probs[b * heads + h]
  std::vector<Matrix> probs;
  probs.reserve(blocks.size() * static_cast<std::size_t>(heads));
  for (const auto& [r0, len] : blocks) {
    for (int h = 0; h < heads; ++h) {
      const Index c0 = h * dh;
      Matrix p = (vq.block(r0, c0, len, dh) * vk.block(r0, c0, len, dh).transpose()) * s;
      for (Index i = 0; i < len; ++i) {
        const float mx = p.row(i).maxCoeff();
        p.row(i) = (p.row(i).array() - mx).exp();
        p.row(i) /= p.row(i).sum();
      }
      out.block(r0, c0, len, dh).noalias() = p * vv.block(r0, c0, len, dh);
      probs.push_back(std::move(p));
    }
  }
  return push(std::move(out), [q, k, v, heads, dh, s, blocks = std::move(blocks), probs = std::move(probs)](
                                  Tape& t, const Node& self) {
    Matrix& dq = t.grad_for(q.id);
    Matrix& dk = t.grad_for(k.id);
    Matrix& dv = t.grad_for(v.id);
    const Matrix& vq = t.value(q);
    const Matrix& vk = t.value(k);
    const Matrix& vv = t.value(v);
    std::size_t pi = 0;
    for (const auto& [r0, len] : blocks) {
      for (int h = 0; h < heads; ++h, ++pi) {
        const Index c0 = h * dh;
        const Matrix& p = probs[pi];
        const auto doh = self.grad.block(r0, c0, len, dh);
        dv.block(r0, c0, len, dh).noalias() += p.transpose() * doh;
        Matrix dp = doh * vv.block(r0, c0, len, dh).transpose();
        Eigen::VectorXf rowdot = (dp.cwiseProduct(p)).rowwise().sum();
        Matrix ds = p.cwiseProduct(dp.colwise() - rowdot);
        dq.block(r0, c0, len, dh).noalias() += (ds * vk.block(r0, c0, len, dh)) * s;
        dk.block(r0, c0, len, dh).noalias() += (ds.transpose() * vq.block(r0, c0, len, dh)) * s;
      }
    }
  });
}

Var Tape::select_rows(Var x, std::span<const Index> rows) {
  const Matrix& vx = value(x);
  Matrix out(static_cast<Index>(rows.size()), vx.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require_shape(rows[i] >= 0 && rows[i] < vx.rows(), "select_rows");
    out.row(static_cast<Index>(i)) = vx.row(rows[i]);
  }
  std::vector<Index> kept(rows.begin(), rows.end());
  return push(std::move(out), [x, kept = std::move(kept)](Tape& t, const Node& self) {
    Matrix& gx = t.grad_for(x.id);
    for (std::size_t i = 0; i < kept.size(); ++i) gx.row(kept[i]) += self.grad.row(static_cast<Index>(i));
  });
}

Var Tape::log_softmax(Var x) {
  const Matrix& vx = value(x);
  Matrix out(vx.rows(), vx.cols());
  for (Index i = 0; i < vx.rows(); ++i) {
    const float mx = vx.row(i).maxCoeff();
    const float lse = mx + std::log((vx.row(i).array() - mx).exp().sum());
    out.row(i) = vx.row(i).array() - lse;
  }
  return push(std::move(out), [x](Tape& t, const Node& self) {
    const Matrix& y = t.node_value(self);
    Eigen::VectorXf gsum = self.grad.rowwise().sum();
    Matrix& gx = t.grad_for(x.id);
    gx += self.grad - (y.array().exp().colwise() * gsum.array()).matrix();
  });
}

Var Tape::pick(Var x, std::span<const TokenId> cols) {
  const Matrix& vx = value(x);
  require_shape(static_cast<Index>(cols.size()) == vx.rows(), "pick");
  Matrix out(vx.rows(), 1);
  for (Index i = 0; i < vx.rows(); ++i) {
    const TokenId c = cols[static_cast<std::size_t>(i)];
    require_shape(c >= 0 && c < vx.cols(), "pick column");
    out(i, 0) = vx(i, c);
  }
  std::vector<TokenId> kept(cols.begin(), cols.end());
  return push(std::move(out), [x, kept = std::move(kept)](Tape& t, const Node& self) {
    Matrix& gx = t.grad_for(x.id);
    for (std::size_t i = 0; i < kept.size(); ++i) gx(static_cast<Index>(i), kept[i]) += self.grad(static_cast<Index>(i), 0);
  });
}

Var Tape::sum(Var x) {
  Matrix out(1, 1);
  out(0, 0) = value(x).sum();
  return push(std::move(out), [x](Tape& t, const Node& self) { t.grad_for(x.id).array() += self.grad(0, 0); });
}

Var Tape::log_sigmoid(Var x) {
  const Matrix& vx = value(x);
  Matrix out(vx.rows(), vx.cols());
  for (Index i = 0; i < vx.size(); ++i) {
    const float z = vx.data()[i];
    out.data()[i] = std::min(z, 0.0f) - std::log1p(std::exp(-std::abs(z)));
  }
  return push(std::move(out), [x](Tape& t, const Node& self) {
    const Matrix& vx = t.value(x);
    Matrix& gx = t.grad_for(x.id);
    for (Index i = 0; i < vx.size(); ++i) {
      const float z = vx.data()[i];
      // d/dz log sigmoid(z) = sigmoid(-z)
      const float sig_neg = z >= 0.0f ? std::exp(-z) / (1.0f + std::exp(-z)) : 1.0f / (1.0f + std::exp(z));
      gx.data()[i] += self.grad.data()[i] * sig_neg;
    }
  });
}

void Tape::backward(Var root) {
  if (!recording()) throw Error("backward on a tape without a gradient sink");
  require_shape(value(root).rows() == 1 && value(root).cols() == 1, "backward root");
  grad_for(root.id)(0, 0) += 1.0f;
  for (std::int32_t id = root.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.has_grad) continue;
    if (n.param >= 0) {
      (*sink_)[n.param] += n.grad;
    } else if (n.backward) {
      n.backward(*this, n);
    }
  }
}

}  // namespace lad::nn
