#include "lad/graph.hpp"

#include <map>

#include "lad/error.hpp"

namespace lad::graph {

using nn::Matrix;
using nn::Tape;
using nn::Var;

namespace {

Var self_attention(Tape& t, const Hyperparameters& hp, const AttentionIds& a, Var x, bool causal,
                   const std::vector<bool>* key_mask, std::span<const nn::Index> blocks = {}) {
  Var q = t.linear(x, a.q.weight, a.q.bias);
  Var k = t.linear(x, a.k.weight, a.k.bias);
  Var v = t.linear(x, a.v.weight, a.v.bias);
  Var att = blocks.empty() ? t.attention(q, k, v, hp.heads, causal, key_mask)
                           : t.block_attention(q, k, v, hp.heads, blocks);
  return t.linear(att, a.out.weight, a.out.bias);
}

Var feed_forward(Tape& t, const LinearIds& ff1, const LinearIds& ff2, Var x) {
  return t.linear(t.relu(t.linear(x, ff1.weight, ff1.bias)), ff2.weight, ff2.bias);
}

Var with_positions(Tape& t, const ModelState& m, Var x, int offset = 0) {
  const auto n = t.value(x).rows();
  if (offset + n > m.positions.rows()) throw ShapeError("sequence longer than positional table");
  return t.add(x, t.constant(m.positions.middleRows(offset, n)));
}

}  // namespace

Var encoder_layer(Tape& t, const Hyperparameters& hp, const EncoderLayerIds& l, Var x,
                  const std::vector<bool>* key_mask, std::span<const nn::Index> blocks) {
  Var h = t.layer_norm(x, l.norm1.gamma, l.norm1.beta);
  x = t.add(x, self_attention(t, hp, l.self_attn, h, false, key_mask, blocks));
  h = t.layer_norm(x, l.norm2.gamma, l.norm2.beta);
  return t.add(x, feed_forward(t, l.ff1, l.ff2, h));
}

Var lte_summaries(Tape& t, const ModelState& m, const std::vector<std::vector<TokenId>>& lists) {
  if (lists.empty()) return t.constant(Matrix(0, m.hp.dim));
  std::map<std::vector<TokenId>, nn::Index> unique;
  std::vector<nn::Index> pick_rows;
  std::vector<TokenId> packed;
  std::vector<nn::Index> starts;
  std::vector<nn::Index> pos;
  for (const auto& ids : lists) {
    if (static_cast<int>(ids.size()) + 1 > m.hp.lte_max_len) {
      throw ShapeError("long-term behavior exceeds lte_max_len");
    }
    auto [it, fresh] = unique.emplace(ids, static_cast<nn::Index>(packed.size()));
    if (fresh) {
      starts.push_back(static_cast<nn::Index>(packed.size()));
      packed.push_back(Vocabulary::kBos);
      packed.insert(packed.end(), ids.begin(), ids.end());
      for (std::size_t i = 0; i <= ids.size(); ++i) pos.push_back(static_cast<nn::Index>(i));
    }
    pick_rows.push_back(it->second);
  }
  Matrix positions(static_cast<nn::Index>(pos.size()), m.hp.dim);
  for (std::size_t i = 0; i < pos.size(); ++i) positions.row(static_cast<nn::Index>(i)) = m.positions.row(pos[i]);
  Var x = t.add(t.gather_rows(m.layout.token_embedding, packed, m.embed_scale()), t.constant(std::move(positions)));
  for (const auto& l : m.layout.lte) x = encoder_layer(t, m.hp, l, x, nullptr, starts);
  x = t.layer_norm(x, m.layout.lte_norm.gamma, m.layout.lte_norm.beta);
  return t.select_rows(x, pick_rows);
}

Var encode_memory(Tape& t, const ModelState& m, std::span<const TokenId> prefix_ids,
                  std::span<const TokenId> short_ids, Var long_rows, std::vector<bool>& key_mask) {
  Var seg = t.param(m.layout.segment_embedding);
  std::vector<Var> parts;
  key_mask.clear();
  if (!prefix_ids.empty()) {
    Var p = t.gather_rows(m.layout.token_embedding, prefix_ids, m.embed_scale());
    parts.push_back(t.add_row(p, t.row(seg, 0)));
  }
  if (!short_ids.empty()) {
    Var s = t.gather_rows(m.layout.token_embedding, short_ids, m.embed_scale());
    parts.push_back(t.add_row(s, t.row(seg, 1)));
  }
  const auto n_long = t.value(long_rows).rows();
  if (n_long > 0) parts.push_back(t.add_row(long_rows, t.row(seg, 2)));
  for (TokenId id : prefix_ids) key_mask.push_back(id != Vocabulary::kPad);
  for (TokenId id : short_ids) key_mask.push_back(id != Vocabulary::kPad);
  for (nn::Index i = 0; i < n_long; ++i) key_mask.push_back(true);
  if (parts.empty()) throw ShapeError("empty encoder input");

  Var x = with_positions(t, m, t.concat_rows(parts));
  for (const auto& l : m.layout.encoder) x = encoder_layer(t, m.hp, l, x, &key_mask);
  return t.layer_norm(x, m.layout.encoder_norm.gamma, m.layout.encoder_norm.beta);
}

Var decoder_logprobs(Tape& t, const ModelState& m, Var memory, const std::vector<bool>& key_mask,
                     std::span<const TokenId> decoder_input) {
  Var x = with_positions(t, m, t.gather_rows(m.layout.token_embedding, decoder_input, m.embed_scale()));
  for (const auto& l : m.layout.decoder) {
    Var h = t.layer_norm(x, l.norm1.gamma, l.norm1.beta);
    x = t.add(x, self_attention(t, m.hp, l.self_attn, h, true, nullptr));
    h = t.layer_norm(x, l.norm2.gamma, l.norm2.beta);
    const auto& c = l.cross_attn;
    Var q = t.linear(h, c.q.weight, c.q.bias);
    Var k = t.linear(memory, c.k.weight, c.k.bias);
    Var v = t.linear(memory, c.v.weight, c.v.bias);
    x = t.add(x, t.linear(t.attention(q, k, v, m.hp.heads, false, &key_mask), c.out.weight, c.out.bias));
    h = t.layer_norm(x, l.norm3.gamma, l.norm3.beta);
    x = t.add(x, feed_forward(t, l.ff1, l.ff2, h));
  }
  x = t.layer_norm(x, m.layout.decoder_norm.gamma, m.layout.decoder_norm.beta);
  return t.log_softmax(t.linear(x, m.layout.output.weight, m.layout.output.bias));
}

EncodedMemory prepare_memory(const ModelState& m, Matrix memory, std::vector<bool> key_mask) {
  EncodedMemory mem;
  Tape t(m.params);
  Var x = t.constant(memory);
  for (const auto& l : m.layout.decoder) {
    const auto& c = l.cross_attn;
    mem.cross_k.push_back(t.value(t.linear(x, c.k.weight, c.k.bias)));
    mem.cross_v.push_back(t.value(t.linear(x, c.v.weight, c.v.bias)));
  }
  mem.memory = std::move(memory);
  mem.key_mask = std::move(key_mask);
  return mem;
}

DecoderState initial_decoder_state(const ModelState& m) {
  DecoderState s;
  s.self_k.assign(m.layout.decoder.size(), Matrix(0, m.hp.dim));
  s.self_v.assign(m.layout.decoder.size(), Matrix(0, m.hp.dim));
  return s;
}

Eigen::RowVectorXf decoder_step(const ModelState& m, const EncodedMemory& mem, DecoderState& state, TokenId token) {
  if (state.position >= m.hp.max_target_len) throw ShapeError("decoder step beyond max_target_len");
  Tape t(m.params);
  const TokenId ids[1] = {token};
  Var x = with_positions(t, m, t.gather_rows(m.layout.token_embedding, ids, m.embed_scale()), state.position);
  for (std::size_t li = 0; li < m.layout.decoder.size(); ++li) {
    const auto& l = m.layout.decoder[li];
    Var h = t.layer_norm(x, l.norm1.gamma, l.norm1.beta);
    const auto& a = l.self_attn;
    Var q = t.linear(h, a.q.weight, a.q.bias);
    Matrix& ks = state.self_k[li];
    Matrix& vs = state.self_v[li];
    ks.conservativeResize(ks.rows() + 1, Eigen::NoChange);
    vs.conservativeResize(vs.rows() + 1, Eigen::NoChange);
    ks.row(ks.rows() - 1) = t.value(t.linear(h, a.k.weight, a.k.bias));
    vs.row(vs.rows() - 1) = t.value(t.linear(h, a.v.weight, a.v.bias));
    Var att = t.attention(q, t.constant(ks), t.constant(vs), m.hp.heads, true, nullptr);
    x = t.add(x, t.linear(att, a.out.weight, a.out.bias));
    h = t.layer_norm(x, l.norm2.gamma, l.norm2.beta);
    const auto& c = l.cross_attn;
    Var cq = t.linear(h, c.q.weight, c.q.bias);
    Var catt = t.attention(cq, t.constant(mem.cross_k[li]), t.constant(mem.cross_v[li]), m.hp.heads, false,
                           &mem.key_mask);
    x = t.add(x, t.linear(catt, c.out.weight, c.out.bias));
    h = t.layer_norm(x, l.norm3.gamma, l.norm3.beta);
    x = t.add(x, feed_forward(t, l.ff1, l.ff2, h));
  }
  x = t.layer_norm(x, m.layout.decoder_norm.gamma, m.layout.decoder_norm.beta);
  Var lp = t.log_softmax(t.linear(x, m.layout.output.weight, m.layout.output.bias));
  ++state.position;
  return t.value(lp).row(0);
}

}  // namespace lad::graph
