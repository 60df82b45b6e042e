#include "lad/glm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lad/error.hpp"

namespace lad::glm {

using nn::Matrix;
using nn::Tape;
using nn::Var;

std::size_t CandidateList::real_count() const {
  return static_cast<std::size_t>(
      std::count_if(candidates.begin(), candidates.end(), [](const Candidate& c) { return !c.is_reject; }));
}

std::vector<TokenId> make_target(const Vocabulary& vocab, std::string_view text) {
  auto ids = vocab.encode(text);
  ids.push_back(Vocabulary::kEos);
  return ids;
}

std::string candidate_text(const Vocabulary& vocab, const Candidate& c) {
  std::span<const TokenId> ids = c.ids;
  if (!ids.empty() && ids.back() == Vocabulary::kEos) ids = ids.first(ids.size() - 1);
  return vocab.decode(ids);
}

void check_lengths(const ModelState& m, std::size_t input_len, std::size_t target_len) {
  if (input_len == 0) throw ShapeError("empty input");
  if (input_len > static_cast<std::size_t>(m.hp.max_input_len)) {
    throw ShapeError("input length " + std::to_string(input_len) + " exceeds max_input_len " +
                     std::to_string(m.hp.max_input_len));
  }
  if (target_len == 0) throw ShapeError("empty target");
  if (target_len > static_cast<std::size_t>(m.hp.max_target_len)) {
    throw ShapeError("target length " + std::to_string(target_len) + " exceeds max_target_len " +
                     std::to_string(m.hp.max_target_len));
  }
}

MemoryGraph build_memory(Tape& t, const ModelState& m, const AssembledInput& in) {
  MemoryGraph g;
  Matrix long_rows = in.long_vectors.vectors;
  if (long_rows.rows() == 0) long_rows = Matrix(0, m.hp.dim);
  if (long_rows.cols() != m.hp.dim) throw ShapeError("long-term vectors have the wrong width");
  g.memory = graph::encode_memory(t, m, in.prefix_ids, in.short_ids, t.constant(std::move(long_rows)), g.key_mask);
  return g;
}

MemoryGraph build_memory_with_lte(Tape& t, const ModelState& m, std::span<const TokenId> prefix_ids,
                                  std::span<const TokenId> short_ids,
                                  const std::vector<std::vector<TokenId>>& long_tokens) {
  MemoryGraph g;
  Var long_rows = graph::lte_summaries(t, m, long_tokens);
  g.memory = graph::encode_memory(t, m, prefix_ids, short_ids, long_rows, g.key_mask);
  return g;
}

namespace {

std::vector<TokenId> decoder_input(std::span<const TokenId> target) {
  std::vector<TokenId> in;
  in.reserve(target.size());
  in.push_back(Vocabulary::kBos);
  in.insert(in.end(), target.begin(), target.end() - 1);
  return in;
}

}  // namespace

Var target_logprobs(Tape& t, const ModelState& m, const MemoryGraph& mem, std::span<const TokenId> target) {
  if (target.empty()) throw ShapeError("empty target");
  if (target.size() > static_cast<std::size_t>(m.hp.max_target_len)) {
    throw ShapeError("target length " + std::to_string(target.size()) + " exceeds max_target_len " +
                     std::to_string(m.hp.max_target_len));
  }
  const auto dec_in = decoder_input(target);
  Var lp = graph::decoder_logprobs(t, m, mem.memory, mem.key_mask, dec_in);
  return t.pick(lp, target);
}

Var sequence_score(Tape& t, const ModelState& m, const MemoryGraph& mem, std::span<const TokenId> ids) {
  Var total = t.sum(target_logprobs(t, m, mem, ids));
  if (!m.hp.length_normalize) return total;
  return t.scale(total, 1.0f / static_cast<float>(ids.size()));
}

Matrix glm_forward(const ModelState& m, const AssembledInput& in, std::span<const TokenId> target) {
  check_lengths(m, in.length(), target.size());
  Tape t(m.params);
  MemoryGraph mem = build_memory(t, m, in);
  const auto dec_in = decoder_input(target);
  return t.value(graph::decoder_logprobs(t, m, mem.memory, mem.key_mask, dec_in));
}

double glm_loss(const ModelState& m, const AssembledInput& in, std::span<const TokenId> target) {
  check_lengths(m, in.length(), target.size());
  Tape t(m.params);
  MemoryGraph mem = build_memory(t, m, in);
  return -static_cast<double>(t.scalar(t.sum(target_logprobs(t, m, mem, target))));
}

double sequence_logprob(const ModelState& m, const AssembledInput& in, std::span<const TokenId> ids) {
  check_lengths(m, in.length(), ids.size());
  Tape t(m.params);
  MemoryGraph mem = build_memory(t, m, in);
  return static_cast<double>(t.scalar(sequence_score(t, m, mem, ids)));
}

namespace {

bool allowed_token(TokenId id, std::size_t emitted) {
  switch (id) {
    case Vocabulary::kPad:
    case Vocabulary::kBos:
    case Vocabulary::kUnk:
    case Vocabulary::kReject:
      return false;
    case Vocabulary::kEos:
      return emitted >= 1;  // no empty completions
    default:
      return true;
  }
}

bool better(const Candidate& a, const Candidate& b) {
  if (a.seq_score != b.seq_score) return a.seq_score > b.seq_score;
  return std::lexicographical_compare(a.ids.begin(), a.ids.end(), b.ids.begin(), b.ids.end());
}

struct Hypothesis {
  std::vector<TokenId> ids;
  double raw = 0.0;
  std::size_t state = 0;
  Eigen::RowVectorXf next;
};

struct Expansion {
  std::size_t parent;
  TokenId token;
  double raw;
  double score;
};

class ModelStepper final : public StepModel {
 public:
  ModelStepper(const ModelState& m, const graph::EncodedMemory& mem) : m_(m), mem_(mem) {}

  std::size_t vocab_size() const override { return m_.vocab.size(); }

  std::size_t root(Eigen::RowVectorXf& logprobs) override {
    states_.push_back(graph::initial_decoder_state(m_));
    logprobs = graph::decoder_step(m_, mem_, states_.back(), Vocabulary::kBos);
    return states_.size() - 1;
  }

  std::size_t extend(std::size_t state, TokenId token, Eigen::RowVectorXf& logprobs) override {
    graph::DecoderState next = states_[state];
    logprobs = graph::decoder_step(m_, mem_, next, token);
    states_.push_back(std::move(next));
    return states_.size() - 1;
  }

 private:
  const ModelState& m_;
  const graph::EncodedMemory& mem_;
  std::vector<graph::DecoderState> states_;
};

}  // namespace

CandidateList beam_search(StepModel& model, const BeamOptions& opt, bool length_normalize) {
  if (opt.max_len < 1) throw ConfigError("max_len must be >= 1");
  if (opt.n < 1) throw ConfigError("n must be >= 1");
  if (opt.beam_width < opt.n) throw ConfigError("beam_width must be >= n");
  const auto norm = [length_normalize](double raw, std::size_t len) {
    return length_normalize ? raw / static_cast<double>(len) : raw;
  };

  Hypothesis root;
  root.state = model.root(root.next);
  Candidate reject;
  reject.ids = {Vocabulary::kReject};
  reject.is_reject = true;
  reject.seq_score = static_cast<double>(root.next(Vocabulary::kReject));

  std::vector<Candidate> finished;
  std::vector<Hypothesis> alive;
  alive.push_back(std::move(root));
  for (int step = 1; step <= opt.max_len && !alive.empty(); ++step) {
    std::vector<Expansion> grow;
    for (std::size_t h = 0; h < alive.size(); ++h) {
      const Hypothesis& hyp = alive[h];
      for (Eigen::Index c = 0; c < hyp.next.size(); ++c) {
        const auto tok = static_cast<TokenId>(c);
        if (!allowed_token(tok, hyp.ids.size())) continue;
        const double lp = hyp.next(c);
        if (!std::isfinite(lp)) continue;
        const double raw = hyp.raw + lp;
        if (tok == Vocabulary::kEos) {
          Candidate done;
          done.ids = hyp.ids;
          done.ids.push_back(tok);
          done.seq_score = norm(raw, done.ids.size());
          finished.push_back(std::move(done));
        } else if (step < opt.max_len) {
          grow.push_back({h, tok, raw, norm(raw, hyp.ids.size() + 1)});
        }
      }
    }
    // Rank partial hypotheses; ties resolve to the lexicographically smaller
    // sequence.
    std::sort(grow.begin(), grow.end(), [&alive](const Expansion& a, const Expansion& b) {
      if (a.score != b.score) return a.score > b.score;
      const auto& pa = alive[a.parent].ids;
      const auto& pb = alive[b.parent].ids;
      if (pa != pb) return std::lexicographical_compare(pa.begin(), pa.end(), pb.begin(), pb.end());
      return a.token < b.token;
    });
    if (grow.size() > static_cast<std::size_t>(opt.beam_width)) grow.resize(static_cast<std::size_t>(opt.beam_width));
    std::vector<Hypothesis> next_alive;
    next_alive.reserve(grow.size());
    for (const Expansion& e : grow) {
      Hypothesis h;
      h.ids = alive[e.parent].ids;
      h.ids.push_back(e.token);
      h.raw = e.raw;
      h.state = model.extend(alive[e.parent].state, e.token, h.next);
      next_alive.push_back(std::move(h));
    }
    alive = std::move(next_alive);
  }

  std::sort(finished.begin(), finished.end(), better);
  if (finished.size() > static_cast<std::size_t>(opt.n)) finished.resize(static_cast<std::size_t>(opt.n));
  CandidateList out;
  out.candidates = std::move(finished);
  if (std::isfinite(reject.seq_score)) out.candidates.push_back(std::move(reject));
  std::stable_sort(out.candidates.begin(), out.candidates.end(), better);
  for (std::size_t i = 0; i < out.candidates.size(); ++i) {
    if (out.candidates[i].is_reject) out.reject_index = i;
  }
  return out;
}

CandidateList beam_generate(const ModelState& m, const AssembledInput& in, const BeamOptions& opt) {
  if (opt.max_len < 1) throw ConfigError("max_len must be >= 1");
  check_lengths(m, in.length(), 1);
  BeamOptions capped = opt;
  capped.max_len = std::min(opt.max_len, m.hp.max_target_len);
  Tape t(m.params);
  MemoryGraph mg = build_memory(t, m, in);
  const graph::EncodedMemory mem = graph::prepare_memory(m, t.value(mg.memory), mg.key_mask);
  ModelStepper stepper(m, mem);
  return beam_search(stepper, capped, m.hp.length_normalize);
}

}  // namespace lad::glm
