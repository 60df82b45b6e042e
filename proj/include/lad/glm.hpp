#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lad/graph.hpp"
#include "lad/interests.hpp"
#include "lad/model.hpp"
#include "lad/nn/tape.hpp"

namespace lad::glm {

using interests::AssembledInput;

// One generated completion. A reject candidate is exactly {kReject}.
struct Candidate {
  std::vector<TokenId> ids;
  double seq_score = 0.0;
  double expert_score = 0.0;
  bool is_reject = false;
};

struct CandidateList {
  std::vector<Candidate> candidates;
  std::optional<std::size_t> reject_index;

  std::size_t real_count() const;
};

struct BeamOptions {
  int n = 4;
  int beam_width = 4;
  int max_len = 24;  // generated tokens including EOS
};

// encode(text) followed by EOS.
std::vector<TokenId> make_target(const Vocabulary& vocab, std::string_view text);
// Candidate ids without the trailing EOS, rendered as text.
std::string candidate_text(const Vocabulary& vocab, const Candidate& c);

// Throws ShapeError when the input or target exceeds the model's limits.
void check_lengths(const ModelState& m, std::size_t input_len, std::size_t target_len);

// --- graph-level helpers (training) ---

struct MemoryGraph {
  nn::Var memory;
  std::vector<bool> key_mask;
};

// Encoder memory for a precomputed input (long vectors enter as constants).
MemoryGraph build_memory(nn::Tape& t, const ModelState& m, const AssembledInput& in);

// Encoder memory with the long-term encoder on the same tape, so gradients
// reach its parameters.
MemoryGraph build_memory_with_lte(nn::Tape& t, const ModelState& m, std::span<const TokenId> prefix_ids,
                                  std::span<const TokenId> short_ids,
                                  const std::vector<std::vector<TokenId>>& long_tokens);

// Column of per-token log P(target_i | target_<i, input).
nn::Var target_logprobs(nn::Tape& t, const ModelState& m, const MemoryGraph& mem, std::span<const TokenId> target);

// Sequence score: mean token log-prob, or the sum when length normalization
// is disabled.
nn::Var sequence_score(nn::Tape& t, const ModelState& m, const MemoryGraph& mem, std::span<const TokenId> ids);

// --- operations ---

// Row i is the log-probability distribution for target position i.
nn::Matrix glm_forward(const ModelState& m, const AssembledInput& in, std::span<const TokenId> target);

// Negative log-likelihood of the whole target.
double glm_loss(const ModelState& m, const AssembledInput& in, std::span<const TokenId> target);

double sequence_logprob(const ModelState& m, const AssembledInput& in, std::span<const TokenId> ids);

// Length-normalized beam search. The reject token may only be emitted first,
// where it ends its beam as the reject candidate; its score is always
// reported. Returns up to `n` real candidates plus the reject candidate,
// sorted by seq_score (ties: lexicographically smaller ids first).
CandidateList beam_generate(const ModelState& m, const AssembledInput& in, const BeamOptions& opt);

// Next-token distributions for beam search. beam_generate adapts the model to
// this; tests plug in hand-built distributions.
class StepModel {
 public:
  virtual ~StepModel() = default;
  virtual std::size_t vocab_size() const = 0;
  // State after BOS; fills the log-probabilities of the first emitted token.
  virtual std::size_t root(Eigen::RowVectorXf& logprobs) = 0;
  // State after appending `token` to `state`; fills the next log-probabilities.
  virtual std::size_t extend(std::size_t state, TokenId token, Eigen::RowVectorXf& logprobs) = 0;
};

CandidateList beam_search(StepModel& model, const BeamOptions& opt, bool length_normalize);

}  // namespace lad::glm
