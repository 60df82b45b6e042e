#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "lad/model.hpp"
#include "lad/nn/tape.hpp"

// Computation graphs shared by training and inference. Every forward value in
// the library is produced by these builders, so a no-grad tape and a
// recording tape yield bit-identical activations.
namespace lad::graph {

// With non-empty `blocks`, self-attention is restricted to the diagonal
// blocks starting at those rows (packed independent sequences).
nn::Var encoder_layer(nn::Tape& t, const Hyperparameters& hp, const EncoderLayerIds& l, nn::Var x,
                      const std::vector<bool>* key_mask, std::span<const nn::Index> blocks = {});

// One summary row per long-term behavior (lists.size() x dim). Each list must
// already be capped to lte_max_len - 1 tokens. Identical lists are encoded
// once and share their row.
nn::Var lte_summaries(nn::Tape& t, const ModelState& m, const std::vector<std::vector<TokenId>>& lists);

// Rows [prefix; short; long] with segment and position signals, run through
// the encoder stack. `long_rows` may have zero rows. PAD positions are
// reported as hidden keys in `key_mask`.
nn::Var encode_memory(nn::Tape& t, const ModelState& m, std::span<const TokenId> prefix_ids,
                      std::span<const TokenId> short_ids, nn::Var long_rows, std::vector<bool>& key_mask);

// Teacher-forced decoder: one log-probability row per decoder input token.
nn::Var decoder_logprobs(nn::Tape& t, const ModelState& m, nn::Var memory, const std::vector<bool>& key_mask,
                         std::span<const TokenId> decoder_input);

// Encoder output plus per-layer cross-attention keys/values, for step-wise
// decoding.
struct EncodedMemory {
  nn::Matrix memory;
  std::vector<bool> key_mask;
  std::vector<nn::Matrix> cross_k;
  std::vector<nn::Matrix> cross_v;
};

struct DecoderState {
  std::vector<nn::Matrix> self_k;
  std::vector<nn::Matrix> self_v;
  int position = 0;
};

EncodedMemory prepare_memory(const ModelState& m, nn::Matrix memory, std::vector<bool> key_mask);
DecoderState initial_decoder_state(const ModelState& m);

// Feeds `token` at the state's next position; returns log-probabilities over
// the vocabulary for the following position.
Eigen::RowVectorXf decoder_step(const ModelState& m, const EncodedMemory& mem, DecoderState& state, TokenId token);

}  // namespace lad::graph
