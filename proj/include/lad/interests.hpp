#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lad/model.hpp"
#include "lad/nn/parameters.hpp"
#include "lad/vocab.hpp"

namespace lad::interests {

enum class Segment : std::uint8_t { kPrefix = 0, kShort = 1, kLong = 2 };

// One LTE summary vector per kept long-term behavior, oldest first.
struct LongTermVectors {
  nn::Matrix vectors;
  std::size_t truncated = 0;  // behaviors cut to the LTE length limit

  std::size_t count() const { return static_cast<std::size_t>(vectors.rows()); }
};

// Generator input in [prefix, short-term, long-term] order.
struct AssembledInput {
  std::vector<TokenId> prefix_ids;
  std::vector<TokenId> short_ids;
  LongTermVectors long_vectors;
  std::vector<Segment> segment_tags;

  std::size_t length() const { return segment_tags.size(); }
};

// Keeps the most recent `long_max` behaviors and tokenizes each, truncating to
// the LTE limit. `truncated` (optional) receives the number of cut behaviors.
std::vector<std::vector<TokenId>> long_term_tokens(std::span<const std::string> behaviors, int long_max,
                                                   const ModelState& model, std::size_t* truncated = nullptr);

LongTermVectors encode_long_term(std::span<const std::string> behaviors, int long_max, const ModelState& model);

// Identity copy of the most recent `short_max` behaviors, each capped at
// `per_behavior_cap` tokens, joined with EOS separators.
std::vector<TokenId> copy_short_term(std::span<const std::string> behaviors, int short_max, const Vocabulary& vocab,
                                     int per_behavior_cap = 10);

// Throws Error when the prefix encodes to nothing. The prefix is cut to
// `prefix_cap` tokens, keeping the leading characters.
AssembledInput assemble_input(std::string_view prefix, std::vector<TokenId> short_ids, LongTermVectors long_vectors,
                              const Vocabulary& vocab, int prefix_cap = 10);

// Convenience: full assembly from raw behaviors using the model's S/L caps.
AssembledInput assemble_for_model(std::string_view prefix, std::span<const std::string> short_term,
                                  std::span<const std::string> long_term, const ModelState& model);

}  // namespace lad::interests
