#include "lad/interests.hpp"

#include <algorithm>

#include "lad/error.hpp"
#include "lad/graph.hpp"
#include "lad/nn/tape.hpp"

namespace lad::interests {

namespace {

template <typename T>
std::span<const T> most_recent(std::span<const T> items, int cap) {
  const auto keep = std::min<std::size_t>(items.size(), static_cast<std::size_t>(std::max(cap, 0)));
  return items.subspan(items.size() - keep);
}

}  // namespace

std::vector<std::vector<TokenId>> long_term_tokens(std::span<const std::string> behaviors, int long_max,
                                                   const ModelState& model, std::size_t* truncated) {
  const auto limit = static_cast<std::size_t>(model.hp.lte_max_len - 1);
  std::vector<std::vector<TokenId>> out;
  std::size_t cut = 0;
  for (const auto& b : most_recent(behaviors, long_max)) {
    auto ids = model.vocab.encode(b);
    if (ids.size() > limit) {
      ids.resize(limit);
      ++cut;
    }
    out.push_back(std::move(ids));
  }
  if (truncated) *truncated = cut;
  return out;
}

LongTermVectors encode_long_term(std::span<const std::string> behaviors, int long_max, const ModelState& model) {
  LongTermVectors out;
  const auto lists = long_term_tokens(behaviors, long_max, model, &out.truncated);
  nn::Tape t(model.params);
  out.vectors = t.value(graph::lte_summaries(t, model, lists));
  return out;
}

std::vector<TokenId> copy_short_term(std::span<const std::string> behaviors, int short_max, const Vocabulary& vocab,
                                     int per_behavior_cap) {
  std::vector<TokenId> out;
  bool first = true;
  for (const auto& b : most_recent(behaviors, short_max)) {
    auto ids = vocab.encode(b);
    if (static_cast<int>(ids.size()) > per_behavior_cap) ids.resize(static_cast<std::size_t>(per_behavior_cap));
    if (!first) out.push_back(Vocabulary::kEos);
    first = false;
    out.insert(out.end(), ids.begin(), ids.end());
  }
  return out;
}

AssembledInput assemble_input(std::string_view prefix, std::vector<TokenId> short_ids, LongTermVectors long_vectors,
                              const Vocabulary& vocab, int prefix_cap) {
  AssembledInput in;
  in.prefix_ids = vocab.encode(prefix);
  if (in.prefix_ids.empty()) throw Error("empty prefix: nothing to complete");
  if (static_cast<int>(in.prefix_ids.size()) > prefix_cap) in.prefix_ids.resize(static_cast<std::size_t>(prefix_cap));
  in.short_ids = std::move(short_ids);
  in.long_vectors = std::move(long_vectors);
  in.segment_tags.insert(in.segment_tags.end(), in.prefix_ids.size(), Segment::kPrefix);
  in.segment_tags.insert(in.segment_tags.end(), in.short_ids.size(), Segment::kShort);
  in.segment_tags.insert(in.segment_tags.end(), in.long_vectors.count(), Segment::kLong);
  return in;
}

AssembledInput assemble_for_model(std::string_view prefix, std::span<const std::string> short_term,
                                  std::span<const std::string> long_term, const ModelState& model) {
  auto short_ids = copy_short_term(short_term, model.hp.short_max, model.vocab, model.hp.short_behavior_max_tokens);
  auto long_vectors = encode_long_term(long_term, model.hp.long_max, model);
  return assemble_input(prefix, std::move(short_ids), std::move(long_vectors), model.vocab,
                        model.hp.prefix_max_tokens);
}

}  // namespace lad::interests
