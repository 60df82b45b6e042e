#include "lad/expert.hpp"

#include <algorithm>
#include <map>
#include <string>

#include "lad/corpus.hpp"
#include "lad/error.hpp"
#include "lad/utf8.hpp"

namespace lad::expert {

void ExpertConfig::validate() const {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must be in [0,1]");
}

ExpertKind parse_kind(std::string_view name) {
  if (name == "rule_oracle") return ExpertKind::kRuleOracle;
  if (name == "learned") return ExpertKind::kLearned;
  throw ConfigError("unknown expert kind \"" + std::string(name) + "\"");
}

RuleOracle::RuleOracle(std::vector<std::string> toxic_tokens) : toxic_(std::move(toxic_tokens)) {
  std::erase_if(toxic_, [](const std::string& t) { return t.empty(); });
}

RuleOracle RuleOracle::from_manifest(const std::filesystem::path& path) {
  try {
    return RuleOracle(corpus::load_token_manifest(path));
  } catch (const IoError& e) {
    throw ConfigError(std::string("toxic token manifest: ") + e.what());
  }
}

namespace {

constexpr std::u32string_view kUnkMarker = U"[UNK]";

// Counts unknown-character markers and returns the text with each marker
// collapsed to a single U+FFFD.
std::u32string collapse_unknowns(std::u32string text, std::size_t& unknowns) {
  std::u32string out;
  unknowns = 0;
  for (std::size_t i = 0; i < text.size();) {
    if (text.compare(i, kUnkMarker.size(), kUnkMarker) == 0) {
      out.push_back(U'\uFFFD');
      ++unknowns;
      i += kUnkMarker.size();
      continue;
    }
    if (text[i] == U'\uFFFD') ++unknowns;
    out.push_back(text[i++]);
  }
  return out;
}

bool has_duplicate(const std::u32string& s) {
  // adjacent repeated word
  std::vector<std::u32string> words;
  std::u32string cur;
  for (char32_t c : s) {
    if (c == U' ') {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  for (std::size_t i = 1; i < words.size(); ++i) {
    if (words[i] == words[i - 1]) return true;
  }
  // character 4-gram seen twice without overlap
  constexpr std::size_t n = 4;
  std::map<std::u32string, std::size_t> first;
  for (std::size_t i = 0; i + n <= s.size(); ++i) {
    auto [it, fresh] = first.emplace(s.substr(i, n), i);
    if (!fresh && i >= it->second + n) return true;
  }
  return false;
}

}  // namespace

double RuleOracle::score(std::string_view text, std::optional<std::string_view> prefix) const {
  if (text.empty()) return 0.0;
  double penalty = 0.0;
  for (const auto& tok : toxic_) {
    if (text.find(tok) != std::string_view::npos) {
      penalty = std::max(penalty, PenaltyTable::kToxic);
      break;
    }
  }
  std::size_t unknowns = 0;
  const std::u32string cps = collapse_unknowns(utf8::decode(text), unknowns);
  if (unknowns > 0) {
    const double density = static_cast<double>(unknowns) / static_cast<double>(cps.size());
    penalty = std::max(penalty, PenaltyTable::kUnkBase + PenaltyTable::kUnkBase * density);
  }
  if (has_duplicate(cps)) penalty = std::max(penalty, PenaltyTable::kDuplicate);
  if (prefix && !prefix->empty()) {
    const std::u32string p = utf8::decode(*prefix);
    std::size_t lcp = 0;
    while (lcp < p.size() && lcp < cps.size() && p[lcp] == cps[lcp]) ++lcp;
    if (static_cast<double>(lcp) / static_cast<double>(p.size()) < PenaltyTable::kMinPrefixOverlap) {
      penalty = std::max(penalty, PenaltyTable::kIrrelevant);
    }
  }
  return std::clamp(1.0 - penalty, 0.0, 1.0);
}

std::unique_ptr<Scorer> make_expert(const ExpertConfig& cfg) {
  cfg.validate();
  switch (cfg.kind) {
    case ExpertKind::kRuleOracle:
      return std::make_unique<RuleOracle>(RuleOracle::from_manifest(cfg.toxic_token_manifest));
    case ExpertKind::kLearned:
      break;
  }
  throw ConfigError("expert kind \"learned\" is not available in this build; use rule_oracle");
}

glm::CandidateList rank_candidates(const Scorer& scorer, glm::CandidateList list, const Vocabulary& vocab,
                                   std::optional<std::string_view> prefix) {
  for (auto& c : list.candidates) {
    if (c.is_reject) throw Error("rank_candidates: list already contains a reject");
    c.expert_score = scorer.score(glm::candidate_text(vocab, c), prefix);
  }
  std::stable_sort(list.candidates.begin(), list.candidates.end(),
                   [](const glm::Candidate& a, const glm::Candidate& b) { return a.expert_score > b.expert_score; });
  list.reject_index.reset();
  return list;
}

}  // namespace lad::expert
