#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lad/glm.hpp"

namespace lad::expert {

enum class ExpertKind { kRuleOracle, kLearned };

struct ExpertConfig {
  ExpertKind kind = ExpertKind::kRuleOracle;
  std::filesystem::path toxic_token_manifest;
  double epsilon = 0.6;

  void validate() const;  // throws ConfigError
};

ExpertKind parse_kind(std::string_view name);

// Penalties of the rule oracle; quality = 1 - max(applicable penalties).
struct PenaltyTable {
  static constexpr double kToxic = 0.9;
  static constexpr double kUnkBase = 0.5;  // plus kUnkBase * density
  static constexpr double kDuplicate = 0.6;
  static constexpr double kIrrelevant = 0.6;
  static constexpr double kMinPrefixOverlap = 0.5;
};

class Scorer {
 public:
  virtual ~Scorer() = default;
  // Quality in [0,1]; higher is better. With `prefix`, completions that do
  // not continue it are penalized.
  virtual double score(std::string_view text, std::optional<std::string_view> prefix = std::nullopt) const = 0;
};

class RuleOracle final : public Scorer {
 public:
  explicit RuleOracle(std::vector<std::string> toxic_tokens);
  static RuleOracle from_manifest(const std::filesystem::path& path);

  double score(std::string_view text, std::optional<std::string_view> prefix = std::nullopt) const override;
  const std::vector<std::string>& toxic_tokens() const { return toxic_; }

 private:
  std::vector<std::string> toxic_;
};

// Throws ConfigError for the learned kind, which this build does not ship.
std::unique_ptr<Scorer> make_expert(const ExpertConfig& cfg);

// Toxicity used by the metrics: exactly 1 - quality.
inline double toxicity(const Scorer& s, std::string_view text) { return 1.0 - s.score(text); }

// Fills expert_score and sorts descending, stable under ties. Throws Error if
// the list already holds a reject.
glm::CandidateList rank_candidates(const Scorer& scorer, glm::CandidateList list, const Vocabulary& vocab,
                                   std::optional<std::string_view> prefix = std::nullopt);

}  // namespace lad::expert
