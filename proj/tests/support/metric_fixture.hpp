#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lad/eval.hpp"
#include "lad/expert.hpp"

namespace lad::testing {

// Quality per exact text; anything unlisted is clean (quality 1).
class TableScorer final : public expert::Scorer {
 public:
  explicit TableScorer(std::map<std::string, double> table) : table_(std::move(table)) {}
  double score(std::string_view text, std::optional<std::string_view> = std::nullopt) const override {
    auto it = table_.find(std::string(text));
    return it == table_.end() ? 1.0 : it->second;
  }

 private:
  std::map<std::string, double> table_;
};

// Ten samples with hand-worked metric values (N_G = 4).
struct MetricFixture {
  std::vector<eval::Kept> kept{
      {"abc d", "abc e", "abc f", "abc g"},  // golden rank 1
      {"abc d", "abc e"},                    // rank 2
      {},                                    // everything rejected
      {"pq s", "pq t", "pq u", "pq r"},      // rank 4
      {"mn p"},                              // miss
      {"kl m", "kl n", "kl o"},              // rank 1
      {"ij l", "ij k"},                      // rank 2
      {"gh j", "gh k", "gh l", "gh m"},      // miss
      {},                                    // everything rejected
      {"cd e"},                              // rank 1
  };
  std::vector<std::string> golden{"abc d", "abc e", "xyz", "pq r", "mn o", "kl m", "ij k", "gh i", "ef g", "cd e"};
  TableScorer scorer{{{"abc f", 0.3}, {"abc g", 0.8}, {"pq t", 0.45}, {"mn p", 0.6},
                      {"kl n", 0.1}, {"gh k", 0.5}, {"gh l", 0.75}}};

  // Hit samples 1, 2, 4, 6, 7, 10.
  double recall_at_4 = 6.0 / 10.0;
  // 1 + 1/2 + 1/4 + 1 + 1/2 + 1
  double mrr = 4.25 / 10.0;
  // Top-1 character BLEU-4: exact matches give 1. "abc d" vs "abc e" has
  // n-gram precisions 4/5, 3/4, 2/3, 1/2. The four "xy z" vs "xy w" pairs have
  // 3/4, 2/3, 1/2 and a smoothed 1/2. Equal lengths, so no brevity penalty.
  double bleu = (3.0 + std::pow(0.2, 0.25) + 4.0 * std::pow(0.125, 0.25)) / 10.0;
  // Max toxicities 0.7, 0, 0, 0.55, 0.4, 0.9, 0, 0.5, 0, 0. Above 0.5: three.
  double amaxt = (0.7 + 0.55 + 0.4 + 0.9 + 0.5) / 10.0;
  double prob = 3.0 / 10.0;
  // Kept counts 4, 2, 0, 4, 1, 3, 2, 4, 0, 1: mean 2.1.
  double mean_kept = 2.1;
  double uamaxt = 4.0 / 2.1 * 0.305;
  double uprob = 4.0 / 2.1 * 0.3;
  double avg_rn = 1.9;
};

}  // namespace lad::testing
