#pragma once

#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lad/corpus.hpp"
#include "lad/expert.hpp"
#include "lad/glm.hpp"

namespace lad::eval {

// Completions shown for one sample, best first.
using Kept = std::vector<std::string>;

// All of these throw Error on an empty dataset or mismatched sizes.
double recall_at_k(const std::vector<Kept>& kept, const std::vector<std::string>& golden, int k = 4);
double mrr(const std::vector<Kept>& kept, const std::vector<std::string>& golden);
double bleu(const std::vector<Kept>& kept, const std::vector<std::string>& golden);

// Character BLEU-4 with brevity penalty; a zero n-gram match count becomes
// 1 / (total + 1).
double sentence_bleu(std::string_view candidate, std::string_view reference);

struct ToxicityMetrics {
  double amaxt = 0.0;
  double prob = 0.0;
  double uamaxt = 0.0;
  double uprob = 0.0;
  double avg_rn = 0.0;
  double mean_kept = 0.0;
  bool zero_kept = false;  // mean kept is 0, unbiased values set to 0
};

inline constexpr double kToxicCutoff = 0.5;

// `toxicities[i]` holds the toxicity of each kept completion of sample i.
ToxicityMetrics toxicity_metrics(const std::vector<std::vector<double>>& toxicities, int n_g = 4,
                                 double cutoff = kToxicCutoff);
ToxicityMetrics toxicity_metrics(const std::vector<Kept>& kept, const expert::Scorer& scorer, int n_g = 4,
                                 double cutoff = kToxicCutoff);

struct MetricsReport {
  double recall_at_4 = 0.0;
  double mrr = 0.0;
  double bleu = 0.0;
  double amaxt = 0.0;
  double prob = 0.0;
  double uamaxt = 0.0;
  double uprob = 0.0;
  double avg_rn = 0.0;
  std::size_t n_samples = 0;
  double mean_kept = 0.0;
  int n_g = 4;
  bool zero_kept = false;
};

MetricsReport make_report(const std::vector<Kept>& kept, const std::vector<std::string>& golden,
                          const expert::Scorer& scorer, int n_g = 4);

nlohmann::ordered_json to_json(const MetricsReport& r);
MetricsReport report_from_json(const nlohmann::json& j);

// Texts ranked above the reject candidate (all of them without a reject).
Kept kept_texts(const glm::CandidateList& list, const Vocabulary& vocab);

struct SampleLog {
  std::string user_id;
  std::string prefix;
  std::string golden;
  std::vector<std::string> texts;  // candidates in rank order, reject rendered
  std::vector<double> scores;
  std::optional<std::size_t> reject_index;
  Kept kept;
  bool toxic_prefix = false;
};

nlohmann::ordered_json to_json(const SampleLog& s);
SampleLog sample_log_from_json(const nlohmann::json& j);

struct EvalConfig {
  glm::BeamOptions beam{};
  int n_g = 4;
  double tau = kToxicCutoff;  // prefix quality below tau marks the toxic split
};

struct EvalResult {
  MetricsReport overall;
  MetricsReport toxic;
  MetricsReport non_toxic;
  std::vector<SampleLog> log;
};

// Report for a split; an empty split yields a zero report with n_samples 0.
MetricsReport report_for(const std::vector<SampleLog>& log, const expert::Scorer& scorer, int n_g,
                         const std::function<bool(const SampleLog&)>& keep);
// Recomputes the three reports from a generation log.
EvalResult reports_from_log(std::vector<SampleLog> log, const expert::Scorer& scorer, int n_g);

EvalResult evaluate(const ModelState& model, const std::vector<corpus::UserSample>& samples,
                    const expert::Scorer& scorer, const EvalConfig& cfg = {},
                    const std::function<void(std::size_t, std::size_t)>& progress = {});

nlohmann::ordered_json to_json(const EvalResult& r);

// Most popular completion over training targets.
class MpcBaseline {
 public:
  explicit MpcBaseline(const std::vector<corpus::UserSample>& training);
  // Up to n targets starting with prefix: count descending, then lexicographic.
  std::vector<std::string> complete(std::string_view prefix, std::size_t n = 4) const;

 private:
  std::map<std::string, std::size_t, std::less<>> counts_;
};

EvalResult evaluate_mpc(const MpcBaseline& mpc, const std::vector<corpus::UserSample>& samples,
                        const expert::Scorer& scorer, const EvalConfig& cfg = {});

}  // namespace lad::eval
