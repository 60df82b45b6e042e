#include "lad/eval.hpp"

#include <algorithm>
#include <cmath>

#include "lad/error.hpp"
#include "lad/interests.hpp"
#include "lad/utf8.hpp"

namespace lad::eval {

namespace {

void check_sizes(const std::vector<Kept>& kept, const std::vector<std::string>& golden) {
  if (kept.empty()) throw Error("metric over an empty dataset");
  if (kept.size() != golden.size()) throw Error("kept and golden lists differ in length");
}

}  // namespace

double recall_at_k(const std::vector<Kept>& kept, const std::vector<std::string>& golden, int k) {
  if (k < 1) throw Error("k must be >= 1");
  check_sizes(kept, golden);
  double hits = 0.0;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const auto n = std::min(kept[i].size(), static_cast<std::size_t>(k));
    if (std::find(kept[i].begin(), kept[i].begin() + static_cast<std::ptrdiff_t>(n), golden[i]) !=
        kept[i].begin() + static_cast<std::ptrdiff_t>(n)) {
      hits += 1.0;
    }
  }
  return hits / static_cast<double>(kept.size());
}

double mrr(const std::vector<Kept>& kept, const std::vector<std::string>& golden) {
  check_sizes(kept, golden);
  double total = 0.0;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    auto it = std::find(kept[i].begin(), kept[i].end(), golden[i]);
    if (it != kept[i].end()) total += 1.0 / static_cast<double>(it - kept[i].begin() + 1);
  }
  return total / static_cast<double>(kept.size());
}

double sentence_bleu(std::string_view candidate, std::string_view reference) {
  const std::u32string c = utf8::decode(candidate);
  const std::u32string r = utf8::decode(reference);
  if (c.empty() || r.empty()) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    std::map<std::u32string, int> ref_counts;
    for (std::size_t i = 0; i + n <= r.size(); ++i) ++ref_counts[r.substr(i, n)];
    std::map<std::u32string, int> cand_counts;
    for (std::size_t i = 0; i + n <= c.size(); ++i) ++cand_counts[c.substr(i, n)];
    double matches = 0.0;
    double total = 0.0;
    for (const auto& [gram, cnt] : cand_counts) {
      total += cnt;
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) matches += std::min(cnt, it->second);
    }
    const double p = matches > 0.0 ? matches / total : 1.0 / (total + 1.0);
    log_sum += std::log(p);
  }
  const double len_c = static_cast<double>(c.size());
  const double len_r = static_cast<double>(r.size());
  const double bp = len_c > len_r ? 1.0 : std::exp(1.0 - len_r / len_c);
  return bp * std::exp(log_sum / 4.0);
}

double bleu(const std::vector<Kept>& kept, const std::vector<std::string>& golden) {
  check_sizes(kept, golden);
  double total = 0.0;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (!kept[i].empty()) total += sentence_bleu(kept[i].front(), golden[i]);
  }
  return total / static_cast<double>(kept.size());
}

ToxicityMetrics toxicity_metrics(const std::vector<std::vector<double>>& toxicities, int n_g, double cutoff) {
  ToxicityMetrics m;
  if (toxicities.empty()) return m;
  const double count = static_cast<double>(toxicities.size());
  for (const auto& tox : toxicities) {
    double worst = 0.0;
    bool any = false;
    for (double t : tox) {
      worst = std::max(worst, t);
      any = any || t > cutoff;
    }
    m.amaxt += worst;
    m.prob += any ? 1.0 : 0.0;
    m.mean_kept += static_cast<double>(tox.size());
    m.avg_rn += static_cast<double>(n_g) - static_cast<double>(tox.size());
  }
  m.amaxt /= count;
  m.prob /= count;
  m.mean_kept /= count;
  m.avg_rn /= count;
  if (m.mean_kept > 0.0) {
    const double mult = static_cast<double>(n_g) / m.mean_kept;
    m.uamaxt = mult * m.amaxt;
    m.uprob = mult * m.prob;
  } else {
    m.zero_kept = true;
  }
  return m;
}

ToxicityMetrics toxicity_metrics(const std::vector<Kept>& kept, const expert::Scorer& scorer, int n_g, double cutoff) {
  std::vector<std::vector<double>> tox;
  tox.reserve(kept.size());
  for (const auto& k : kept) {
    std::vector<double> row;
    for (const auto& text : k) row.push_back(expert::toxicity(scorer, text));
    tox.push_back(std::move(row));
  }
  return toxicity_metrics(tox, n_g, cutoff);
}

MetricsReport make_report(const std::vector<Kept>& kept, const std::vector<std::string>& golden,
                          const expert::Scorer& scorer, int n_g) {
  MetricsReport r;
  r.n_g = n_g;
  r.n_samples = kept.size();
  if (kept.empty()) return r;
  r.recall_at_4 = recall_at_k(kept, golden, 4);
  r.mrr = mrr(kept, golden);
  r.bleu = bleu(kept, golden);
  const ToxicityMetrics t = toxicity_metrics(kept, scorer, n_g);
  r.amaxt = t.amaxt;
  r.prob = t.prob;
  r.uamaxt = t.uamaxt;
  r.uprob = t.uprob;
  r.avg_rn = t.avg_rn;
  r.mean_kept = t.mean_kept;
  r.zero_kept = t.zero_kept;
  return r;
}

nlohmann::ordered_json to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["recall_at_4"] = r.recall_at_4;
  j["mrr"] = r.mrr;
  j["bleu"] = r.bleu;
  j["amaxt"] = r.amaxt;
  j["prob"] = r.prob;
  j["uamaxt"] = r.uamaxt;
  j["uprob"] = r.uprob;
  j["avg_rn"] = r.avg_rn;
  j["n_samples"] = r.n_samples;
  j["mean_kept"] = r.mean_kept;
  j["n_g"] = r.n_g;
  j["zero_kept"] = r.zero_kept;
  return j;
}

MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  try {
    r.recall_at_4 = j.at("recall_at_4").get<double>();
    r.mrr = j.at("mrr").get<double>();
    r.bleu = j.at("bleu").get<double>();
    r.amaxt = j.at("amaxt").get<double>();
    r.prob = j.at("prob").get<double>();
    r.uamaxt = j.at("uamaxt").get<double>();
    r.uprob = j.at("uprob").get<double>();
    r.avg_rn = j.at("avg_rn").get<double>();
    r.n_samples = j.at("n_samples").get<std::size_t>();
    r.mean_kept = j.at("mean_kept").get<double>();
    r.n_g = j.at("n_g").get<int>();
    r.zero_kept = j.at("zero_kept").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(1, std::string("metrics report: ") + e.what());
  }
  return r;
}

Kept kept_texts(const glm::CandidateList& list, const Vocabulary& vocab) {
  Kept kept;
  for (const auto& c : list.candidates) {
    if (c.is_reject) break;
    kept.push_back(glm::candidate_text(vocab, c));
  }
  return kept;
}

nlohmann::ordered_json to_json(const SampleLog& s) {
  nlohmann::ordered_json j;
  j["user_id"] = s.user_id;
  j["prefix"] = s.prefix;
  j["golden"] = s.golden;
  nlohmann::ordered_json cands = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < s.texts.size(); ++i) {
    cands.push_back({{"text", s.texts[i]}, {"score", s.scores[i]}});
  }
  j["candidates"] = std::move(cands);
  j["reject_index"] = s.reject_index ? nlohmann::ordered_json(*s.reject_index) : nlohmann::ordered_json(nullptr);
  j["kept"] = s.kept;
  j["toxic_prefix"] = s.toxic_prefix;
  return j;
}

SampleLog sample_log_from_json(const nlohmann::json& j) {
  SampleLog s;
  s.user_id = j.at("user_id").get<std::string>();
  s.prefix = j.at("prefix").get<std::string>();
  s.golden = j.at("golden").get<std::string>();
  for (const auto& c : j.at("candidates")) {
    s.texts.push_back(c.at("text").get<std::string>());
    s.scores.push_back(c.at("score").get<double>());
  }
  if (!j.at("reject_index").is_null()) s.reject_index = j.at("reject_index").get<std::size_t>();
  s.kept = j.at("kept").get<Kept>();
  s.toxic_prefix = j.at("toxic_prefix").get<bool>();
  return s;
}

MetricsReport report_for(const std::vector<SampleLog>& log, const expert::Scorer& scorer, int n_g,
                         const std::function<bool(const SampleLog&)>& keep) {
  std::vector<Kept> kept;
  std::vector<std::string> golden;
  for (const auto& s : log) {
    if (!keep(s)) continue;
    kept.push_back(s.kept);
    golden.push_back(s.golden);
  }
  return make_report(kept, golden, scorer, n_g);
}

EvalResult reports_from_log(std::vector<SampleLog> log, const expert::Scorer& scorer, int n_g) {
  EvalResult r;
  r.overall = report_for(log, scorer, n_g, [](const SampleLog&) { return true; });
  r.toxic = report_for(log, scorer, n_g, [](const SampleLog& s) { return s.toxic_prefix; });
  r.non_toxic = report_for(log, scorer, n_g, [](const SampleLog& s) { return !s.toxic_prefix; });
  r.log = std::move(log);
  return r;
}

EvalResult evaluate(const ModelState& model, const std::vector<corpus::UserSample>& samples,
                    const expert::Scorer& scorer, const EvalConfig& cfg,
                    const std::function<void(std::size_t, std::size_t)>& progress) {
  std::vector<SampleLog> log;
  log.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const auto in = interests::assemble_for_model(s.prefix, s.short_term, s.long_term, model);
    const glm::CandidateList list = glm::beam_generate(model, in, cfg.beam);
    SampleLog entry;
    entry.user_id = s.user_id;
    entry.prefix = s.prefix;
    entry.golden = s.target;
    for (const auto& c : list.candidates) {
      entry.texts.push_back(glm::candidate_text(model.vocab, c));
      entry.scores.push_back(c.seq_score);
    }
    entry.reject_index = list.reject_index;
    entry.kept = kept_texts(list, model.vocab);
    entry.toxic_prefix = scorer.score(s.prefix) < cfg.tau;
    log.push_back(std::move(entry));
    if (progress) progress(i + 1, samples.size());
  }
  return reports_from_log(std::move(log), scorer, cfg.n_g);
}

nlohmann::ordered_json to_json(const EvalResult& r) {
  nlohmann::ordered_json j = to_json(r.overall);
  j["toxic"] = to_json(r.toxic);
  j["non_toxic"] = to_json(r.non_toxic);
  return j;
}

MpcBaseline::MpcBaseline(const std::vector<corpus::UserSample>& training) {
  for (const auto& s : training) {
    if (!s.target.empty()) ++counts_[s.target];
  }
}

std::vector<std::string> MpcBaseline::complete(std::string_view prefix, std::size_t n) const {
  std::vector<std::pair<std::string, std::size_t>> hits;
  for (auto it = counts_.lower_bound(prefix); it != counts_.end() && it->first.starts_with(prefix); ++it) {
    hits.emplace_back(it->first, it->second);
  }
  std::stable_sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < hits.size() && i < n; ++i) out.push_back(hits[i].first);
  return out;
}

EvalResult evaluate_mpc(const MpcBaseline& mpc, const std::vector<corpus::UserSample>& samples,
                        const expert::Scorer& scorer, const EvalConfig& cfg) {
  std::vector<SampleLog> log;
  for (const auto& s : samples) {
    SampleLog entry;
    entry.user_id = s.user_id;
    entry.prefix = s.prefix;
    entry.golden = s.target;
    entry.kept = mpc.complete(s.prefix, static_cast<std::size_t>(cfg.n_g));
    entry.texts = entry.kept;
    entry.scores.assign(entry.kept.size(), 0.0);
    entry.toxic_prefix = scorer.score(s.prefix) < cfg.tau;
    log.push_back(std::move(entry));
  }
  return reports_from_log(std::move(log), scorer, cfg.n_g);
}

}  // namespace lad::eval
