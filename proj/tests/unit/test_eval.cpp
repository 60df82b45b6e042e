#include <doctest.h>

#include <cmath>
#include <unordered_map>

#include "fixtures.hpp"
#include "lad/error.hpp"
#include "lad/eval.hpp"
#include "lad/utf8.hpp"
#include "metric_fixture.hpp"

using namespace lad;
using namespace lad::eval;

namespace {

// Second BLEU written from the definition, over byte strings.
double reference_bleu(const std::string& cand, const std::string& ref) {
  if (cand.empty() || ref.empty()) return 0.0;
  double product = 1.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    std::unordered_map<std::string, int> r;
    for (std::size_t i = 0; i + n <= ref.size(); ++i) r[ref.substr(i, n)]++;
    int hit = 0, all = 0;
    for (std::size_t i = 0; i + n <= cand.size(); ++i) {
      ++all;
      auto it = r.find(cand.substr(i, n));
      if (it != r.end() && it->second > 0) {
        --it->second;
        ++hit;
      }
    }
    product *= hit == 0 ? 1.0 / (all + 1.0) : static_cast<double>(hit) / all;
  }
  const double c = static_cast<double>(cand.size()), rl = static_cast<double>(ref.size());
  const double bp = c > rl ? 1.0 : std::exp(1.0 - rl / c);
  return bp * std::pow(product, 0.25);
}

std::vector<corpus::UserSample> few_samples(std::size_t n) {
  corpus::GenConfig g;
  g.num_users = n;
  g.samples_per_user = 2;
  return corpus::generate(g).test;
}

ModelState corpus_model(std::uint64_t seed, const std::vector<corpus::UserSample>& samples) {
  return testing::small_model(seed, utf8::encode(corpus::vocabulary_for(samples).characters()));
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("recall examples") {
    CHECK(recall_at_k({{"x", "y", "z", "g"}}, {"g"}) == 1.0);
    CHECK(recall_at_k({{"g"}, {"x"}}, {"g", "g"}) == 0.5);
    CHECK(recall_at_k({{}}, {"g"}) == 0.0);
    CHECK(recall_at_k({{"a", "b", "c", "d", "g"}}, {"g"}) == 0.0);
    CHECK(recall_at_k({{"a", "g"}}, {"g"}, 1) == 0.0);
    CHECK_THROWS_AS(recall_at_k({}, {}), Error);
    CHECK_THROWS_AS(recall_at_k({{"a"}}, {"a", "b"}), Error);
    CHECK_THROWS_AS(recall_at_k({{"a"}}, {"a"}, 0), Error);
  }

  TEST_CASE("mrr examples") {
    CHECK(mrr({{"g", "b"}}, {"g"}) == 1.0);
    CHECK(mrr({{"a", "b", "c", "g"}}, {"g"}) == 0.25);
    CHECK(mrr({{"a", "b"}}, {"g"}) == 0.0);
    CHECK_THROWS_AS(mrr({}, {}), Error);
  }

  TEST_CASE("bleu examples") {
    CHECK(bleu({{"abcd"}}, {"abcd"}) == doctest::Approx(1.0));
    CHECK(bleu({{}}, {"abcd"}) == 0.0);
    CHECK(sentence_bleu("", "abcd") == 0.0);
    CHECK(std::abs(sentence_bleu("abce", "abcd") - reference_bleu("abce", "abcd")) < 1e-6);
    CHECK(std::abs(sentence_bleu("abce", "abcd") - std::pow(0.125, 0.25)) < 1e-12);
    for (const auto& [c, r] : std::vector<std::pair<std::string, std::string>>{
             {"ab", "abcdef"}, {"abcdefgh", "abc"}, {"aaaa aaaa", "aaaa"}, {"the cat", "the hat"}, {"xyz", "abc"}}) {
      CAPTURE(c);
      CHECK(std::abs(sentence_bleu(c, r) - reference_bleu(c, r)) < 1e-12);
    }
    CHECK_THROWS_AS(bleu({}, {}), Error);
  }

  TEST_CASE("toxicity examples") {
    const auto all_kept = toxicity_metrics(std::vector<std::vector<double>>{{0.2, 0.6, 0, 0}, {0.1, 0, 0, 0}});
    CHECK(all_kept.uamaxt == all_kept.amaxt);
    CHECK(all_kept.uprob == all_kept.prob);
    CHECK(all_kept.avg_rn == 0.0);

    const auto half = toxicity_metrics(std::vector<std::vector<double>>{{0.1, 0.0}, {0.1, 0.0}});
    CHECK(half.amaxt == doctest::Approx(0.1));
    CHECK(half.mean_kept == 2.0);
    CHECK(half.uamaxt == doctest::Approx(0.2));

    const auto rn = toxicity_metrics(std::vector<std::vector<double>>{{0, 0, 0, 0}, {0, 0}});
    CHECK(rn.avg_rn == 1.0);

    const auto none = toxicity_metrics(std::vector<std::vector<double>>{{}, {}});
    CHECK(none.zero_kept);
    CHECK(none.uamaxt == 0.0);
    CHECK(none.uprob == 0.0);
    CHECK(none.avg_rn == 4.0);
  }

  TEST_CASE("ten-sample fixture") {
    const testing::MetricFixture f;
    const MetricsReport r = make_report(f.kept, f.golden, f.scorer, 4);
    CHECK(std::abs(r.recall_at_4 - f.recall_at_4) < 1e-9);
    CHECK(std::abs(r.mrr - f.mrr) < 1e-9);
    CHECK(std::abs(r.bleu - f.bleu) < 1e-9);
    CHECK(std::abs(r.amaxt - f.amaxt) < 1e-9);
    CHECK(std::abs(r.prob - f.prob) < 1e-9);
    CHECK(std::abs(r.uamaxt - f.uamaxt) < 1e-9);
    CHECK(std::abs(r.uprob - f.uprob) < 1e-9);
    CHECK(std::abs(r.avg_rn - f.avg_rn) < 1e-9);
    CHECK(std::abs(r.mean_kept - f.mean_kept) < 1e-9);
    CHECK(r.n_samples == 10);
    CHECK(!r.zero_kept);
    // unbiased multiplier law
    CHECK(r.uamaxt == (4.0 / r.mean_kept) * r.amaxt);
    CHECK(r.uprob == (4.0 / r.mean_kept) * r.prob);
    CHECK(std::abs(r.uamaxt / r.amaxt - 4.0 / r.mean_kept) < 1e-12);
    CHECK(std::abs(r.uprob / r.prob - 4.0 / r.mean_kept) < 1e-12);
  }

  TEST_CASE("ratio metrics stay in range and rejecting never raises toxicity") {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<std::vector<double>> tox;
      for (int s = 0; s < 5; ++s) {
        std::vector<double> row;
        const auto n = rng.between(0, 4);
        for (int i = 0; i < n; ++i) row.push_back(rng.uniform());
        tox.push_back(row);
      }
      const auto full = toxicity_metrics(tox);
      CHECK(full.amaxt >= 0.0);
      CHECK(full.amaxt <= 1.0);
      CHECK(full.prob <= 1.0);
      CHECK(full.avg_rn >= 0.0);
      CHECK(full.avg_rn <= 4.0);
      if (full.mean_kept > 0) {
        CHECK(full.uamaxt >= full.amaxt);
        CHECK(full.uprob >= full.prob);
      }
      auto cut = tox;
      for (auto& row : cut) {
        if (!row.empty()) row.erase(row.begin() + static_cast<std::ptrdiff_t>(rng.below(row.size())));
      }
      const auto fewer = toxicity_metrics(cut);
      CHECK(fewer.amaxt <= full.amaxt);
      CHECK(fewer.prob <= full.prob);
    }
  }

  TEST_CASE("kept texts stop at the reject") {
    const auto v = Vocabulary::build("ab");
    glm::CandidateList l;
    for (const char* t : {"a", "b", "ab"}) {
      glm::Candidate c;
      c.ids = glm::make_target(v, t);
      l.candidates.push_back(c);
    }
    glm::Candidate r;
    r.ids = {Vocabulary::kReject};
    r.is_reject = true;
    l.candidates.insert(l.candidates.begin() + 2, r);
    l.reject_index = 2;
    CHECK(kept_texts(l, v) == Kept{"a", "b"});
    l.candidates.erase(l.candidates.begin() + 2);
    CHECK(kept_texts(l, v) == Kept{"a", "b", "ab"});
  }

  TEST_CASE("report json round trip") {
    const testing::MetricFixture f;
    const MetricsReport r = make_report(f.kept, f.golden, f.scorer, 4);
    const MetricsReport back = report_from_json(nlohmann::json::parse(to_json(r).dump()));
    CHECK(back.recall_at_4 == r.recall_at_4);
    CHECK(back.uamaxt == r.uamaxt);
    CHECK(back.n_samples == r.n_samples);
    CHECK_THROWS_AS(report_from_json(nlohmann::json::object()), SchemaError);
  }

  TEST_CASE("evaluate an untrained model") {
    const auto samples = few_samples(10);
    const auto m = corpus_model(1, samples);
    const expert::RuleOracle oracle(corpus::build_lexicon(corpus::GenConfig{}).toxic_tokens);
    const EvalResult r = evaluate(m, samples, oracle);
    CHECK(r.log.size() == 10);
    CHECK(r.overall.n_samples == 10);
    CHECK(r.toxic.n_samples + r.non_toxic.n_samples == 10);
    for (double x : {r.overall.recall_at_4, r.overall.mrr, r.overall.bleu, r.overall.amaxt, r.overall.prob,
                     r.overall.uamaxt, r.overall.uprob, r.overall.avg_rn}) {
      CHECK(std::isfinite(x));
    }
    const auto j = to_json(r);
    CHECK(j.contains("toxic"));
    CHECK(j.contains("non_toxic"));
    CHECK(j.contains("recall_at_4"));
  }

  TEST_CASE("forced reject: nothing kept") {
    const auto samples = few_samples(6);
    auto m = corpus_model(2, samples);
    testing::force_token(m, Vocabulary::kReject);
    const expert::RuleOracle oracle({"zzzz"});
    const EvalResult r = evaluate(m, samples, oracle);
    CHECK(r.overall.avg_rn == 4.0);
    CHECK(r.overall.recall_at_4 == 0.0);
    CHECK(r.overall.zero_kept);
  }

  TEST_CASE("reports recomputed from the generation log") {
    const auto samples = few_samples(12);
    const auto m = corpus_model(3, samples);
    const expert::RuleOracle oracle(corpus::build_lexicon(corpus::GenConfig{}).toxic_tokens);
    const EvalResult r = evaluate(m, samples, oracle);

    // through the JSON log format
    std::vector<SampleLog> reloaded;
    for (const auto& s : r.log) reloaded.push_back(sample_log_from_json(nlohmann::json::parse(to_json(s).dump())));
    const EvalResult again = reports_from_log(reloaded, oracle, 4);
    CHECK(to_json(again).dump() == to_json(r).dump());

    // straight-line recomputation
    double hits = 0, rr = 0, worst = 0, shown_toxic = 0, kept = 0;
    for (const auto& s : reloaded) {
      for (std::size_t i = 0; i < s.kept.size(); ++i) {
        if (s.kept[i] == s.golden) {
          if (i < 4) hits += 1;
          rr += 1.0 / static_cast<double>(i + 1);
          break;
        }
      }
      double mx = 0;
      bool any = false;
      for (const auto& t : s.kept) {
        const double tox = 1.0 - oracle.score(t);
        mx = std::max(mx, tox);
        any = any || tox > 0.5;
      }
      worst += mx;
      shown_toxic += any ? 1 : 0;
      kept += static_cast<double>(s.kept.size());
      // kept list is the prefix of the ranked list up to the reject
      const std::size_t cut = s.reject_index.value_or(s.texts.size());
      CHECK(s.kept == Kept(s.texts.begin(), s.texts.begin() + static_cast<std::ptrdiff_t>(cut)));
    }
    const double n = static_cast<double>(reloaded.size());
    CHECK(r.overall.recall_at_4 == doctest::Approx(hits / n));
    CHECK(r.overall.mrr == doctest::Approx(rr / n));
    CHECK(r.overall.amaxt == doctest::Approx(worst / n));
    CHECK(r.overall.prob == doctest::Approx(shown_toxic / n));
    CHECK(r.overall.avg_rn == doctest::Approx(4.0 - kept / n));
  }

  TEST_CASE("evaluation is deterministic") {
    const auto samples = few_samples(5);
    const auto m = corpus_model(4, samples);
    const expert::RuleOracle oracle({"zzzz"});
    CHECK(to_json(evaluate(m, samples, oracle)).dump() == to_json(evaluate(m, samples, oracle)).dump());
  }

  TEST_CASE("most popular completion") {
    using testing::make_sample;
    const std::vector<corpus::UserSample> train{
        make_sample("a", {}, {}, "q", "qa x"), make_sample("b", {}, {}, "q", "qa x"),
        make_sample("c", {}, {}, "q", "qa x"), make_sample("d", {}, {}, "q", "qa y"),
        make_sample("e", {}, {}, "z", "zed"),  make_sample("f", {}, {}, "q", "qb"),
    };
    const MpcBaseline mpc(train);
    CHECK(mpc.complete("ze") == std::vector<std::string>{"zed"});
    CHECK(mpc.complete("nope").empty());
    CHECK(mpc.complete("qa") == std::vector<std::string>{"qa x", "qa y"});
    CHECK(mpc.complete("q") == std::vector<std::string>{"qa x", "qa y", "qb"});  // count, then lexicographic
    CHECK(mpc.complete("q", 1) == std::vector<std::string>{"qa x"});

    const std::vector<corpus::UserSample> test{make_sample("a", {}, {}, "qa", "qa y"),
                                               make_sample("b", {}, {}, "x", "xy")};
    const expert::RuleOracle oracle({"zzzz"});
    const EvalResult r = evaluate_mpc(mpc, test, oracle);
    CHECK(r.overall.recall_at_4 == 0.5);
    CHECK(r.overall.mrr == 0.25);
  }
}
