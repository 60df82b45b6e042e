#include "lad/rpo.hpp"

#include <chrono>
#include <cmath>
#include <map>

#include <json.hpp>

#include "lad/error.hpp"
#include "lad/interests.hpp"

namespace lad::rpo {

using glm::Candidate;
using glm::CandidateList;
using nn::Tape;
using nn::Var;

bool is_reject_ids(std::span<const TokenId> ids) { return ids.size() == 1 && ids[0] == Vocabulary::kReject; }

CandidateList inject_reject(CandidateList ranked, double epsilon) {
  std::size_t at = ranked.candidates.size();
  for (std::size_t i = 0; i < ranked.candidates.size(); ++i) {
    if (ranked.candidates[i].is_reject) throw Error("inject_reject: list already contains a reject");
    if (ranked.candidates[i].expert_score < epsilon && at == ranked.candidates.size()) at = i;
  }
  Candidate r;
  r.ids = {Vocabulary::kReject};
  r.is_reject = true;
  r.expert_score = epsilon;
  ranked.candidates.insert(ranked.candidates.begin() + static_cast<std::ptrdiff_t>(at), std::move(r));
  ranked.reject_index = at;
  return ranked;
}

std::vector<PreferencePair> build_pairs(const CandidateList& injected) {
  if (!injected.reject_index) throw Error("build_pairs: list has no reject_index");
  const std::size_t r = *injected.reject_index;
  if (r >= injected.candidates.size() || !injected.candidates[r].is_reject) {
    throw Error("build_pairs: reject_index does not point at the reject");
  }
  const std::vector<TokenId> reject = injected.candidates[r].ids;
  std::vector<PreferencePair> pairs;
  for (std::size_t i = 0; i < injected.candidates.size(); ++i) {
    if (i == r) continue;
    const auto& ids = injected.candidates[i].ids;
    if (i < r) {
      pairs.push_back({ids, reject, PairKind::kPlusVsReject});
    } else {
      pairs.push_back({reject, ids, PairKind::kRejectVsMinus});
    }
  }
  return pairs;
}

double rpo_loss_from_margins(std::span<const double> deltas) {
  double loss = 0.0;
  for (double d : deltas) loss += -(std::min(d, 0.0) - std::log1p(std::exp(-std::abs(d))));
  return loss;
}

Var rpo_loss_graph(Tape& t, const ModelState& m, const glm::MemoryGraph& mem, const std::vector<PreferencePair>& pairs,
                   std::optional<Var> reject_score) {
  if (pairs.empty()) return t.constant(nn::Matrix::Zero(1, 1));
  std::map<std::vector<TokenId>, Var> scores;
  const auto score_of = [&](const std::vector<TokenId>& ids) -> Var {
    if (is_reject_ids(ids) && reject_score) return *reject_score;
    auto it = scores.find(ids);
    if (it != scores.end()) return it->second;
    Var s = glm::sequence_score(t, m, mem, ids);
    scores.emplace(ids, s);
    return s;
  };
  std::vector<Var> terms;
  for (const auto& p : pairs) {
    Var delta = t.sub(score_of(p.better), score_of(p.worse));
    terms.push_back(t.log_sigmoid(delta));
  }
  return t.scale(t.sum(t.concat_rows(terms)), -1.0f);
}

double rpo_loss(const std::vector<PreferencePair>& pairs, const glm::AssembledInput& in, const ModelState& m) {
  if (pairs.empty()) return 0.0;
  glm::check_lengths(m, in.length(), 1);
  Tape t(m.params);
  glm::MemoryGraph mem = glm::build_memory(t, m, in);
  return static_cast<double>(t.scalar(rpo_loss_graph(t, m, mem, pairs)));
}

Stage parse_stage(std::string_view name) {
  if (name == "glm") return Stage::kGlmOnly;
  if (name == "rpo") return Stage::kGlmPlusRpo;
  throw ConfigError("unknown stage \"" + std::string(name) + "\" (expected glm or rpo)");
}

void TrainConfig::validate() const {
  if (steps < 0) throw ConfigError("steps must be >= 0");
  if (steps == 0 && epochs < 1) throw ConfigError("epochs must be >= 1 when steps is 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (grad_accumulation < 1) throw ConfigError("grad_accumulation must be >= 1");
  if (warmup_steps < 0) throw ConfigError("warmup_steps must be >= 0");
  if (!(peak_lr > 0.0f)) throw ConfigError("peak_lr must be > 0");
  if (!(lr_floor_fraction >= 0.0f && lr_floor_fraction <= 1.0f)) throw ConfigError("lr_floor_fraction must be in [0,1]");
  if (!(clip_norm >= 0.0f)) throw ConfigError("clip_norm must be >= 0");
  if (n < 1) throw ConfigError("n must be >= 1");
  if (beam_width < n) throw ConfigError("beam_width must be >= n");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must be in [0,1]");
  if (!(glm_weight >= 0.0f) || !(rpo_weight >= 0.0f)) throw ConfigError("loss weights must be >= 0");
}

PreparedSample prepare(const corpus::UserSample& s, const ModelState& m) {
  PreparedSample p;
  p.prefix = s.prefix;
  p.target_text = s.target;
  auto short_ids = interests::copy_short_term(s.short_term, m.hp.short_max, m.vocab, m.hp.short_behavior_max_tokens);
  auto in = interests::assemble_input(s.prefix, std::move(short_ids), {}, m.vocab, m.hp.prefix_max_tokens);
  p.prefix_ids = std::move(in.prefix_ids);
  p.short_ids = std::move(in.short_ids);
  p.long_tokens = interests::long_term_tokens(s.long_term, m.hp.long_max, m);
  p.target = glm::make_target(m.vocab, s.target);
  glm::check_lengths(m, p.prefix_ids.size() + p.short_ids.size() + p.long_tokens.size(), p.target.size());
  return p;
}

glm::AssembledInput to_input(const PreparedSample& p, const ModelState& m) {
  interests::LongTermVectors lv;
  Tape t(m.params);
  lv.vectors = t.value(graph::lte_summaries(t, m, p.long_tokens));
  return interests::assemble_input(p.prefix, p.short_ids, std::move(lv), m.vocab, m.hp.prefix_max_tokens);
}

Trainer::Trainer(ModelState& model, TrainConfig cfg, const expert::Scorer* expert)
    : m_(model),
      cfg_(cfg),
      expert_(expert),
      adam_(model.params, nn::AdamOptions{0.9f, 0.98f, 1e-8f, cfg.weight_decay, cfg.clip_norm}),
      grads_(model.params) {
  cfg_.validate();
  if (cfg_.stage == Stage::kGlmPlusRpo && expert_ == nullptr) {
    throw ConfigError("the rpo stage requires an expert");
  }
}

long Trainer::total_steps(std::size_t n_samples) const {
  if (cfg_.steps > 0) return cfg_.steps;
  const auto per_step = static_cast<std::size_t>(cfg_.batch_size) * static_cast<std::size_t>(cfg_.grad_accumulation);
  const auto per_epoch = static_cast<long>((n_samples + per_step - 1) / per_step);
  return std::max(1L, per_epoch * cfg_.epochs);
}

StepResult Trainer::accumulate(std::span<const PreparedSample> batch, float weight) {
  StepResult r;
  if (batch.empty()) return r;
  const bool with_rpo = cfg_.stage == Stage::kGlmPlusRpo;
  const float inv = weight / static_cast<float>(batch.size());
  const glm::BeamOptions beam{cfg_.n, cfg_.beam_width, m_.hp.max_target_len};
  for (const PreparedSample& p : batch) {
    // mini-step 1: no gradients
    std::vector<PreferencePair> pairs;
    if (with_rpo) {
      const glm::AssembledInput in = to_input(p, m_);
      CandidateList gen = glm::beam_generate(m_, in, beam);
      std::erase_if(gen.candidates, [](const Candidate& c) { return c.is_reject; });
      gen.reject_index.reset();
      CandidateList ranked = expert::rank_candidates(*expert_, std::move(gen), m_.vocab, p.prefix);
      CandidateList injected = inject_reject(std::move(ranked), cfg_.epsilon);
      r.avg_reject_index += static_cast<double>(*injected.reject_index) / static_cast<double>(batch.size());
      pairs = build_pairs(injected);
    }

    // mini-step 2: one graph, one backward pass
    Tape t(m_.params, &grads_);
    glm::MemoryGraph mem = glm::build_memory_with_lte(t, m_, p.prefix_ids, p.short_ids, p.long_tokens);
    std::vector<TokenId> dec_in{Vocabulary::kBos};
    dec_in.insert(dec_in.end(), p.target.begin(), p.target.end() - 1);
    Var lp = graph::decoder_logprobs(t, m_, mem.memory, mem.key_mask, dec_in);
    Var nll = t.scale(t.sum(t.pick(lp, p.target)), -1.0f);
    const bool skip = with_rpo && cfg_.skip_toxic_targets && expert_->score(p.target_text, p.prefix) < cfg_.epsilon;
    Var total = t.scale(nll, skip ? 0.0f : cfg_.glm_weight * inv);
    r.loss_glm += static_cast<double>(t.scalar(nll)) / static_cast<double>(batch.size());
    if (skip) ++r.skipped_targets;
    if (with_rpo && !pairs.empty()) {
      const TokenId reject[1] = {Vocabulary::kReject};
      Var reject_score = t.pick(t.row(lp, 0), reject);
      Var lr = rpo_loss_graph(t, m_, mem, pairs, reject_score);
      total = t.add(total, t.scale(lr, cfg_.rpo_weight * inv));
      r.loss_rpo += static_cast<double>(t.scalar(lr)) / static_cast<double>(batch.size());
      r.pairs += pairs.size();
    }
    t.backward(total);
  }
  return r;
}

double Trainer::apply(float lr) {
  const double norm = adam_.step(m_.params, grads_, lr);
  grads_.zero();
  ++step_;
  return norm;
}

StepResult Trainer::train_step(std::span<const PreparedSample> batch) {
  const float lr =
      nn::warmup_linear_decay(step_, cfg_.warmup_steps, planned_, cfg_.peak_lr, cfg_.lr_floor_fraction);
  StepResult r = accumulate(batch);
  r.lr = lr;
  r.grad_norm = apply(lr);
  return r;
}

TrainSummary train(ModelState& model, const std::vector<corpus::UserSample>& samples, const TrainConfig& cfg,
                   const expert::Scorer* expert, const TrainLoopOptions& opt) {
  if (samples.empty()) throw Error("no training samples");
  Trainer trainer(model, cfg, expert);
  std::vector<PreparedSample> prepared;
  prepared.reserve(samples.size());
  for (const auto& s : samples) prepared.push_back(prepare(s, model));

  const long total = trainer.total_steps(prepared.size());
  trainer.plan(total);
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(prepared.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::size_t cursor = 0;

  const auto start = std::chrono::steady_clock::now();
  TrainSummary summary;
  std::vector<PreparedSample> batch;
  for (long step = 0; step < total; ++step) {
    const float lr =
        nn::warmup_linear_decay(step, cfg.warmup_steps, total, cfg.peak_lr, cfg.lr_floor_fraction);
    StepResult agg;
    for (int a = 0; a < cfg.grad_accumulation; ++a) {
      batch.clear();
      for (int b = 0; b < cfg.batch_size; ++b) {
        if (cursor == order.size()) {
          rng.shuffle(order);
          cursor = 0;
        }
        batch.push_back(prepared[order[cursor++]]);
      }
      StepResult r = trainer.accumulate(batch, 1.0f / static_cast<float>(cfg.grad_accumulation));
      const double w = 1.0 / cfg.grad_accumulation;
      agg.loss_glm += r.loss_glm * w;
      agg.loss_rpo += r.loss_rpo * w;
      agg.avg_reject_index += r.avg_reject_index * w;
      agg.pairs += r.pairs;
    }
    agg.lr = lr;
    agg.grad_norm = trainer.apply(lr);
    if (!model.params.all_finite()) throw Error("non-finite parameters at step " + std::to_string(step + 1));
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (opt.metrics) {
      nlohmann::ordered_json j;
      j["step"] = step + 1;
      j["loss_glm"] = agg.loss_glm;
      j["loss_rpo"] = agg.loss_rpo;
      j["avg_reject_index"] = agg.avg_reject_index;
      j["lr"] = agg.lr;
      j["grad_norm"] = agg.grad_norm;
      j["wall_time"] = wall;
      *opt.metrics << j.dump() << '\n';
    }
    if (opt.progress) opt.progress(step + 1, total, agg);
    summary.final_loss_glm = agg.loss_glm;
    summary.final_loss_rpo = agg.loss_rpo;
    summary.seconds = wall;
  }
  summary.steps = total;
  return summary;
}

}  // namespace lad::rpo
