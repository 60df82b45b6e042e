#pragma once

#include <algorithm>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "lad/corpus.hpp"
#include "lad/expert.hpp"
#include "lad/glm.hpp"
#include "lad/nn/adam.hpp"

namespace lad::rpo {

enum class PairKind { kPlusVsReject, kRejectVsMinus };

struct PreferencePair {
  std::vector<TokenId> better;
  std::vector<TokenId> worse;
  PairKind kind = PairKind::kPlusVsReject;
};

bool is_reject_ids(std::span<const TokenId> ids);

// Inserts the reject before the first candidate scoring below epsilon (at the
// tail when none does). Expects expert_score-descending input without a reject.
glm::CandidateList inject_reject(glm::CandidateList ranked, double epsilon);

// One pair per real candidate, against the reject. Throws Error without a
// reject_index.
std::vector<PreferencePair> build_pairs(const glm::CandidateList& injected);

// -log sigmoid(delta), summed.
double rpo_loss_from_margins(std::span<const double> deltas);

// Graph form. `reject_score` optionally supplies log P(reject) already on the
// tape (the first row of a teacher-forced pass).
nn::Var rpo_loss_graph(nn::Tape& t, const ModelState& m, const glm::MemoryGraph& mem,
                       const std::vector<PreferencePair>& pairs, std::optional<nn::Var> reject_score = std::nullopt);

// Scalar form on a precomputed input. Empty pairs give 0.
double rpo_loss(const std::vector<PreferencePair>& pairs, const glm::AssembledInput& in, const ModelState& m);

enum class Stage { kGlmOnly, kGlmPlusRpo };

Stage parse_stage(std::string_view name);  // "glm" | "rpo"

struct TrainConfig {
  Stage stage = Stage::kGlmOnly;
  long steps = 0;  // 0: derive from epochs
  int epochs = 1;
  int batch_size = 64;
  int grad_accumulation = 1;
  long warmup_steps = 500;
  float peak_lr = 3e-4f;
  float lr_floor_fraction = 0.1f;
  float clip_norm = 1.0f;
  float weight_decay = 0.0f;
  int n = 4;
  int beam_width = 4;
  double epsilon = 0.6;
  float glm_weight = 1.0f;
  float rpo_weight = 1.0f;
  // RPO stage only: golden targets the expert scores below epsilon are left
  // out of the generation loss (they still produce preference pairs).
  bool skip_toxic_targets = true;
  std::uint64_t seed = 1;

  void validate() const;  // throws ConfigError
};

// Token-level view of a sample, capped to the model's limits.
struct PreparedSample {
  std::string prefix;
  std::string target_text;
  std::vector<TokenId> prefix_ids;
  std::vector<TokenId> short_ids;
  std::vector<std::vector<TokenId>> long_tokens;
  std::vector<TokenId> target;
};

PreparedSample prepare(const corpus::UserSample& s, const ModelState& m);
// Generator input with long-term vectors computed on a no-grad tape.
glm::AssembledInput to_input(const PreparedSample& p, const ModelState& m);

struct StepResult {
  double loss_glm = 0.0;  // mean per-sample target NLL
  std::size_t skipped_targets = 0;
  double loss_rpo = 0.0;  // mean per-sample preference loss
  double avg_reject_index = 0.0;
  std::size_t pairs = 0;
  double grad_norm = 0.0;
  float lr = 0.0f;
};

class Trainer {
 public:
  // Throws ConfigError when the RPO stage has no expert.
  Trainer(ModelState& model, TrainConfig cfg, const expert::Scorer* expert = nullptr);

  // Beam candidates are ranked by the expert and get a reject without
  // gradients; then target NLL plus preference loss go through one backward
  // pass. Adds weight * (batch mean) to the pending gradient only.
  StepResult accumulate(std::span<const PreparedSample> batch, float weight = 1.0f);

  // Applies the pending gradient; returns the pre-clip norm.
  double apply(float lr);

  // accumulate + apply at the scheduled learning rate.
  StepResult train_step(std::span<const PreparedSample> batch);

  const TrainConfig& config() const { return cfg_; }
  long steps_taken() const { return step_; }
  long total_steps(std::size_t n_samples) const;
  // Length of the learning-rate schedule used by train_step.
  void plan(long total_steps) { planned_ = std::max(1L, total_steps); }

 private:
  ModelState& m_;
  TrainConfig cfg_;
  const expert::Scorer* expert_;
  nn::Adam adam_;
  nn::Gradients grads_;
  long step_ = 0;
  long planned_ = 1;
};

struct TrainLoopOptions {
  std::ostream* metrics = nullptr;  // one JSON object per step
  std::function<void(long step, long total, const StepResult&)> progress;
};

struct TrainSummary {
  long steps = 0;
  double final_loss_glm = 0.0;
  double final_loss_rpo = 0.0;
  double seconds = 0.0;
};

TrainSummary train(ModelState& model, const std::vector<corpus::UserSample>& samples, const TrainConfig& cfg,
                   const expert::Scorer* expert = nullptr, const TrainLoopOptions& opt = {});

}  // namespace lad::rpo
