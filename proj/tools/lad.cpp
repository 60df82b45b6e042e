#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lad/checkpoint.hpp"
#include "lad/config.hpp"
#include "lad/corpus.hpp"
#include "lad/error.hpp"
#include "lad/eval.hpp"
#include "lad/expert.hpp"
#include "lad/interests.hpp"
#include "lad/io.hpp"
#include "lad/rpo.hpp"
#include "lad/serving.hpp"

namespace fs = std::filesystem;
using namespace lad;

namespace {

enum class Level { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

Level log_level() {
  static const Level level = [] {
    const char* env = std::getenv("LAD_LOG");
    const std::string v = env ? env : "info";
    if (v == "error" || v == "quiet") return Level::kError;
    if (v == "warn") return Level::kWarn;
    if (v == "debug") return Level::kDebug;
    return Level::kInfo;
  }();
  return level;
}

void log(Level level, const std::string& msg) {
  static const char* names[] = {"error", "warn", "info", "debug"};
  if (level <= log_level()) std::cerr << "[" << names[static_cast<int>(level)] << "] " << msg << "\n";
}

struct Options {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out, data, train_data, checkpoint, init, report, log_path, metrics, expert, behaviors;
  std::string stage, prefix, user, journal, host;
  std::vector<std::string> short_term, long_term;
  std::optional<int> epochs, port;
  std::optional<long> steps;
};

RunConfig build_config(const Options& o) {
  RunConfig cfg;
  if (!o.config.empty()) cfg = load_run_config(o.config);
  for (const auto& s : o.sets) apply_override(cfg, s);
  if (o.seed) cfg.set_seed(*o.seed);
  if (o.epochs) cfg.train.epochs = *o.epochs;
  if (o.steps) cfg.train.steps = *o.steps;
  if (o.port) cfg.port = *o.port;
  if (!o.host.empty()) cfg.host = o.host;
  if (!o.journal.empty()) cfg.journal = o.journal;
  if (!o.expert.empty()) cfg.expert.toxic_token_manifest = o.expert;
  return cfg;
}

// Explicit manifest, else the one generated next to the data file, else an
// oracle that only checks well-formedness.
std::unique_ptr<expert::Scorer> scorer_for(const RunConfig& cfg, const fs::path& data) {
  expert::ExpertConfig ec = cfg.expert;
  if (ec.toxic_token_manifest.empty()) {
    const fs::path sibling = data.parent_path() / "toxic_tokens.txt";
    if (fs::exists(sibling)) {
      ec.toxic_token_manifest = sibling;
    } else {
      log(Level::kWarn, "no toxic-token manifest; toxicity metrics cover malformedness only");
      ec.validate();
      return std::make_unique<expert::RuleOracle>(std::vector<std::string>{});
    }
  }
  log(Level::kDebug, "expert manifest " + ec.toxic_token_manifest.string());
  return expert::make_expert(ec);
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigError(std::string(flag) + " is required");
}

int cmd_gen_data(const Options& o, const RunConfig& cfg) {
  require(o.out, "--out");
  const auto ds = corpus::generate_corpus(cfg.corpus, o.out);
  log(Level::kInfo, "wrote " + std::to_string(ds.train.size()) + " train / " + std::to_string(ds.test.size()) +
                        " test samples to " + o.out);
  return 0;
}

int cmd_train(const Options& o, RunConfig cfg) {
  require(o.data, "--data");
  require(o.out, "--out");
  cfg.train.stage = rpo::parse_stage(o.stage);
  std::unique_ptr<expert::Scorer> scorer;
  if (cfg.train.stage == rpo::Stage::kGlmPlusRpo) {
    if (o.expert.empty() && cfg.expert.toxic_token_manifest.empty()) {
      throw ConfigError("--stage rpo requires --expert <toxic token manifest>");
    }
    scorer = expert::make_expert(cfg.expert);
  } else if (!o.expert.empty()) {
    log(Level::kWarn, "--expert is ignored by the glm stage");
  }
  const auto samples = corpus::load_samples(o.data);
  if (samples.empty()) throw Error("training file " + o.data + " has no samples");

  ModelState model = [&] {
    if (!o.init.empty()) {
      log(Level::kInfo, "initializing from " + o.init);
      return load_checkpoint(o.init);
    }
    return ModelState::create(cfg.model, corpus::vocabulary_for(samples));
  }();
  log(Level::kInfo, "model: " + std::to_string(model.params.scalar_count()) + " parameters, vocabulary " +
                        std::to_string(model.vocab.size()));

  const std::string metrics_path = o.metrics.empty() ? o.out + ".metrics.jsonl" : o.metrics;
  if (fs::path(metrics_path).has_parent_path()) fs::create_directories(fs::path(metrics_path).parent_path());
  std::ofstream metrics(metrics_path);
  if (!metrics) throw IoError("cannot write " + metrics_path);
  rpo::TrainLoopOptions loop;
  loop.metrics = &metrics;
  loop.progress = [](long step, long total, const rpo::StepResult& r) {
    const long every = std::max(1L, total / 20);
    if (step % every == 0 || step == total) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "step %ld/%ld  loss_glm %.4f  loss_rpo %.4f  reject_idx %.2f  lr %.2e", step,
                    total, r.loss_glm, r.loss_rpo, r.avg_reject_index, static_cast<double>(r.lr));
      log(Level::kInfo, buf);
    }
  };
  const auto summary = rpo::train(model, samples, cfg.train, scorer.get(), loop);
  save_checkpoint(model, o.out);
  log(Level::kInfo, "saved " + o.out + " after " + std::to_string(summary.steps) + " steps (" +
                        std::to_string(static_cast<int>(summary.seconds)) + " s)");
  return 0;
}

void write_report(const eval::EvalResult& r, const std::string& report, const std::string& log_path) {
  io::write_file_atomic(report, eval::to_json(r).dump(2) + "\n");
  if (!log_path.empty()) {
    std::string lines;
    for (const auto& s : r.log) lines += eval::to_json(s).dump() + "\n";
    io::write_file_atomic(log_path, lines);
  }
  char buf[200];
  std::snprintf(buf, sizeof buf, "R@4 %.4f  MRR %.4f  BLEU %.4f  UProb %.4f  AvgRN %.3f  (%zu samples)",
                r.overall.recall_at_4, r.overall.mrr, r.overall.bleu, r.overall.uprob, r.overall.avg_rn,
                r.overall.n_samples);
  log(Level::kInfo, buf);
}

int cmd_eval(const Options& o, const RunConfig& cfg) {
  require(o.data, "--data");
  require(o.checkpoint, "--checkpoint");
  require(o.report, "--report");
  const ModelState model = load_checkpoint(o.checkpoint);
  const auto samples = corpus::load_samples(o.data);
  const auto scorer = scorer_for(cfg, o.data);
  const auto result = eval::evaluate(model, samples, *scorer, cfg.eval);
  write_report(result, o.report, o.log_path);
  return 0;
}

int cmd_mpc(const Options& o, const RunConfig& cfg) {
  require(o.train_data, "--train");
  require(o.data, "--data");
  require(o.report, "--report");
  const eval::MpcBaseline mpc(corpus::load_samples(o.train_data));
  const auto samples = corpus::load_samples(o.data);
  const auto scorer = scorer_for(cfg, o.data);
  write_report(eval::evaluate_mpc(mpc, samples, *scorer, cfg.eval), o.report, o.log_path);
  return 0;
}

int cmd_complete(const Options& o, const RunConfig& cfg) {
  require(o.checkpoint, "--checkpoint");
  if (o.prefix.empty()) throw ConfigError("--prefix must be non-empty");
  auto model = std::make_shared<const ModelState>(load_checkpoint(o.checkpoint));
  serving::ServiceOptions so;
  so.beam = cfg.eval.beam;
  so.gsu_capacity = static_cast<std::size_t>(std::max(1, model->hp.short_max));
  serving::Service service(model, so);
  const std::string user = o.user.empty() ? "cli" : o.user;
  std::vector<serving::BehaviorRecord> log_records;
  if (!o.behaviors.empty()) {
    for (auto& rec : serving::load_behavior_log(o.behaviors)) {
      if (rec.user_id == user) log_records.push_back(std::move(rec));
    }
  }
  if (!o.long_term.empty()) log_records.push_back({user, o.long_term, {}});
  service.refresh(log_records);
  service.seed_recent(log_records);
  for (const auto& q : o.short_term) service.record_event(user, q);
  const auto r = service.complete(user, o.prefix);
  nlohmann::ordered_json j;
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const auto& c : r.completions) list.push_back({{"text", c.text}, {"score", c.score}});
  j["completions"] = std::move(list);
  j["rejected_count"] = r.rejected_count;
  j["latency_ms"] = r.latency_ms;
  std::cout << j.dump(2) << "\n";
  return 0;
}

serving::HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

int cmd_serve(const Options& o, const RunConfig& cfg) {
  std::unique_ptr<serving::Service> service;
  if (o.checkpoint.empty()) {
    log(Level::kWarn, "no --checkpoint; completions will answer 503");
  } else {
    try {
      auto model = std::make_shared<const ModelState>(load_checkpoint(o.checkpoint));
      serving::ServiceOptions so;
      so.beam = cfg.eval.beam;
      so.gsu_capacity = cfg.gsu_capacity;
      if (!cfg.journal.empty()) so.journal = cfg.journal;
      so.checkpoint_label = o.checkpoint;
      service = std::make_unique<serving::Service>(model, so);
    } catch (const CheckpointError& e) {
      log(Level::kError, std::string("checkpoint unavailable: ") + e.what());
    } catch (const IoError& e) {
      log(Level::kError, std::string("checkpoint unavailable: ") + e.what());
    }
  }
  std::optional<fs::path> behaviors;
  if (!o.behaviors.empty()) behaviors = o.behaviors;
  if (service && behaviors) {
    const auto records = serving::load_behavior_log(*behaviors);
    service->refresh(records);
    service->seed_recent(records);
    log(Level::kInfo, "memory bank: " + std::to_string(service->bank_users()) + " users");
  }
  serving::HttpServer server(service.get(), behaviors);
  const int port = server.bind(cfg.host, cfg.port);
  if (port < 0) throw IoError("cannot bind " + cfg.host + ":" + std::to_string(cfg.port));
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  log(Level::kInfo, "listening on http://" + cfg.host + ":" + std::to_string(port));
  std::cout << "port " << port << std::endl;
  server.serve();
  g_server = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Personalized query auto-completion with reject-based detoxification"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config, "Flat JSON config file");
  app.add_option("--set", o.sets, "Override a config key, e.g. --set peak_lr=1e-3 (repeatable)");
  app.add_option("--seed", o.seed, "Seed for data, initialization and data order");

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic corpus");
  gen->add_option("--out", o.out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train a model (glm pretraining or rpo fine-tuning)");
  train->add_option("--stage", o.stage, "glm | rpo")->required()->check(CLI::IsMember({"glm", "rpo"}));
  train->add_option("--data", o.data, "Training samples (JSONL)")->required();
  train->add_option("--out", o.out, "Checkpoint to write")->required();
  train->add_option("--init", o.init, "Checkpoint to start from");
  train->add_option("--expert", o.expert, "Toxic-token manifest for the rule-oracle expert");
  train->add_option("--metrics", o.metrics, "Per-step metrics log (default <out>.metrics.jsonl)");
  train->add_option("--epochs", o.epochs, "Epochs when steps is 0");
  train->add_option("--steps", o.steps, "Optimizer steps (overrides epochs)");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--data", o.data, "Test samples (JSONL)")->required();
  ev->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->required();
  ev->add_option("--report", o.report, "Report JSON to write")->required();
  ev->add_option("--log", o.log_path, "Per-sample generation log (JSONL)");
  ev->add_option("--expert", o.expert, "Toxic-token manifest (default: toxic_tokens.txt beside --data)");

  auto* serve = app.add_subcommand("serve", "Run the HTTP completion service");
  serve->add_option("--checkpoint", o.checkpoint, "Model checkpoint");
  serve->add_option("--behaviors", o.behaviors, "Behavior log used to fill and refresh the memory bank");
  serve->add_option("--host", o.host, "Bind address");
  serve->add_option("--port", o.port, "Port (0 picks a free one)");
  serve->add_option("--journal", o.journal, "Append-only journal for recent queries");

  auto* complete = app.add_subcommand("complete", "One-shot completion");
  complete->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->required();
  complete->add_option("--prefix", o.prefix, "Typed prefix")->required();
  complete->add_option("--user", o.user, "User id");
  complete->add_option("--short", o.short_term, "Recent queries, oldest first");
  complete->add_option("--long", o.long_term, "Past queries, oldest first");
  complete->add_option("--behaviors", o.behaviors, "Behavior log to take the user's history from");

  auto* mpc = app.add_subcommand("mpc", "Evaluate the most-popular-completion baseline");
  mpc->add_option("--train", o.train_data, "Training samples (JSONL)")->required();
  mpc->add_option("--data", o.data, "Test samples (JSONL)")->required();
  mpc->add_option("--report", o.report, "Report JSON to write")->required();
  mpc->add_option("--log", o.log_path, "Per-sample log (JSONL)");
  mpc->add_option("--expert", o.expert, "Toxic-token manifest");

  auto* show = app.add_subcommand("config", "Print the effective configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const RunConfig cfg = build_config(o);
    if (*gen) return cmd_gen_data(o, cfg);
    if (*train) return cmd_train(o, cfg);
    if (*ev) return cmd_eval(o, cfg);
    if (*serve) return cmd_serve(o, cfg);
    if (*complete) return cmd_complete(o, cfg);
    if (*mpc) return cmd_mpc(o, cfg);
    if (*show) {
      std::cout << to_flat_json(cfg).dump(2) << "\n";
      return 0;
    }
  } catch (const ConfigError& e) {
    log(Level::kError, e.what());
    return 2;
  } catch (const std::exception& e) {
    log(Level::kError, e.what());
    return 1;
  }
  return 2;
}
