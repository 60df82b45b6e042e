#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "lad/corpus.hpp"
#include "lad/eval.hpp"
#include "lad/expert.hpp"
#include "lad/model.hpp"
#include "lad/rpo.hpp"

namespace lad {

// Every setting reachable from a config file, as one flat namespace. `seed`
// drives corpus generation, model initialization and data order alike.
struct RunConfig {
  corpus::GenConfig corpus;
  Hyperparameters model;
  rpo::TrainConfig train;
  expert::ExpertConfig expert;
  eval::EvalConfig eval;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t gsu_capacity = 3;
  std::string journal;

  void set_seed(std::uint64_t seed);
  void set_epsilon(double eps);
};

// Applies a flat JSON object on top of `cfg`. Unknown keys and ill-typed
// values throw ConfigError.
void apply_config(RunConfig& cfg, const nlohmann::json& flat);
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

// "key=value"; the value is parsed as JSON, falling back to a plain string.
void apply_override(RunConfig& cfg, const std::string& assignment);

nlohmann::ordered_json to_flat_json(const RunConfig& cfg);
std::vector<std::string> config_keys();

}  // namespace lad
