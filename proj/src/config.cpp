#include "lad/config.hpp"

#include <functional>
#include <map>

#include "lad/error.hpp"
#include "lad/io.hpp"
#include "lad/json_io.hpp"

namespace lad {

using nlohmann::json;

void RunConfig::set_seed(std::uint64_t seed) {
  corpus.seed = seed;
  model.seed = seed;
  train.seed = seed;
}

void RunConfig::set_epsilon(double eps) {
  expert.epsilon = eps;
  train.epsilon = eps;
}

namespace {

using Setter = std::function<void(RunConfig&, const json&)>;

template <typename T>
Setter field(T RunConfig::*section, auto member) {
  return [section, member](RunConfig& c, const json& v) {
    auto& target = (c.*section).*member;
    target = v.get<std::remove_reference_t<decltype(target)>>();
  };
}

const std::map<std::string, Setter>& setters() {
  using C = corpus::GenConfig;
  using T = rpo::TrainConfig;
  static const std::map<std::string, Setter> table = {
      {"seed", [](RunConfig& c, const json& v) { c.set_seed(v.get<std::uint64_t>()); }},
      {"epsilon", [](RunConfig& c, const json& v) { c.set_epsilon(v.get<double>()); }},
      {"num_users", field(&RunConfig::corpus, &C::num_users)},
      {"samples_per_user", field(&RunConfig::corpus, &C::samples_per_user)},
      {"alphabet_size", field(&RunConfig::corpus, &C::alphabet_size)},
      {"topic_count", field(&RunConfig::corpus, &C::topic_count)},
      {"attribute_count", field(&RunConfig::corpus, &C::attribute_count)},
      {"toxic_token_count", field(&RunConfig::corpus, &C::toxic_token_count)},
      {"toxic_prefix_fraction", field(&RunConfig::corpus, &C::toxic_prefix_fraction)},
      {"typo_fraction", field(&RunConfig::corpus, &C::typo_fraction)},
      {"steps", field(&RunConfig::train, &T::steps)},
      {"epochs", field(&RunConfig::train, &T::epochs)},
      {"batch_size", field(&RunConfig::train, &T::batch_size)},
      {"grad_accumulation", field(&RunConfig::train, &T::grad_accumulation)},
      {"warmup_steps", field(&RunConfig::train, &T::warmup_steps)},
      {"peak_lr", field(&RunConfig::train, &T::peak_lr)},
      {"lr_floor_fraction", field(&RunConfig::train, &T::lr_floor_fraction)},
      {"clip_norm", field(&RunConfig::train, &T::clip_norm)},
      {"weight_decay", field(&RunConfig::train, &T::weight_decay)},
      {"glm_weight", field(&RunConfig::train, &T::glm_weight)},
      {"rpo_weight", field(&RunConfig::train, &T::rpo_weight)},
      {"skip_toxic_targets", field(&RunConfig::train, &T::skip_toxic_targets)},
      {"n",
       [](RunConfig& c, const json& v) {
         c.train.n = v.get<int>();
         c.eval.beam.n = c.train.n;
       }},
      {"beam_width",
       [](RunConfig& c, const json& v) {
         c.train.beam_width = v.get<int>();
         c.eval.beam.beam_width = c.train.beam_width;
       }},
      {"max_len", [](RunConfig& c, const json& v) { c.eval.beam.max_len = v.get<int>(); }},
      {"n_g", [](RunConfig& c, const json& v) { c.eval.n_g = v.get<int>(); }},
      {"tau", [](RunConfig& c, const json& v) { c.eval.tau = v.get<double>(); }},
      {"expert_kind", [](RunConfig& c, const json& v) { c.expert.kind = expert::parse_kind(v.get<std::string>()); }},
      {"toxic_manifest", [](RunConfig& c, const json& v) { c.expert.toxic_token_manifest = v.get<std::string>(); }},
      {"host", [](RunConfig& c, const json& v) { c.host = v.get<std::string>(); }},
      {"port", [](RunConfig& c, const json& v) { c.port = v.get<int>(); }},
      {"gsu_capacity", [](RunConfig& c, const json& v) { c.gsu_capacity = v.get<std::size_t>(); }},
      {"journal", [](RunConfig& c, const json& v) { c.journal = v.get<std::string>(); }},
  };
  return table;
}

bool is_model_key(const std::string& k) {
  static const json keys = to_json(Hyperparameters{});
  return k != "seed" && keys.contains(k);
}

}  // namespace

void apply_config(RunConfig& cfg, const json& flat) {
  if (!flat.is_object()) throw ConfigError("config must be a flat JSON object");
  json model_keys = json::object();
  for (auto it = flat.begin(); it != flat.end(); ++it) {
    const std::string& k = it.key();
    if (it->is_object() || it->is_array()) throw ConfigError("config key \"" + k + "\" must hold a scalar");
    if (is_model_key(k)) {
      model_keys[k] = *it;
      continue;
    }
    auto s = setters().find(k);
    if (s == setters().end()) throw ConfigError("unknown config key \"" + k + "\"");
    try {
      s->second(cfg, *it);
    } catch (const json::exception& e) {
      throw ConfigError("bad value for \"" + k + "\": " + e.what());
    }
  }
  if (!model_keys.empty()) {
    const std::uint64_t seed = cfg.model.seed;
    cfg.model = hyperparameters_from_json(model_keys, cfg.model);
    cfg.model.seed = seed;
  }
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  apply_config(base, j);
  return base;
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  apply_config(cfg, json{{key, value}});
}

nlohmann::ordered_json to_flat_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.corpus.seed;
  j["num_users"] = c.corpus.num_users;
  j["samples_per_user"] = c.corpus.samples_per_user;
  j["alphabet_size"] = c.corpus.alphabet_size;
  j["topic_count"] = c.corpus.topic_count;
  j["attribute_count"] = c.corpus.attribute_count;
  j["toxic_token_count"] = c.corpus.toxic_token_count;
  j["toxic_prefix_fraction"] = c.corpus.toxic_prefix_fraction;
  j["typo_fraction"] = c.corpus.typo_fraction;
  const json model = to_json(c.model);
  for (auto& [k, v] : model.items()) {
    if (k != "seed") j[k] = v;
  }
  j["steps"] = c.train.steps;
  j["epochs"] = c.train.epochs;
  j["batch_size"] = c.train.batch_size;
  j["grad_accumulation"] = c.train.grad_accumulation;
  j["warmup_steps"] = c.train.warmup_steps;
  j["peak_lr"] = c.train.peak_lr;
  j["lr_floor_fraction"] = c.train.lr_floor_fraction;
  j["clip_norm"] = c.train.clip_norm;
  j["weight_decay"] = c.train.weight_decay;
  j["glm_weight"] = c.train.glm_weight;
  j["rpo_weight"] = c.train.rpo_weight;
  j["skip_toxic_targets"] = c.train.skip_toxic_targets;
  j["n"] = c.train.n;
  j["beam_width"] = c.train.beam_width;
  j["epsilon"] = c.expert.epsilon;
  j["max_len"] = c.eval.beam.max_len;
  j["n_g"] = c.eval.n_g;
  j["tau"] = c.eval.tau;
  j["expert_kind"] = c.expert.kind == expert::ExpertKind::kLearned ? "learned" : "rule_oracle";
  j["toxic_manifest"] = c.expert.toxic_token_manifest.string();
  j["host"] = c.host;
  j["port"] = c.port;
  j["gsu_capacity"] = c.gsu_capacity;
  j["journal"] = c.journal;
  return j;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  const auto flat = to_flat_json(RunConfig{});
  for (auto& [k, v] : flat.items()) keys.push_back(k);
  return keys;
}

}  // namespace lad
