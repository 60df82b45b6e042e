#pragma once

#include "json.hpp"
#include "lad/model.hpp"

namespace lad {

nlohmann::json to_json(const Hyperparameters& hp);
// Missing keys keep their defaults; unknown keys raise ConfigError.
Hyperparameters hyperparameters_from_json(const nlohmann::json& j, Hyperparameters base = {});

nlohmann::json vocab_to_json(const Vocabulary& v);
Vocabulary vocab_from_json(const nlohmann::json& j);

}  // namespace lad
