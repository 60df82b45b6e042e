#include "lad/json_io.hpp"

#include "lad/error.hpp"
#include "lad/utf8.hpp"

namespace lad {

using nlohmann::json;

json to_json(const Hyperparameters& hp) {
  return json{{"dim", hp.dim},
              {"heads", hp.heads},
              {"ff_dim", hp.ff_dim},
              {"encoder_layers", hp.encoder_layers},
              {"decoder_layers", hp.decoder_layers},
              {"lte_layers", hp.lte_layers},
              {"max_input_len", hp.max_input_len},
              {"max_target_len", hp.max_target_len},
              {"lte_max_len", hp.lte_max_len},
              {"prefix_max_tokens", hp.prefix_max_tokens},
              {"short_behavior_max_tokens", hp.short_behavior_max_tokens},
              {"short_max", hp.short_max},
              {"long_max", hp.long_max},
              {"output_init_std", hp.output_init_std},
              {"length_normalize", hp.length_normalize},
              {"seed", hp.seed}};
}

Hyperparameters hyperparameters_from_json(const json& j, Hyperparameters hp) {
  if (!j.is_object()) throw ConfigError("hyperparameters must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const json& v = it.value();
    try {
      if (k == "dim") hp.dim = v.get<int>();
      else if (k == "heads") hp.heads = v.get<int>();
      else if (k == "ff_dim") hp.ff_dim = v.get<int>();
      else if (k == "encoder_layers") hp.encoder_layers = v.get<int>();
      else if (k == "decoder_layers") hp.decoder_layers = v.get<int>();
      else if (k == "lte_layers") hp.lte_layers = v.get<int>();
      else if (k == "max_input_len") hp.max_input_len = v.get<int>();
      else if (k == "max_target_len") hp.max_target_len = v.get<int>();
      else if (k == "lte_max_len") hp.lte_max_len = v.get<int>();
      else if (k == "prefix_max_tokens") hp.prefix_max_tokens = v.get<int>();
      else if (k == "short_behavior_max_tokens") hp.short_behavior_max_tokens = v.get<int>();
      else if (k == "short_max") hp.short_max = v.get<int>();
      else if (k == "long_max") hp.long_max = v.get<int>();
      else if (k == "output_init_std") hp.output_init_std = v.get<double>();
      else if (k == "length_normalize") hp.length_normalize = v.get<bool>();
      else if (k == "seed") hp.seed = v.get<std::uint64_t>();
      else throw ConfigError("unknown hyperparameter: " + k);
    } catch (const json::exception& e) {
      throw ConfigError("bad value for hyperparameter " + k + ": " + e.what());
    }
  }
  hp.validate();
  return hp;
}

json vocab_to_json(const Vocabulary& v) {
  json chars = json::array();
  for (char32_t c : v.characters()) chars.push_back(utf8::encode(c));
  return json{{"specials", {"[PAD]", "[BOS]", "[EOS]", "[UNK]", "[Reject]"}}, {"characters", chars}};
}

Vocabulary vocab_from_json(const json& j) {
  std::u32string chars;
  for (const auto& c : j.at("characters")) {
    const auto cps = utf8::decode(c.get<std::string>());
    if (cps.size() != 1) throw ConfigError("vocabulary entry is not a single character");
    chars.push_back(cps[0]);
  }
  return Vocabulary::from_characters(std::move(chars));
}

}  // namespace lad
