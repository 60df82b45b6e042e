#include "lad/vocab.hpp"

#include <stdexcept>

#include "lad/error.hpp"
#include "lad/utf8.hpp"

namespace lad {

namespace {
constexpr std::string_view kSpecialNames[] = {"[PAD]", "[BOS]", "[EOS]", "[UNK]", "[Reject]"};
}

Vocabulary::Vocabulary(std::u32string characters) : characters_(std::move(characters)) {
  for (std::size_t i = 0; i < characters_.size(); ++i) {
    id_of_.emplace(characters_[i], static_cast<TokenId>(i) + kNumSpecials);
  }
}

Vocabulary Vocabulary::build(std::string_view source) {
  std::u32string seen;
  std::unordered_map<char32_t, bool> present;
  for (char32_t c : utf8::decode(source)) {
    if (present.emplace(c, true).second) seen.push_back(c);
  }
  if (seen.empty()) throw ConfigError("vocabulary source has no characters");
  return Vocabulary(std::move(seen));
}

Vocabulary Vocabulary::from_characters(std::u32string characters) {
  std::unordered_map<char32_t, bool> present;
  for (char32_t c : characters) {
    if (!present.emplace(c, true).second) throw ConfigError("duplicate character in vocabulary");
  }
  if (characters.empty()) throw ConfigError("vocabulary has no characters");
  return Vocabulary(std::move(characters));
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (char32_t c : utf8::decode(text)) {
    auto it = id_of_.find(c);
    ids.push_back(it == id_of_.end() ? kUnk : it->second);
  }
  return ids;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= size()) {
      throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of size " +
                              std::to_string(size()));
    }
    if (is_special(id)) {
      out += special_name(id);
    } else {
      out += utf8::encode(characters_[static_cast<std::size_t>(id - kNumSpecials)]);
    }
  }
  return out;
}

std::string_view Vocabulary::special_name(TokenId id) {
  if (!is_special(id)) throw std::out_of_range("not a special token");
  return kSpecialNames[id];
}

}  // namespace lad
