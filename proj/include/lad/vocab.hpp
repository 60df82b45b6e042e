#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lad {

using TokenId = std::int32_t;

// Character-level vocabulary. The five special tokens occupy ids 0..4; every
// other id maps one-to-one onto a character, assigned in first-seen order.
// Immutable after construction.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kUnk = 3;
  static constexpr TokenId kReject = 4;
  static constexpr TokenId kNumSpecials = 5;

  // Throws ConfigError if `source` has no characters.
  static Vocabulary build(std::string_view source);
  static Vocabulary from_characters(std::u32string characters);

  // Out-of-vocabulary characters become kUnk. Never emits another special.
  std::vector<TokenId> encode(std::string_view text) const;
  // Specials render as their bracketed names; throws std::out_of_range for
  // ids outside [0, size()).
  std::string decode(std::span<const TokenId> ids) const;

  std::size_t size() const { return characters_.size() + kNumSpecials; }
  const std::u32string& characters() const { return characters_; }
  bool contains(char32_t c) const { return id_of_.count(c) != 0; }
  static bool is_special(TokenId id) { return id >= 0 && id < kNumSpecials; }
  static std::string_view special_name(TokenId id);

  bool operator==(const Vocabulary& other) const { return characters_ == other.characters_; }

 private:
  explicit Vocabulary(std::u32string characters);

  std::u32string characters_;
  std::unordered_map<char32_t, TokenId> id_of_;
};

}  // namespace lad
