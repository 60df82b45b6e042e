#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "lad/rng.hpp"
#include "lad/vocab.hpp"

namespace lad::corpus {

struct UserSample {
  std::string user_id;
  std::vector<std::string> long_term;   // oldest first
  std::vector<std::string> short_term;  // oldest first
  std::string prefix;
  std::string target;

  bool operator==(const UserSample&) const = default;
};

struct GenConfig {
  std::size_t num_users = 5000;
  std::size_t samples_per_user = 11;
  std::size_t alphabet_size = 26;  // letters used, drawn from a..z
  std::size_t topic_count = 24;
  std::size_t attribute_count = 12;
  std::size_t toxic_token_count = 6;
  double toxic_prefix_fraction = 0.15;
  double typo_fraction = 0.1;
  std::uint64_t seed = 42;

  // Throws ConfigError.
  void validate() const;
};

// The closed grammar behind a generated corpus.
struct Lexicon {
  std::string clean_letters;
  std::string toxic_letters;
  std::vector<std::string> topics;
  std::vector<std::string> attributes;
  std::vector<std::string> toxic_tokens;
};

inline constexpr std::size_t kLongTermHistory = 9;
inline constexpr std::size_t kShortTermHistory = 3;
inline constexpr std::size_t kToxicLetters = 3;

Lexicon build_lexicon(const GenConfig& cfg);

// "<topic> <attribute>"
std::string template_query(std::string_view topic, std::string_view attribute);

struct Dataset {
  Lexicon lexicon;
  std::vector<UserSample> train;
  std::vector<UserSample> test;
};

// Pure function of cfg. Each user's last sample is held out for test.
Dataset generate(const GenConfig& cfg);

// Writes train.jsonl, test.jsonl, toxic_tokens.txt and behaviors.jsonl (the
// latest long-term log per user) under `out_dir`, each atomically.
Dataset generate_corpus(const GenConfig& cfg, const std::filesystem::path& out_dir);

std::string to_json_line(const UserSample& s);
void write_samples(const std::filesystem::path& path, const std::vector<UserSample>& samples);

// Throws ParseError / SchemaError naming the 1-based line.
std::vector<UserSample> load_samples(const std::filesystem::path& path);
std::vector<UserSample> parse_samples(std::string_view text);

std::vector<std::string> load_token_manifest(const std::filesystem::path& path);

// Leading `k` code points of `target`.
std::string prefix_of(std::string_view target, std::size_t k);
// k uniform in [1, len - 1] when len >= 2, else the whole target. Throws Error
// on an empty target.
std::string sample_prefix(std::string_view target, Rng& rng);

// Characters in first-seen order over targets, prefixes and behaviors.
Vocabulary vocabulary_for(const std::vector<UserSample>& samples);

struct ToxicitySplit {
  std::vector<UserSample> toxic;
  std::vector<UserSample> non_toxic;
};

// A sample is toxic when quality(prefix) < tau.
ToxicitySplit split_by_toxicity(const std::vector<UserSample>& samples,
                                const std::function<double(std::string_view)>& quality, double tau);

}  // namespace lad::corpus
