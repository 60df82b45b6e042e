#include "lad/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "lad/error.hpp"
#include "lad/io.hpp"
#include "lad/utf8.hpp"

namespace lad::corpus {

namespace {

constexpr std::string_view kLetters = "abcdefghijklmnopqrstuvwxyz";
constexpr std::size_t kTopicStem = 3;
constexpr std::size_t kTopicTail = 3;
constexpr std::size_t kAttributeTail = 2;
constexpr std::size_t kToxicLength = 4;

std::size_t ipow(std::size_t b, std::size_t e) {
  std::size_t r = 1;
  while (e--) r *= b;
  return r;
}

// Smallest m >= 2 with m^len >= count.
std::size_t tail_letters(std::size_t count, std::size_t len) {
  std::size_t m = 2;
  while (ipow(m, len) < count) ++m;
  return m;
}

std::string spell(std::size_t code, std::size_t len, std::string_view letters) {
  std::string s(len, ' ');
  for (std::size_t i = len; i-- > 0;) {
    s[i] = letters[code % letters.size()];
    code /= letters.size();
  }
  return s;
}

// `count` distinct words stem + tail, tails drawn without replacement.
std::vector<std::string> make_words(Rng& rng, const std::string& stem, std::string_view tail_set, std::size_t tail_len,
                                    std::size_t count) {
  std::vector<std::size_t> codes(ipow(tail_set.size(), tail_len));
  for (std::size_t i = 0; i < codes.size(); ++i) codes[i] = i;
  rng.shuffle(codes);
  std::vector<std::string> words;
  for (std::size_t i = 0; i < count; ++i) words.push_back(stem + spell(codes[i], tail_len, tail_set));
  return words;
}

std::string pick_letters(Rng& rng, std::string pool, std::size_t n) {
  rng.shuffle(pool);
  return pool.substr(0, n);
}

std::size_t code_points(std::string_view s) { return utf8::decode(s).size(); }

std::string with_typo(const std::string& prefix, const std::string& clean, Rng& rng) {
  std::vector<std::size_t> slots;
  for (std::size_t i = prefix.size() / 2; i < prefix.size(); ++i) {
    if (clean.find(prefix[i]) != std::string::npos) slots.push_back(i);
  }
  if (slots.empty()) return prefix;
  const std::size_t at = slots[rng.below(slots.size())];
  std::string out = prefix;
  std::string others;
  for (char c : clean) {
    if (c != prefix[at]) others.push_back(c);
  }
  out[at] = others[rng.below(others.size())];
  return out;
}

}  // namespace

void GenConfig::validate() const {
  if (num_users < 1 || samples_per_user < 1 || alphabet_size < 1 || topic_count < 1 || attribute_count < 1 ||
      toxic_token_count < 1) {
    throw ConfigError("corpus counts must be >= 1");
  }
  if (!(toxic_prefix_fraction >= 0.0 && toxic_prefix_fraction <= 1.0)) {
    throw ConfigError("toxic_prefix_fraction must be in [0,1]");
  }
  if (!(typo_fraction >= 0.0 && typo_fraction <= 1.0)) throw ConfigError("typo_fraction must be in [0,1]");
  if (alphabet_size > kLetters.size()) throw ConfigError("alphabet_size must be <= 26");
  const std::size_t clean = alphabet_size > kToxicLetters ? alphabet_size - kToxicLetters : 0;
  const std::size_t need = std::max({kTopicStem, tail_letters(topic_count, kTopicTail),
                                     tail_letters(attribute_count, kAttributeTail), std::size_t{4}});
  if (clean < need) {
    throw ConfigError("alphabet_size " + std::to_string(alphabet_size) + " too small for " +
                      std::to_string(topic_count) + " topics / " + std::to_string(attribute_count) +
                      " attributes (need " + std::to_string(need + kToxicLetters) + ")");
  }
  if (toxic_token_count > ipow(kToxicLetters, kToxicLength)) throw ConfigError("too many toxic tokens");
}

Lexicon build_lexicon(const GenConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  Lexicon lex;
  const std::string letters(kLetters.substr(0, cfg.alphabet_size));
  lex.clean_letters = letters.substr(0, letters.size() - kToxicLetters);
  lex.toxic_letters = letters.substr(letters.size() - kToxicLetters);

  // Topics share one stem and attributes share one initial letter, so short
  // prefixes leave the query ambiguous without the user's history.
  const std::string topic_stem = pick_letters(rng, lex.clean_letters, kTopicStem);
  const std::string topic_tails = pick_letters(rng, lex.clean_letters, tail_letters(cfg.topic_count, kTopicTail));
  lex.topics = make_words(rng, topic_stem, topic_tails, kTopicTail, cfg.topic_count);

  const std::string attr_stem = pick_letters(rng, lex.clean_letters, 1);
  const std::string attr_tails =
      pick_letters(rng, lex.clean_letters, tail_letters(cfg.attribute_count, kAttributeTail));
  lex.attributes = make_words(rng, attr_stem, attr_tails, kAttributeTail, cfg.attribute_count);

  lex.toxic_tokens = make_words(rng, "", lex.toxic_letters, kToxicLength, cfg.toxic_token_count);
  return lex;
}

std::string template_query(std::string_view topic, std::string_view attribute) {
  std::string q(topic);
  q.push_back(' ');
  q.append(attribute);
  return q;
}

Dataset generate(const GenConfig& cfg) {
  Dataset ds;
  ds.lexicon = build_lexicon(cfg);
  const Lexicon& lex = ds.lexicon;
  const auto any_of = [](Rng& r, const std::vector<std::string>& v) -> const std::string& {
    return v[r.below(v.size())];
  };

  for (std::size_t u = 0; u < cfg.num_users; ++u) {
    char id[32];
    std::snprintf(id, sizeof id, "u%05zu", u);
    Rng rng(cfg.seed ^ fnv1a64(id));
    const std::string& attribute = any_of(rng, lex.attributes);

    for (std::size_t n = 0; n < cfg.samples_per_user; ++n) {
      UserSample s;
      s.user_id = id;
      for (std::size_t i = 0; i < kLongTermHistory; ++i) {
        s.long_term.push_back(template_query(any_of(rng, lex.topics), attribute));
      }
      const std::string& topic = any_of(rng, lex.topics);
      for (std::size_t i = 0; i < kShortTermHistory; ++i) {
        s.short_term.push_back(template_query(topic, any_of(rng, lex.attributes)));
      }
      const bool toxic = rng.bernoulli(cfg.toxic_prefix_fraction);
      const bool typo = rng.bernoulli(cfg.typo_fraction);
      if (toxic) {
        // The prefix always spells out the whole toxic token.
        const std::string& word = any_of(rng, lex.toxic_tokens);
        s.target = template_query(word, attribute);
        const auto k = rng.between(static_cast<std::int64_t>(word.size()),
                                   static_cast<std::int64_t>(code_points(s.target)) - 1);
        s.prefix = prefix_of(s.target, static_cast<std::size_t>(k));
      } else {
        s.target = template_query(topic, attribute);
        s.prefix = sample_prefix(s.target, rng);
        if (typo) s.prefix = with_typo(s.prefix, lex.clean_letters, rng);
      }
      (n + 1 == cfg.samples_per_user ? ds.test : ds.train).push_back(std::move(s));
    }
  }
  return ds;
}

std::string to_json_line(const UserSample& s) {
  nlohmann::ordered_json j;
  j["user_id"] = s.user_id;
  j["long_term"] = s.long_term;
  j["short_term"] = s.short_term;
  j["prefix"] = s.prefix;
  j["target"] = s.target;
  return j.dump();
}

void write_samples(const std::filesystem::path& path, const std::vector<UserSample>& samples) {
  std::string out;
  for (const auto& s : samples) {
    out += to_json_line(s);
    out.push_back('\n');
  }
  io::write_file_atomic(path, out);
}

Dataset generate_corpus(const GenConfig& cfg, const std::filesystem::path& out_dir) {
  Dataset ds = generate(cfg);
  write_samples(out_dir / "train.jsonl", ds.train);
  write_samples(out_dir / "test.jsonl", ds.test);

  std::string manifest;
  for (const auto& w : ds.lexicon.toxic_tokens) manifest += w + "\n";
  io::write_file_atomic(out_dir / "toxic_tokens.txt", manifest);

  std::string behaviors;
  for (const auto& s : ds.test) {
    nlohmann::ordered_json j;
    j["user_id"] = s.user_id;
    j["long_term"] = s.long_term;
    j["short_term"] = s.short_term;
    behaviors += j.dump() + "\n";
  }
  io::write_file_atomic(out_dir / "behaviors.jsonl", behaviors);
  return ds;
}

namespace {

std::string field_string(const nlohmann::json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end()) throw SchemaError(line, std::string("missing field \"") + key + "\"");
  if (!it->is_string()) throw SchemaError(line, std::string("field \"") + key + "\" must be a string");
  return it->get<std::string>();
}

std::vector<std::string> field_list(const nlohmann::json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end()) throw SchemaError(line, std::string("missing field \"") + key + "\"");
  if (!it->is_array()) throw SchemaError(line, std::string("field \"") + key + "\" must be a list");
  std::vector<std::string> out;
  for (const auto& v : *it) {
    if (!v.is_string()) throw SchemaError(line, std::string("field \"") + key + "\" must hold strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return c == ' ' || c == '\t' || c == '\r'; });
}

}  // namespace

std::vector<UserSample> parse_samples(std::string_view text) {
  std::vector<UserSample> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (blank(line)) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw SchemaError(line_no, "record must be a JSON object");
    UserSample s;
    s.user_id = field_string(j, "user_id", line_no);
    s.long_term = field_list(j, "long_term", line_no);
    s.short_term = field_list(j, "short_term", line_no);
    s.prefix = field_string(j, "prefix", line_no);
    s.target = field_string(j, "target", line_no);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<UserSample> load_samples(const std::filesystem::path& path) { return parse_samples(io::read_file(path)); }

std::vector<std::string> load_token_manifest(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) tokens.push_back(line);
  }
  return tokens;
}

std::string prefix_of(std::string_view target, std::size_t k) {
  const auto cps = utf8::decode(target);
  return utf8::encode(std::u32string_view(cps).substr(0, std::min(k, cps.size())));
}

std::string sample_prefix(std::string_view target, Rng& rng) {
  const std::size_t len = code_points(target);
  if (len == 0) throw Error("cannot cut a prefix from an empty target");
  if (len == 1) return std::string(target);
  return prefix_of(target, static_cast<std::size_t>(rng.between(1, static_cast<std::int64_t>(len) - 1)));
}

Vocabulary vocabulary_for(const std::vector<UserSample>& samples) {
  std::string text;
  for (const auto& s : samples) {
    text += s.target;
    text += s.prefix;
    for (const auto& b : s.short_term) text += b;
    for (const auto& b : s.long_term) text += b;
  }
  return Vocabulary::build(text);
}

ToxicitySplit split_by_toxicity(const std::vector<UserSample>& samples,
                                const std::function<double(std::string_view)>& quality, double tau) {
  ToxicitySplit out;
  for (const auto& s : samples) (quality(s.prefix) < tau ? out.toxic : out.non_toxic).push_back(s);
  return out;
}

}  // namespace lad::corpus
