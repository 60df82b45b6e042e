#include "lad/serving.hpp"

#include <json.hpp>

#include "lad/io.hpp"

namespace lad::serving {

namespace {

std::int64_t unix_now() {
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::vector<std::string> string_list(const nlohmann::json& j, const char* key, std::size_t line, bool required) {
  auto it = j.find(key);
  if (it == j.end()) {
    if (required) throw SchemaError(line, std::string("missing field \"") + key + "\"");
    return {};
  }
  if (!it->is_array()) throw SchemaError(line, std::string("field \"") + key + "\" must be a list");
  std::vector<std::string> out;
  for (const auto& v : *it) {
    if (!v.is_string()) throw SchemaError(line, std::string("field \"") + key + "\" must hold strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace

std::vector<BehaviorRecord> load_behavior_log(const std::filesystem::path& path) {
  const std::string text = io::read_file(path);
  std::vector<BehaviorRecord> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw SchemaError(line_no, "record must be a JSON object");
    auto id = j.find("user_id");
    if (id == j.end() || !id->is_string()) throw SchemaError(line_no, "missing string field \"user_id\"");
    out.push_back({id->get<std::string>(), string_list(j, "long_term", line_no, true),
                   string_list(j, "short_term", line_no, false)});
  }
  return out;
}

MemoryBank::MemoryBank() : current_(std::make_shared<const BankSnapshot>()) {}

std::shared_ptr<const BankSnapshot> MemoryBank::snapshot() const { return std::atomic_load(&current_); }

std::uint64_t MemoryBank::refresh(const std::vector<BehaviorRecord>& log, const ModelState& model) {
  std::lock_guard lock(writer_);
  auto next = std::make_shared<BankSnapshot>();
  next->generation = snapshot()->generation + 1;
  const std::int64_t now = unix_now();
  for (const auto& rec : log) {
    next->users[rec.user_id] = {interests::encode_long_term(rec.long_term, model.hp.long_max, model), now};
  }
  const std::uint64_t gen = next->generation;
  std::atomic_store(&current_, std::shared_ptr<const BankSnapshot>(std::move(next)));
  return gen;
}

GsuBuffer::GsuBuffer(std::size_t capacity, std::optional<std::filesystem::path> journal)
    : capacity_(capacity), journal_path_(std::move(journal)) {
  if (capacity_ == 0) throw ConfigError("GSU capacity must be >= 1");
  if (!journal_path_) return;
  if (std::filesystem::exists(*journal_path_)) {
    std::ifstream in(*journal_path_);
    std::string line;
    while (std::getline(in, line)) {
      // A torn final line from a crash is ignored.
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object()) continue;
      if (!j.contains("user_id") || !j.contains("query")) continue;
      push(user(j["user_id"].get<std::string>()), {j["query"].get<std::string>(), j.value("at", std::int64_t{0})});
    }
  } else if (journal_path_->has_parent_path()) {
    std::filesystem::create_directories(journal_path_->parent_path());
  }
  journal_.open(*journal_path_, std::ios::app);
  if (!journal_) throw IoError("cannot open GSU journal " + journal_path_->string());
}

GsuBuffer::User& GsuBuffer::user(const std::string& user_id) {
  {
    std::shared_lock lock(map_mu_);
    auto it = users_.find(user_id);
    if (it != users_.end()) return *it->second;
  }
  std::unique_lock lock(map_mu_);
  auto& slot = users_[user_id];
  if (!slot) slot = std::make_unique<User>();
  return *slot;
}

void GsuBuffer::push(User& u, Entry e) {
  std::lock_guard lock(u.mu);
  u.queries.push_back(std::move(e));
  while (u.queries.size() > capacity_) u.queries.pop_front();
}

void GsuBuffer::record(const std::string& user_id, const std::string& query) {
  if (user_id.empty()) throw RequestError("user_id must be non-empty");
  if (query.empty()) throw RequestError("query must be non-empty");
  Entry e{query, unix_now()};
  if (journal_.is_open()) {
    nlohmann::ordered_json j;
    j["user_id"] = user_id;
    j["query"] = query;
    j["at"] = e.at;
    std::lock_guard lock(journal_mu_);
    journal_ << j.dump() << '\n';
    journal_.flush();
  }
  push(user(user_id), std::move(e));
}

std::vector<std::string> GsuBuffer::recent(const std::string& user_id) const {
  std::shared_lock lock(map_mu_);
  auto it = users_.find(user_id);
  if (it == users_.end()) return {};
  std::lock_guard ulock(it->second->mu);
  std::vector<std::string> out;
  for (const auto& e : it->second->queries) out.push_back(e.query);
  return out;
}

CompletionResponse filter_by_reject(const glm::CandidateList& list, const Vocabulary& vocab) {
  CompletionResponse r;
  bool below = false;
  for (const auto& c : list.candidates) {
    if (c.is_reject) {
      below = true;
      continue;
    }
    if (below) {
      ++r.rejected_count;
    } else {
      r.completions.push_back({glm::candidate_text(vocab, c), c.seq_score});
    }
  }
  return r;
}

Service::Service(std::shared_ptr<const ModelState> model, ServiceOptions opt)
    : model_(std::move(model)), opt_(std::move(opt)), gsu_(opt_.gsu_capacity, opt_.journal) {
  if (!model_) throw ConfigError("service needs a model");
}

std::uint64_t Service::refresh(const std::vector<BehaviorRecord>& log) { return bank_.refresh(log, *model_); }

std::uint64_t Service::refresh_from(const std::filesystem::path& log_path) {
  return refresh(load_behavior_log(log_path));
}

void Service::seed_recent(const std::vector<BehaviorRecord>& log) {
  for (const auto& rec : log) {
    if (!gsu_.recent(rec.user_id).empty()) continue;
    for (const auto& q : rec.short_term) {
      if (!q.empty()) gsu_.record(rec.user_id, q);
    }
  }
}

void Service::record_event(const std::string& user_id, const std::string& query) { gsu_.record(user_id, query); }

CompletionResponse Service::complete(const std::string& user_id, const std::string& prefix) const {
  const auto start = std::chrono::steady_clock::now();
  if (prefix.empty()) throw RequestError("prefix must be non-empty");
  const auto snap = bank_.snapshot();
  const ModelState& m = *model_;
  std::vector<std::string> recent = gsu_.recent(user_id);
  interests::LongTermVectors long_vectors;
  if (auto it = snap->users.find(user_id); it != snap->users.end()) long_vectors = it->second.vectors;
  auto short_ids = interests::copy_short_term(recent, m.hp.short_max, m.vocab, m.hp.short_behavior_max_tokens);
  glm::AssembledInput in;
  try {
    in = interests::assemble_input(prefix, std::move(short_ids), std::move(long_vectors), m.vocab,
                                   m.hp.prefix_max_tokens);
  } catch (const ShapeError&) {
    throw;
  } catch (const Error& e) {
    throw RequestError(e.what());
  }
  CompletionResponse r = filter_by_reject(glm::beam_generate(m, in, opt_.beam), m.vocab);
  r.generation = snap->generation;
  r.short_term = std::move(recent);
  r.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace lad::serving
