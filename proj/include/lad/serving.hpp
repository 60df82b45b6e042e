#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "lad/error.hpp"
#include "lad/glm.hpp"
#include "lad/interests.hpp"

namespace lad::serving {

// Bad client input (HTTP 400).
class RequestError : public Error {
 public:
  using Error::Error;
};

struct BehaviorRecord {
  std::string user_id;
  std::vector<std::string> long_term;
  std::vector<std::string> short_term;
};

// One JSON object per line: {"user_id", "long_term", optional "short_term"}.
std::vector<BehaviorRecord> load_behavior_log(const std::filesystem::path& path);

struct BankEntry {
  interests::LongTermVectors vectors;
  std::int64_t refreshed_at = 0;  // unix seconds
};

struct BankSnapshot {
  std::uint64_t generation = 0;
  std::map<std::string, BankEntry, std::less<>> users;
};

class MemoryBank {
 public:
  MemoryBank();

  // Never null; readers keep the snapshot alive for as long as they hold it.
  std::shared_ptr<const BankSnapshot> snapshot() const;

  // Encodes every user's log with `model` and publishes the result as the
  // next generation. Returns the new generation.
  std::uint64_t refresh(const std::vector<BehaviorRecord>& log, const ModelState& model);

 private:
  std::shared_ptr<const BankSnapshot> current_;
  std::mutex writer_;
};

class GsuBuffer {
 public:
  explicit GsuBuffer(std::size_t capacity = 3, std::optional<std::filesystem::path> journal = std::nullopt);

  // Throws RequestError on an empty user or query.
  void record(const std::string& user_id, const std::string& query);
  // Oldest first.
  std::vector<std::string> recent(const std::string& user_id) const;
  std::size_t capacity() const { return capacity_; }

 private:
  struct Entry {
    std::string query;
    std::int64_t at = 0;
  };
  struct User {
    mutable std::mutex mu;
    std::deque<Entry> queries;
  };
  User& user(const std::string& user_id);
  void push(User& u, Entry e);

  std::size_t capacity_;
  mutable std::shared_mutex map_mu_;
  std::map<std::string, std::unique_ptr<User>, std::less<>> users_;
  std::optional<std::filesystem::path> journal_path_;
  std::mutex journal_mu_;
  std::ofstream journal_;
};

struct Completion {
  std::string text;
  double score = 0.0;
};

struct CompletionResponse {
  std::vector<Completion> completions;
  std::size_t rejected_count = 0;
  double latency_ms = 0.0;
  std::uint64_t generation = 0;
  std::vector<std::string> short_term;  // GSU view used for this request
};

// Candidates ranked below the reject are dropped; the reject is never shown.
CompletionResponse filter_by_reject(const glm::CandidateList& list, const Vocabulary& vocab);

struct ServiceOptions {
  glm::BeamOptions beam{};
  std::size_t gsu_capacity = 3;
  std::optional<std::filesystem::path> journal;
  std::string checkpoint_label;
};

class Service {
 public:
  Service(std::shared_ptr<const ModelState> model, ServiceOptions opt = {});

  std::uint64_t refresh(const std::vector<BehaviorRecord>& log);
  std::uint64_t refresh_from(const std::filesystem::path& log_path);  // keeps the old snapshot on failure
  void seed_recent(const std::vector<BehaviorRecord>& log);

  void record_event(const std::string& user_id, const std::string& query);
  CompletionResponse complete(const std::string& user_id, const std::string& prefix) const;

  const MemoryBank& bank() const { return bank_; }
  const GsuBuffer& gsu() const { return gsu_; }
  const ModelState& model() const { return *model_; }
  const ServiceOptions& options() const { return opt_; }
  std::size_t bank_users() const { return bank_.snapshot()->users.size(); }

 private:
  std::shared_ptr<const ModelState> model_;
  ServiceOptions opt_;
  MemoryBank bank_;
  GsuBuffer gsu_;
};

// Blocking HTTP front end. `service` may be null (every completion then
// answers 503).
class HttpServer {
 public:
  HttpServer(Service* service, std::optional<std::filesystem::path> behavior_log = std::nullopt);
  ~HttpServer();

  // Binds; port 0 picks a free port. Returns the bound port or -1.
  int bind(const std::string& host, int port);
  void serve();  // blocks until stop()
  void wait_until_ready() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace lad::serving
