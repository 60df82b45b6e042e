#pragma once

#include <filesystem>
#include <string>
#include <thread>
#include <vector>

#include "lad/corpus.hpp"
#include "lad/glm.hpp"
#include "lad/model.hpp"
#include "lad/serving.hpp"

namespace lad::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "lad");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::string slurp(const std::filesystem::path& p);
void spit(const std::filesystem::path& p, const std::string& bytes);

// Output layer collapsed to a constant distribution: zero weights, `bias` on
// `token`, 0 elsewhere.
void force_token(ModelState& m, TokenId token, float bias = 50.0f);

// Desk-scale model with small dims for quick tests.
ModelState small_model(std::uint64_t seed, std::string_view alphabet, int dim = 16);

corpus::UserSample make_sample(std::string user, std::vector<std::string> long_term,
                               std::vector<std::string> short_term, std::string prefix, std::string target);

// HTTP front end on an ephemeral local port, served from a background thread.
class ServerThread {
 public:
  explicit ServerThread(serving::Service* service,
                        std::optional<std::filesystem::path> behavior_log = std::nullopt);
  ~ServerThread();
  int port() const { return port_; }

 private:
  serving::HttpServer server_;
  int port_ = -1;
  std::thread thread_;
};

}  // namespace lad::testing
