#include "fixtures.hpp"

#include <atomic>
#include <fstream>
#include <sstream>

#include <unistd.h>

namespace lad::testing {

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

void force_token(ModelState& m, TokenId token, float bias) {
  m.params[m.layout.output.weight].value.setZero();
  auto& b = m.params[m.layout.output.bias].value;
  b.setZero();
  b(0, token) = bias;
}

ModelState small_model(std::uint64_t seed, std::string_view alphabet, int dim) {
  Hyperparameters hp;
  hp.dim = dim;
  hp.heads = 2;
  hp.ff_dim = 2 * dim;
  hp.encoder_layers = 1;
  hp.decoder_layers = 1;
  hp.lte_layers = 1;
  hp.output_init_std = 0.3;
  hp.seed = seed;
  return ModelState::create(hp, Vocabulary::build(alphabet));
}

corpus::UserSample make_sample(std::string user, std::vector<std::string> long_term,
                               std::vector<std::string> short_term, std::string prefix, std::string target) {
  return {std::move(user), std::move(long_term), std::move(short_term), std::move(prefix), std::move(target)};
}

ServerThread::ServerThread(serving::Service* service, std::optional<std::filesystem::path> behavior_log)
    : server_(service, std::move(behavior_log)) {
  port_ = server_.bind("127.0.0.1", 0);
  if (port_ <= 0) throw std::runtime_error("could not bind a local port");
  thread_ = std::thread([this] { server_.serve(); });
  server_.wait_until_ready();
}

ServerThread::~ServerThread() {
  server_.stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace lad::testing
