#include "lad/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "lad/error.hpp"
#include "lad/io.hpp"
#include "lad/json_io.hpp"

namespace lad {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(const std::string& in, std::size_t& at) {
  if (at + sizeof(T) > in.size()) throw CheckpointError("checkpoint truncated in header");
  T value;
  std::memcpy(&value, in.data() + at, sizeof(T));
  at += sizeof(T);
  return value;
}

}  // namespace

void save_checkpoint(const ModelState& model, const std::filesystem::path& path) {
  nlohmann::json dir = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& p : model.params) {
    dir.push_back({{"name", p.name}, {"shape", {p.value.rows(), p.value.cols()}}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(p.value.size()) * sizeof(float);
  }
  nlohmann::json meta{{"format", "ladc"},
                      {"vocab", vocab_to_json(model.vocab)},
                      {"hyperparameters", to_json(model.hp)},
                      {"tensors", dir}};
  const std::string meta_text = meta.dump();

  std::string out;
  out.reserve(16 + meta_text.size() + offset);
  out.append(kCheckpointMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, meta_text.size());
  out += meta_text;
  for (const auto& p : model.params) {
    out.append(reinterpret_cast<const char*>(p.value.data()), static_cast<std::size_t>(p.value.size()) * sizeof(float));
  }
  io::write_file_atomic(path, out);
}

ModelState load_checkpoint(const std::filesystem::path& path, const std::optional<Hyperparameters>& expected) {
  std::string bytes;
  try {
    bytes = io::read_file(path);
  } catch (const IoError& e) {
    throw CheckpointError(e.what());
  }
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw CheckpointError("not a checkpoint (bad magic): " + path.string());
  }
  std::size_t at = 4;
  const auto version = get<std::uint32_t>(bytes, at);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const auto meta_len = get<std::uint64_t>(bytes, at);
  if (meta_len > bytes.size() - at) throw CheckpointError("checkpoint truncated in metadata");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(bytes.substr(at, meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint metadata: ") + e.what());
  }
  at += meta_len;

  Hyperparameters hp;
  Vocabulary vocab = Vocabulary::build("a");
  try {
    hp = hyperparameters_from_json(meta.at("hyperparameters"));
    vocab = vocab_from_json(meta.at("vocab"));
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("bad checkpoint metadata: ") + e.what());
  }
  if (expected && !(*expected == hp)) {
    throw CheckpointError("checkpoint hyperparameters do not match the requested configuration (shape mismatch)");
  }

  ModelState model = ModelState::create(hp, vocab);
  const auto& dir = meta.at("tensors");
  if (dir.size() != model.params.size()) throw CheckpointError("tensor directory does not match the architecture");
  const std::size_t data_start = at;
  for (std::size_t i = 0; i < dir.size(); ++i) {
    auto& p = model.params[static_cast<nn::ParamId>(i)];
    const auto& entry = dir[i];
    const auto rows = entry.at("shape")[0].get<nn::Index>();
    const auto cols = entry.at("shape")[1].get<nn::Index>();
    if (entry.at("name").get<std::string>() != p.name || rows != p.value.rows() || cols != p.value.cols()) {
      throw CheckpointError("tensor " + p.name + " shape mismatch");
    }
    const auto off = entry.at("offset").get<std::uint64_t>();
    const std::size_t nbytes = static_cast<std::size_t>(p.value.size()) * sizeof(float);
    if (data_start + off + nbytes > bytes.size()) throw CheckpointError("checkpoint truncated in tensor " + p.name);
    std::memcpy(p.value.data(), bytes.data() + data_start + off, nbytes);
  }
  return model;
}

}  // namespace lad
