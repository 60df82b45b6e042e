#pragma once

#include <filesystem>
#include <optional>

#include "lad/model.hpp"

namespace lad {

inline constexpr char kCheckpointMagic[4] = {'L', 'A', 'D', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout: magic "LADC", u32 version, u64 metadata length, UTF-8 JSON metadata
// (vocabulary, hyperparameters, tensor directory), then little-endian float32
// tensors, row-major, in directory order. Written atomically.
void save_checkpoint(const ModelState& model, const std::filesystem::path& path);

// Throws CheckpointError on bad magic/version, truncation, or when `expected`
// is given and the stored hyperparameters differ from it.
ModelState load_checkpoint(const std::filesystem::path& path,
                           const std::optional<Hyperparameters>& expected = std::nullopt);

}  // namespace lad
