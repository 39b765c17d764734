#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "spam/laplace.hpp"
#include "spam/network.hpp"
#include "spam/prior.hpp"
#include "spam/pruning.hpp"

namespace spam {

// Checkpoint file:
//   "SPAMCKPT" | u64 LE header length H | H bytes JSON header |
//   P x f64 LE parameters | [P x u8 mask] | [K x f64 LE prior log-precisions]
// The JSON header lists the layers, the parameter count, the seed, the
// training tag, whether a mask follows and the prior kind and length.
struct Checkpoint {
  Network net;
  std::uint64_t seed = 0;
  std::string training;
  std::optional<PriorSpec> prior;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Posterior snapshot: "SPAMPOST" | u64 LE H | JSON header | theta | delta |
// Diag: h, or per layer A, G, eigenvalues and eigenvectors of both, and the
// corrected eigenvalues (all f64 LE, row-major).
void save_posterior(const std::filesystem::path& path, const PosteriorState& ps);
PosteriorState load_posterior(const std::filesystem::path& path);

// Mask file: "SPAMMASK" | u64 LE H | JSON header | ceil(P / 8) bytes, bit p
// at byte p / 8, position p % 8 (1 = keep).
struct MaskFileInfo {
  std::string criterion;
  std::uint64_t seed = 0;
  std::uint64_t snapshot_id = 0;
};

void save_mask(const std::filesystem::path& path, const PruneMask& mask, const MaskFileInfo& info);
PruneMask load_mask(const std::filesystem::path& path, MaskFileInfo* info = nullptr);

// FNV-1a of a file's bytes as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);

}  // namespace spam
