#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "scal/codec/model.hpp"

namespace scal::codec {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Transmitter plus all receivers, tagged with the vocabulary they were
/// trained on.
struct Checkpoint {
  std::uint64_t vocab_hash = 0;
  Encoder encoder;
  std::vector<Decoder> decoders;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout (little-endian host order): magic "SCALCKPT", version,
/// vocabulary hash, model config, encoder parameter set, decoder count,
/// decoder parameter sets. Each set is a count then (name, rows, cols,
/// doubles) records.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

/// Throws CheckpointError on a malformed file or when `expected_vocab_hash`
/// differs from the stored hash.
Checkpoint load_checkpoint(const std::filesystem::path& path, std::uint64_t expected_vocab_hash);

}  // namespace scal::codec
