#pragma once

// JCKP checkpoint files:
//   "JCKP" u32 version
//   u32 n, n bytes of UTF-8 key=value text (model.* config keys plus any
//     extra run-state keys)
//   u64 tokens_seen
//   u32 record count, then per record: u32 name length, name, JTEN blob
// Payloads are FP32, so FP32 weights survive a save/load bit-for-bit.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "jiang/config.hpp"
#include "jiang/model.hpp"

namespace jiang {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  std::uint64_t tokens_seen = 0;
  KeyValues meta;  // non-model keys
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  template <typename T>
  static Checkpoint from_weights(const ModelConfig& config, const DecoderWeights<T>& weights,
                                 std::uint64_t tokens_seen = 0);

  // Rebuilds decoder weights from the records that are not prefixed "opt.".
  template <typename T>
  DecoderWeights<T> weights() const;

  const Tensor<float>* find(const std::string& name) const;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

// Writes to a sibling temp file and renames it into place; on failure the
// destination is left untouched and IoError is thrown.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace jiang
