#include "jiang/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "jiang/error.hpp"
#include "jiang/serialize.hpp"

namespace jiang {

template <typename T>
Checkpoint Checkpoint::from_weights(const ModelConfig& config, const DecoderWeights<T>& weights,
                                   std::uint64_t tokens_seen) {
  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.tokens_seen = tokens_seen;
  for (const auto& [name, t] : weights.named_parameters()) ckpt.tensors.emplace_back(name, t.template cast<float>());
  return ckpt;
}

template <typename T>
DecoderWeights<T> Checkpoint::weights() const {
  std::vector<std::pair<std::string, Tensor<T>>> named;
  for (const auto& [name, t] : tensors) {
    if (name.rfind("opt.", 0) == 0) continue;
    named.emplace_back(name, t.template cast<T>());
  }
  return weights_from_named<T>(config, named);
}

const Tensor<float>* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  KeyValues header = ckpt.meta;
  ckpt.config.write_to(header);
  const std::string text = header.serialize();
  out.write("JCKP", 4);
  io::write_u32(out, kCheckpointVersion);
  io::write_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  io::write_u64(out, ckpt.tokens_seen);
  io::write_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    io::write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_tensor(out, t);
  }
  if (!out) throw IoError("write_checkpoint: stream failure");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "JCKP", 4) != 0) throw IoError("read_checkpoint: bad magic");
  const std::uint32_t version = io::read_u32(in);
  if (version != kCheckpointVersion) throw IoError("read_checkpoint: unsupported version " + std::to_string(version));
  const std::uint32_t text_len = io::read_u32(in);
  std::string text(text_len, '\0');
  in.read(text.data(), text_len);
  if (!in) throw IoError("read_checkpoint: truncated header");
  const KeyValues header = KeyValues::parse(text);

  Checkpoint ckpt;
  ckpt.config = ModelConfig::from(header);
  for (const auto& [k, v] : header.entries()) {
    if (k.rfind("model.", 0) != 0) ckpt.meta.set(k, v);
  }
  ckpt.tokens_seen = io::read_u64(in);
  const std::uint32_t count = io::read_u32(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = io::read_u32(in);
    if (name_len > 4096) throw IoError("read_checkpoint: implausible record name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw IoError("read_checkpoint: truncated record name");
    ckpt.tensors.emplace_back(std::move(name), read_tensor<float>(in));
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("save_checkpoint: cannot open " + tmp.string());
    write_checkpoint(out, ckpt);
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("save_checkpoint: write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("save_checkpoint: cannot move checkpoint into " + path.string());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open " + path.string());
  return read_checkpoint(in);
}

template Checkpoint Checkpoint::from_weights<float>(const ModelConfig&, const DecoderWeights<float>&, std::uint64_t);
template Checkpoint Checkpoint::from_weights<double>(const ModelConfig&, const DecoderWeights<double>&, std::uint64_t);
template DecoderWeights<float> Checkpoint::weights<float>() const;
template DecoderWeights<double> Checkpoint::weights<double>() const;

}  // namespace jiang
