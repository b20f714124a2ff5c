#include "jiang/serialize.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <istream>
#include <ostream>

#include "jiang/error.hpp"

namespace jiang {

namespace io {

namespace {

template <typename U>
void write_le(std::ostream& out, U v) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFFU);
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U read_le(std::istream& in) {
  std::array<unsigned char, sizeof(U)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw IoError("truncated stream");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

void write_u32(std::ostream& out, std::uint32_t v) { write_le(out, v); }
void write_u64(std::ostream& out, std::uint64_t v) { write_le(out, v); }
std::uint32_t read_u32(std::istream& in) { return read_le<std::uint32_t>(in); }
std::uint64_t read_u64(std::istream& in) { return read_le<std::uint64_t>(in); }

}  // namespace io

template <typename T>
void write_tensor(std::ostream& out, const Tensor<T>& tensor) {
  out.write("JTEN", 4);
  io::write_u32(out, kTensorFormatVersion);
  io::write_u32(out, static_cast<std::uint32_t>(tensor.rank()));
  for (const std::size_t d : tensor.shape()) io::write_u64(out, d);
  for (const T v : tensor.data()) io::write_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  if (!out) throw IoError("write_tensor: stream failure");
}

template <typename T>
Tensor<T> read_tensor(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "JTEN", 4) != 0) throw IoError("read_tensor: bad magic");
  const std::uint32_t version = io::read_u32(in);
  if (version != kTensorFormatVersion) throw IoError("read_tensor: unsupported version " + std::to_string(version));
  const std::uint32_t rank = io::read_u32(in);
  if (rank > 8) throw IoError("read_tensor: implausible rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) d = io::read_u64(in);
  std::vector<T> data(shape_numel(shape));
  for (auto& v : data) v = static_cast<T>(std::bit_cast<float>(io::read_u32(in)));
  return Tensor<T>(std::move(shape), std::move(data));
}

template void write_tensor<float>(std::ostream&, const Tensor<float>&);
template void write_tensor<double>(std::ostream&, const Tensor<double>&);
template Tensor<float> read_tensor<float>(std::istream&);
template Tensor<double> read_tensor<double>(std::istream&);

}  // namespace jiang
