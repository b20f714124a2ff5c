#pragma once

// JTEN tensor blobs: "JTEN", u32 version, u32 rank, u64 dims[rank], then
// numel little-endian IEEE-754 binary32 values. Integers are little-endian.

#include <cstdint>
#include <iosfwd>

#include "jiang/tensor.hpp"

namespace jiang {

inline constexpr std::uint32_t kTensorFormatVersion = 1;

// Values are narrowed to FP32 on write; FP32 tensors round-trip exactly.
template <typename T>
void write_tensor(std::ostream& out, const Tensor<T>& tensor);

template <typename T>
Tensor<T> read_tensor(std::istream& in);

namespace io {

void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);

}  // namespace io

}  // namespace jiang
