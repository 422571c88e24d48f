#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "talesumm/tensor.hpp"

namespace talesumm::io {

/// TSTN container, all integers little-endian:
///
///   offset 0   magic "TSTN"
///   offset 4   u32 version (= 1)
///   offset 8   u8  dtype (1 = float32)
///   offset 9   u8  ndim
///   offset 10  ndim x u32 dims
///   then       product(dims) float32 values, row-major
inline constexpr std::uint32_t kTensorFormatVersion = 1;
inline constexpr std::uint8_t kDtypeFloat32 = 1;

std::vector<std::uint8_t> encode_tensor(const Tensor<float>& tensor);

/// Throws ParseError (with byte offset) on bad magic, unsupported
/// version/dtype, truncation, dim overflow, or a payload length other than
/// 4 * product(dims).
Tensor<float> decode_tensor(std::span<const std::uint8_t> bytes);

void write_tensor(const std::filesystem::path& path, const Tensor<float>& tensor);
Tensor<float> read_tensor(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace talesumm::io
