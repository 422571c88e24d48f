#include "talesumm/tensor_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include "talesumm/error.hpp"

namespace talesumm::io {
namespace {

constexpr std::uint8_t kMagic[4] = {'T', 'S', 'T', 'N'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[offset + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor<float>& tensor) {
  if (tensor.rank() > std::numeric_limits<std::uint8_t>::max()) {
    throw invalid_input("encode_tensor: rank exceeds 255");
  }
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.reserve(10 + 4 * tensor.rank() + 4 * tensor.size());
  put_u32(out, kTensorFormatVersion);
  out.push_back(kDtypeFloat32);
  out.push_back(static_cast<std::uint8_t>(tensor.rank()));
  for (const auto d : tensor.dims()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) {
      throw invalid_input("encode_tensor: dimension exceeds 32 bits");
    }
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  for (const float v : tensor.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor<float> decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw ParseError("tensor file truncated inside magic", bytes.size());
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw ParseError("tensor file has bad magic", 0);
  if (bytes.size() < 10) throw ParseError("tensor file truncated inside header", bytes.size());
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kTensorFormatVersion) {
    throw ParseError("unsupported tensor format version " + std::to_string(version), 4);
  }
  if (bytes[8] != kDtypeFloat32) {
    throw ParseError("unsupported tensor dtype code " + std::to_string(bytes[8]), 8);
  }
  const std::size_t ndim = bytes[9];
  const std::size_t header = 10 + 4 * ndim;
  if (bytes.size() < header) throw ParseError("tensor file truncated inside dims", bytes.size());
  Dims dims(ndim);
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < ndim; ++i) {
    dims[i] = get_u32(bytes, 10 + 4 * i);
    if (dims[i] != 0 && count > (std::numeric_limits<std::uint64_t>::max() / 4) / dims[i]) {
      throw ParseError("tensor dims overflow", 10 + 4 * i);
    }
    count *= dims[i];
  }
  const std::uint64_t payload = bytes.size() - header;
  if (payload != 4 * count) {
    throw ParseError("tensor payload length mismatch: dims " + dims_to_string(dims) + " need " +
                         std::to_string(4 * count) + " bytes, found " + std::to_string(payload),
                     header);
  }
  std::vector<float> values(count);
  for (std::size_t i = 0; i < count; ++i) values[i] = std::bit_cast<float>(get_u32(bytes, header + 4 * i));
  return Tensor<float>(std::move(dims), std::move(values));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw io_error("failed reading " + path.string());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw io_error("failed writing " + path.string());
}

void write_tensor(const std::filesystem::path& path, const Tensor<float>& tensor) {
  write_file_bytes(path, encode_tensor(tensor));
}

Tensor<float> read_tensor(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_tensor(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace talesumm::io
