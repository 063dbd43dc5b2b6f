#include "voxdec/volume_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "voxdec/error.hpp"

namespace voxdec {
namespace {

constexpr char kMagic[4] = {'V', 'W', 'T', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_volume(const Tensor& tensor) {
  if (tensor.rank() == 0 || tensor.rank() > 255) throw ShapeError("volume files hold tensors of rank 1..255");
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kVolumeFormatVersion);
  out.push_back(static_cast<std::uint8_t>(tensor.rank()));
  for (auto d : tensor.dims()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw ShapeError("volume extent exceeds 32 bits");
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  out.reserve(out.size() + 4 * tensor.size());
  for (double v : tensor.values()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

Tensor decode_volume(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 9 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw DataError("not a VWT volume (bad magic)");
  const auto version = get_u32(bytes, 4);
  if (version != kVolumeFormatVersion) throw DataError("unsupported VWT version " + std::to_string(version));
  const std::size_t ndim = bytes[8];
  if (ndim == 0) throw DataError("VWT volume declares zero dimensions");
  std::size_t at = 9;
  if (bytes.size() < at + 4 * ndim) throw DataError("VWT header truncated");
  Dims dims(ndim);
  for (auto& d : dims) {
    d = get_u32(bytes, at);
    at += 4;
    if (d == 0) throw DataError("VWT volume has a zero extent");
  }
  const auto n = element_count(dims);
  if (bytes.size() != at + 4 * n)
    throw DataError("VWT payload is " + std::to_string(bytes.size() - at) + " bytes, expected " +
                    std::to_string(4 * n));
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i, at += 4) values[i] = static_cast<double>(std::bit_cast<float>(get_u32(bytes, at)));
  return Tensor(std::move(dims), std::move(values));
}

void write_volume(const std::filesystem::path& path, const Tensor& tensor) {
  const auto bytes = encode_volume(tensor);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

Tensor read_volume(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read volume " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_volume(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace voxdec
