#pragma once

// VWT volume file:
//   magic "VWT1" | u32 version | u8 ndim | ndim x u32 extents | float32 payload
// All integers and floats little-endian; payload row-major.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "voxdec/tensor.hpp"

namespace voxdec {

inline constexpr std::uint32_t kVolumeFormatVersion = 1;

std::vector<std::uint8_t> encode_volume(const Tensor& tensor);
Tensor decode_volume(std::span<const std::uint8_t> bytes);

void write_volume(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_volume(const std::filesystem::path& path);

}  // namespace voxdec
