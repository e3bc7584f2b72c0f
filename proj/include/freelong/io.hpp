#pragma once

#include <filesystem>

#include "freelong/tensor.hpp"

namespace freelong {

// "VLT1" container, fixed little-endian regardless of host:
//   magic "VLT1" | dtype u8 | ndim u8 | ndim x u64 axis lengths | payload
// Payload is row-major; complex64 elements are interleaved (re, im) real32.
// Writes go to a sibling temp file and are renamed into place, so a failed
// write never leaves a partial tensor at the target path.
void write_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor read_tensor(const std::filesystem::path& path);

// FNV-1a over the VLT1 encoding; stable across hosts, used in manifests.
std::uint64_t tensor_checksum(const Tensor& t);

} // namespace freelong
