#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mdc/tensor.hpp"

namespace mdc {

// `.tns` layout: u32 rank, u32 extents[rank], f32 data[...]; all little-endian.
std::vector<std::uint8_t> encode_tensor(const Tensor& tensor);
Tensor decode_tensor(const std::vector<std::uint8_t>& bytes);

void save_tensor(const Tensor& tensor, const std::filesystem::path& path);
Tensor load_tensor(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace mdc
