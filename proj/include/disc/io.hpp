#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "disc/mask.hpp"
#include "disc/tensor.hpp"

namespace disc {

// Masks travel as binary PGM (P5), maxval 3, pixel value = label id.
void write_mask_pgm(const std::filesystem::path& path, const LabelMask& m);
LabelMask read_mask_pgm(const std::filesystem::path& path);

// Tiles travel as binary PPM (P6), 8-bit. Tensor layout (3,H,W), values in
// [0,1]; writing clamps and rounds, reading maps back to [0,1].
void write_tile_ppm(const std::filesystem::path& path, const Tensor& img);
Tensor read_tile_ppm(const std::filesystem::path& path);

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const void* data, std::size_t n);

// FNV-1a over a file's bytes, rendered as 16 hex digits (manifest currency).
std::string hash_file_hex(const std::filesystem::path& path);
std::string hash_bytes_hex(const void* data, std::size_t n);

}  // namespace disc
