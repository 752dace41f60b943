#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "steinflow/lattice.hpp"

namespace steinflow::io {

inline constexpr char kTensorMagic[8] = {'S', 'F', 'T', 'E', 'N', 'S', 'O', 'R'};
inline constexpr std::uint32_t kTensorVersion = 1;

/// magic(8) | u32 LE version | u32 LE reserved (0) | 4 x u32 LE dims (H, W, N, C) | f32 LE payload.
std::vector<std::uint8_t> encode_tensor(const LatticeField& field);
LatticeField decode_tensor(std::span<const std::uint8_t> bytes);

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

void write_tensor(const std::filesystem::path& path, const LatticeField& field);
LatticeField read_tensor(const std::filesystem::path& path);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(const std::string& text);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace steinflow::io
