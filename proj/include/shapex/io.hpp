#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace shapex::io {

// Writes to a sibling temp file then renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

// Stable 64-bit mixing used for seed derivation and split assignment.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t base, std::string_view stage);

std::string sha256_hex(std::string_view bytes);
std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

}  // namespace shapex::io
