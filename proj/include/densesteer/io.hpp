#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "json.hpp"

namespace densesteer {

using json = nlohmann::json;

std::string sha256_hex(std::string_view bytes);

// Throws IoError.
std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it over `path`, so readers
// never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view data);

// Binary container shared by weight and vector files:
//   u64 little-endian manifest length | UTF-8 JSON manifest | payload
struct Container {
  json manifest;
  std::string payload;
};

std::string encode_container(const json& manifest, std::string_view payload);

// Throws FormatError on truncation or an unparseable manifest.
Container decode_container(std::string_view bytes);

// Little-endian float32 encoding of `values` appended to `out`.
void append_f32_le(std::string& out, std::span<const float> values);
// Reads `dst.size()` floats from `src` at `offset`.
void read_f32_le(std::string_view src, std::size_t offset, std::span<float> dst);

std::string json_dump(const json& j);

}  // namespace densesteer
