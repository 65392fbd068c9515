#include "densesteer/io.hpp"

#include <openssl/evp.h>

#include <array>
#include <atomic>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "densesteer/errors.hpp"

namespace densesteer {

static_assert(std::endian::native == std::endian::little,
              "container encoding assumes a little-endian host");

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xF]);
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return std::move(ss).str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view data) {
  static std::atomic<unsigned> counter{0};
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename onto " + path.string());
  }
}

std::string encode_container(const json& manifest, std::string_view payload) {
  const std::string text = json_dump(manifest);
  std::string out;
  out.reserve(8 + text.size() + payload.size());
  std::uint64_t len = text.size();
  char header[8];
  std::memcpy(header, &len, sizeof(len));
  out.append(header, 8);
  out += text;
  out += payload;
  return out;
}

Container decode_container(std::string_view bytes) {
  if (bytes.size() < 8) throw FormatError("container shorter than its 8-byte header");
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data(), sizeof(len));
  if (len > bytes.size() - 8) throw FormatError("container truncated inside the manifest");
  Container c;
  try {
    c.manifest = json::parse(bytes.substr(8, len));
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!c.manifest.is_object()) throw FormatError("manifest is not a JSON object");
  c.payload = std::string(bytes.substr(8 + len));
  return c;
}

void append_f32_le(std::string& out, std::span<const float> values) {
  const std::size_t old = out.size();
  out.resize(old + values.size() * sizeof(float));
  std::memcpy(out.data() + old, values.data(), values.size() * sizeof(float));
}

void read_f32_le(std::string_view src, std::size_t offset, std::span<float> dst) {
  const std::size_t nbytes = dst.size() * sizeof(float);
  if (offset > src.size() || nbytes > src.size() - offset) {
    throw ChecksumError("float payload extends past the end of the data");
  }
  std::memcpy(dst.data(), src.data() + offset, nbytes);
}

std::string json_dump(const json& j) {
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

}  // namespace densesteer
