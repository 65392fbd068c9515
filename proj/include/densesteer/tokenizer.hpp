#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace densesteer {

using TokenId = std::int32_t;

// Byte-level vocabulary: ids 0..255 are raw bytes, followed by three
// reserved control ids.
struct ByteTokenizer {
  static constexpr TokenId kBos = 256;
  static constexpr TokenId kEos = 257;
  static constexpr TokenId kPad = 258;
  static constexpr std::int64_t kVocabSize = 259;

  static std::vector<TokenId> tokenize(std::string_view text);

  // Control ids and out-of-range ids produce no bytes.
  static std::string detokenize(std::span<const TokenId> ids);
};

// Replaces every ill-formed UTF-8 sequence with U+FFFD. Model generations are
// arbitrary byte strings; text persisted to JSON has to be valid UTF-8.
std::string sanitize_utf8(std::string_view bytes);

// Unicode scalar values of a valid UTF-8 string (ill-formed bytes decode to
// U+FFFD one byte at a time).
std::vector<char32_t> decode_utf8(std::string_view text);

}  // namespace densesteer
