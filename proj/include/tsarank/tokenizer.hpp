#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace tsarank {

using TokenId = std::uint32_t;

/// Byte-level vocabulary: ids 0-255 are raw bytes, followed by four specials.
namespace tokens {
inline constexpr TokenId kBos = 256;
inline constexpr TokenId kEos = 257;
inline constexpr TokenId kPad = 258;
inline constexpr TokenId kSep = 259;
inline constexpr std::size_t kByteVocab = 256;
inline constexpr std::size_t kDefaultVocab = 260;
}  // namespace tokens

enum class SpanRole { Prompt, Query, Document };

struct RoleSpan {
  SpanRole role;
  std::size_t begin;
  std::size_t end;  // exclusive
};

/// Token ids plus the role of each contiguous span.
struct TokenSequence {
  std::vector<TokenId> ids;
  std::vector<RoleSpan> spans;

  std::size_t size() const noexcept { return ids.size(); }
  bool empty() const noexcept { return ids.empty(); }

  /// Appends `other`, shifting its spans.
  void append(const TokenSequence& other);
  /// Ids inside spans with `role`, in order.
  std::vector<TokenId> ids_with_role(SpanRole role) const;
};

/// One token per byte. Total and lossless on any byte string.
TokenSequence tokenize(std::string_view text, SpanRole role = SpanRole::Document);

/// Inverse of tokenize; special ids are skipped.
std::string detokenize(const std::vector<TokenId>& ids);
std::string detokenize(const TokenSequence& seq);

}  // namespace tsarank
