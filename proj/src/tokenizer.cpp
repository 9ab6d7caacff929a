#include "tsarank/tokenizer.hpp"

namespace tsarank {

void TokenSequence::append(const TokenSequence& other) {
  const std::size_t offset = ids.size();
  ids.insert(ids.end(), other.ids.begin(), other.ids.end());
  for (auto span : other.spans) {
    span.begin += offset;
    span.end += offset;
    if (!spans.empty() && spans.back().role == span.role && spans.back().end == span.begin) {
      spans.back().end = span.end;
    } else {
      spans.push_back(span);
    }
  }
}

std::vector<TokenId> TokenSequence::ids_with_role(SpanRole role) const {
  std::vector<TokenId> out;
  for (const auto& s : spans)
    if (s.role == role) out.insert(out.end(), ids.begin() + static_cast<std::ptrdiff_t>(s.begin),
                                   ids.begin() + static_cast<std::ptrdiff_t>(s.end));
  return out;
}

TokenSequence tokenize(std::string_view text, SpanRole role) {
  TokenSequence seq;
  seq.ids.reserve(text.size());
  for (unsigned char c : text) seq.ids.push_back(static_cast<TokenId>(c));
  if (!text.empty()) seq.spans.push_back({role, 0, text.size()});
  return seq;
}

std::string detokenize(const std::vector<TokenId>& ids) {
  std::string out;
  out.reserve(ids.size());
  for (TokenId id : ids)
    if (id < tokens::kByteVocab) out.push_back(static_cast<char>(static_cast<unsigned char>(id)));
  return out;
}

std::string detokenize(const TokenSequence& seq) { return detokenize(seq.ids); }

}  // namespace tsarank
