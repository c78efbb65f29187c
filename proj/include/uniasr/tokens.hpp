#pragma once

#include <cstdint>
#include <string>

#include "uniasr/error.hpp"

namespace uniasr {

using TokenId = std::int32_t;

/// Reserved vocabulary ids. Text tokens start at `first_text_id`.
struct SpecialTokens {
  TokenId pad = 0;
  TokenId sos = 1;
  TokenId eos = 2;
  TokenId first_text_id = 3;

  bool is_special(TokenId t) const { return t == pad || t == sos || t == eos || t < first_text_id; }

  void validate() const {
    if (pad == sos || pad == eos || sos == eos)
      throw Error(ErrorCode::InvalidArgument, "special token ids must be distinct");
    if (first_text_id <= pad || first_text_id <= sos || first_text_id <= eos)
      throw Error(ErrorCode::InvalidArgument, "first_text_id must exceed every special id");
  }
};

/// One element of an interleaved sequence: a speech frame or a text token.
struct Position {
  enum class Kind : std::uint8_t { Speech, Text };

  Kind kind = Kind::Text;
  std::int32_t value = 0;  // frame index for Speech, token id for Text

  static constexpr Position speech(std::int32_t frame) { return {Kind::Speech, frame}; }
  static constexpr Position text(TokenId token) { return {Kind::Text, token}; }

  constexpr bool is_speech() const { return kind == Kind::Speech; }
  constexpr bool is_text() const { return kind == Kind::Text; }

  friend constexpr bool operator==(const Position&, const Position&) = default;
};

/// "s:<frame>" or "t:<token>", the tag format used by the JSON Lines exports.
inline std::string to_tag(const Position& p) {
  return (p.is_speech() ? "s:" : "t:") + std::to_string(p.value);
}

inline Position parse_tag(const std::string& tag) {
  if (tag.size() < 3 || tag[1] != ':' || (tag[0] != 's' && tag[0] != 't'))
    throw Error(ErrorCode::Parse, "bad position tag '" + tag + "'");
  const auto v = static_cast<std::int32_t>(std::stol(tag.substr(2)));
  return tag[0] == 's' ? Position::speech(v) : Position::text(v);
}

}  // namespace uniasr
