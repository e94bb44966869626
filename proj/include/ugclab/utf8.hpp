#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ugclab::utf8 {

/// Decode a UTF-8 byte string to unicode scalar values. Throws DecodeError
/// with the offset of the first offending byte (overlong forms, surrogates,
/// and truncated sequences are rejected).
std::u32string decode(std::string_view bytes);

std::string encode(char32_t cp);
std::string encode(std::u32string_view cps);

/// Unicode White_Space property.
bool is_space(char32_t cp);

/// Punctuation and symbols that the tokenizer splits off as separate tokens.
bool is_punct(char32_t cp);

/// Pictographs and dingbats; each one becomes its own token.
bool is_symbol(char32_t cp);

inline bool is_ascii_digit(char32_t cp) { return cp >= U'0' && cp <= U'9'; }

/// Letters, digits and marks: everything that is neither space, punctuation,
/// nor a standalone symbol.
inline bool is_word(char32_t cp) { return !is_space(cp) && !is_punct(cp) && !is_symbol(cp); }

}  // namespace ugclab::utf8
