#pragma once

#include <string>
#include <string_view>

namespace grag::text {

// UTF-8 <-> code points. Invalid bytes decode to U+FFFD.
std::u32string decode_utf8(std::string_view s);
std::string encode_utf8(std::u32string_view s);
void append_utf8(std::string& out, char32_t cp);

char32_t to_lower(char32_t c);
char32_t to_upper(char32_t c);
bool is_space(char32_t c);

std::string_view trim(std::string_view s);
std::string to_lower_ascii(std::string_view s);

}  // namespace grag::text
