#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace lad::utf8 {

// Invalid sequences decode to U+FFFD.
std::u32string decode(std::string_view text);
std::string encode(char32_t cp);
std::string encode(std::u32string_view text);

}  // namespace lad::utf8
