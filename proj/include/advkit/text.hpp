#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace advkit {

// Text is stored as UTF-8 at the API boundary and as code points internally.
// All character offsets in this library count code points, not bytes.

class TextError : public std::runtime_error {
 public:
  TextError(const std::string& what, std::size_t byte_offset)
      : std::runtime_error(what), byte_offset_(byte_offset) {}
  std::size_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

std::u32string to_u32(std::string_view utf8);
std::string to_utf8(std::u32string_view text);
std::string to_utf8(char32_t c);

}  // namespace advkit
