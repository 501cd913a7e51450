#include "flame/error.hpp"

namespace flame {

ParseError::ParseError(const std::string& what, std::size_t byte_offset)
    : Error(what + " (at byte " + std::to_string(byte_offset) + ")"),
      byte_offset_(byte_offset) {}

}  // namespace flame
