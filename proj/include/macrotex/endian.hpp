#pragma once

#include <cstdint>

namespace macrotex::detail {

inline bool host_is_little_endian() {
  const std::uint16_t probe = 1;
  return *reinterpret_cast<const std::uint8_t*>(&probe) == 1;
}

}  // namespace macrotex::detail
