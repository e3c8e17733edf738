#pragma once

#include <charconv>
#include <string>

namespace bl {

/// Shortest decimal string that parses back to exactly `v`.
inline std::string shortest(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace bl
