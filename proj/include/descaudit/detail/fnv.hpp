#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace descaudit::detail {

inline std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t hash = 1469598103934665603ull;
  for (unsigned char c : data) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  return hash;
}

inline std::string fnv1a64_hex(std::string_view data) {
  static const char* kDigits = "0123456789abcdef";
  std::uint64_t hash = fnv1a64(data);
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = kDigits[hash & 0xf];
    hash >>= 4;
  }
  return out;
}

}  // namespace descaudit::detail
