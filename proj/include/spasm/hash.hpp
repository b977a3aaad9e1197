#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace spasm {

// 64-bit FNV-1a. Used wherever a hash must be stable across processes and
// platforms (mock backends, history fingerprints, cache keys); std::hash
// gives no such guarantee.
class Fnv1a {
public:
  Fnv1a& update(std::string_view bytes) noexcept {
    for (unsigned char c : bytes) {
      state_ ^= c;
      state_ *= kPrime;
    }
    return *this;
  }

  // Length-prefixed update, so ("ab","c") and ("a","bc") hash differently.
  Fnv1a& field(std::string_view bytes) noexcept {
    update(std::to_string(bytes.size()));
    update(":");
    return update(bytes);
  }

  Fnv1a& field(std::uint64_t v) noexcept { return field(std::to_string(v)); }

  std::uint64_t digest() const noexcept { return state_; }

private:
  static constexpr std::uint64_t kOffset = 0xcbf29ce484222325ULL;
  static constexpr std::uint64_t kPrime = 0x100000001b3ULL;
  std::uint64_t state_ = kOffset;
};

inline std::uint64_t fnv1a(std::string_view bytes) noexcept {
  return Fnv1a{}.update(bytes).digest();
}

inline std::string to_hex(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[v & 0xF];
    v >>= 4;
  }
  return out;
}

} // namespace spasm
