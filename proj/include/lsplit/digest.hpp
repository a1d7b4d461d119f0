#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace lsplit {

// FNV-1a over bytes. std::hash is not stable across implementations, and every
// digest written into a manifest must be reproducible on any platform.
class Fnv1a {
 public:
  static constexpr std::uint64_t kPrime = 0x100000001b3ULL;
  static constexpr std::uint64_t kOffset = 0xcbf29ce484222325ULL;

  void update(std::string_view bytes) {
    for (unsigned char c : bytes) {
      hash_ ^= c;
      hash_ *= kPrime;
    }
  }

  // Length-prefixed so that ("ab","c") and ("a","bc") digest differently.
  void update_field(std::string_view bytes) {
    update_u64(bytes.size());
    update(bytes);
  }

  void update_u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      hash_ ^= static_cast<unsigned char>(v >> (8 * i));
      hash_ *= kPrime;
    }
  }

  std::uint64_t value() const { return hash_; }
  std::string hex() const;

 private:
  std::uint64_t hash_ = kOffset;
};

std::string digest_hex(std::string_view bytes);

}  // namespace lsplit
