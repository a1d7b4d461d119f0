#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace lsplit {

// Salts separating the independent random streams used inside one split.
inline constexpr std::uint64_t kSelectionStream = 0x5e1ec7ed00000000ULL;
inline constexpr std::uint64_t kDevTestStream = 0xde7e570000000000ULL;
inline constexpr std::uint64_t kFoldStream = 0xf01d000000000000ULL;
inline constexpr std::uint64_t kSwapStream = 0x5a4b000000000000ULL;

// Per-task seeds (null-distribution trials, independent jobs) are seed XOR
// task index.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return seed ^ index;
}

// Platform-stable random source. std::mt19937_64 output is fixed by the
// standard; the distribution adaptors are not, so bounded draws and shuffles
// are implemented here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    std::uint64_t draw = engine_();
    while (draw >= limit) draw = engine_();
    return draw % bound;
  }

  // Uniform in [0, 1) with 53 bits of precision.
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      using std::swap;
      swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace lsplit
