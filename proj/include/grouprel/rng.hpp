#pragma once

#include <cstdint>

namespace grouprel::rng {

// Counter-based pseudo-random streams. A Stream is a stateless function of
// (key, counter); derived streams are obtained by mixing a tag into the key.
// Because every draw is addressed by an explicit counter, work can be split
// across threads in any order without changing the result.

inline constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;
inline constexpr std::uint64_t kTagGamma = 0xD1B54A32D192ED03ull;

// SplitMix64 output mixer (Stafford variant 13).
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline double to_unit(std::uint64_t word) {
  return static_cast<double>(word >> 11) * 0x1.0p-53;
}

// Maps a word to [0, bound) by the multiply-high method.
inline std::uint64_t to_bounded(std::uint64_t word, std::uint64_t bound) {
  return static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(word) * bound) >> 64);
}

struct Stream {
  std::uint64_t key = 0;

  std::uint64_t at(std::uint64_t counter) const {
    return mix64(key + (counter + 1) * kGamma);
  }
  double unit_at(std::uint64_t counter) const { return to_unit(at(counter)); }

  Stream child(std::uint64_t tag) const {
    return Stream{mix64(key ^ mix64(tag + kTagGamma))};
  }
};

inline Stream stream(std::uint64_t seed) { return Stream{mix64(seed + kGamma)}; }

// Sequential convenience wrapper over a Stream.
struct Sequence {
  Stream s;
  std::uint64_t counter = 0;

  explicit Sequence(Stream str) : s(str) {}
  std::uint64_t next() { return s.at(counter++); }
  double unit() { return to_unit(next()); }
  std::uint64_t below(std::uint64_t bound) { return to_bounded(next(), bound); }
};

}  // namespace grouprel::rng
