#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace grouprel::kernels {

// Data-parallel primitives used by the hot loops. Reductions are computed
// over fixed-size chunks whose partials are combined in chunk order, so the
// result is bit-identical for any OpenMP thread count (including 1).
inline constexpr std::size_t kChunk = 8192;

double sum(std::span<const double> x);
double dot(std::span<const double> a, std::span<const double> b);
double max_value(std::span<const double> x);
void softmax(std::span<const double> logits, std::span<double> probs);
double entropy(std::span<const double> probs);
double masked_sum(std::span<const double> x, std::span<const std::uint8_t> mask,
                  std::uint8_t want);
double masked_sq_sum(std::span<const double> x,
                     std::span<const std::uint8_t> mask, std::uint8_t want);
// sum over masked entries of max(0, p0 - pt)
double retained_loss(std::span<const double> p0, std::span<const double> pt,
                     std::span<const std::uint8_t> mask);

// Plain single-loop implementations, kept as the reference the parallel
// kernels are tested and benchmarked against.
namespace serial {
double sum(std::span<const double> x);
double dot(std::span<const double> a, std::span<const double> b);
double max_value(std::span<const double> x);
void softmax(std::span<const double> logits, std::span<double> probs);
double entropy(std::span<const double> probs);
double masked_sum(std::span<const double> x, std::span<const std::uint8_t> mask,
                  std::uint8_t want);
double masked_sq_sum(std::span<const double> x,
                     std::span<const std::uint8_t> mask, std::uint8_t want);
double retained_loss(std::span<const double> p0, std::span<const double> pt,
                     std::span<const std::uint8_t> mask);
}  // namespace serial

// Alias-method table (Vose construction): O(n) build, O(1) per draw. The
// work buffers persist so repeated rebuilds at a fixed size do not allocate.
struct AliasTable {
  std::vector<double> accept;
  std::vector<std::uint32_t> alias;
  std::vector<double> scaled;        // build scratch
  std::vector<std::uint32_t> worklist;  // build scratch
  std::size_t size() const { return accept.size(); }
};

void build_alias(std::span<const double> probs, AliasTable& out);

inline std::uint32_t alias_pick(const AliasTable& t, std::uint64_t word,
                                double u) {
  const auto slot = static_cast<std::uint32_t>(
      (static_cast<unsigned __int128>(word) * t.size()) >> 64);
  return u < t.accept[slot] ? slot : t.alias[slot];
}

}  // namespace grouprel::kernels
