#include "grouprel/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>

namespace grouprel::kernels {

namespace {

inline std::size_t chunk_count(std::size_t n) { return (n + kChunk - 1) / kChunk; }

template <typename Fn>
std::vector<double> chunk_partials(std::size_t n, Fn&& body) {
  const std::size_t nc = chunk_count(n);
  std::vector<double> part(nc, 0.0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(nc); ++c) {
    const std::size_t lo = static_cast<std::size_t>(c) * kChunk;
    const std::size_t hi = std::min(lo + kChunk, n);
    part[static_cast<std::size_t>(c)] = body(lo, hi);
  }
  return part;
}

inline double combine(const std::vector<double>& part) {
  double s = 0.0;
  for (double v : part) s += v;
  return s;
}

}  // namespace

namespace serial {

double sum(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double max_value(std::span<const double> x) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : x) m = std::max(m, v);
  return m;
}

void softmax(std::span<const double> logits, std::span<double> probs) {
  const double m = max_value(logits);
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - m);
    z += probs[i];
  }
  for (std::size_t i = 0; i < probs.size(); ++i) probs[i] /= z;
}

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

double masked_sum(std::span<const double> x, std::span<const std::uint8_t> mask,
                  std::uint8_t want) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (mask[i] == want) s += x[i];
  return s;
}

double masked_sq_sum(std::span<const double> x,
                     std::span<const std::uint8_t> mask, std::uint8_t want) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (mask[i] == want) s += x[i] * x[i];
  return s;
}

double retained_loss(std::span<const double> p0, std::span<const double> pt,
                     std::span<const std::uint8_t> mask) {
  double s = 0.0;
  for (std::size_t i = 0; i < p0.size(); ++i)
    if (mask[i]) s += std::max(0.0, p0[i] - pt[i]);
  return s;
}

}  // namespace serial

double sum(std::span<const double> x) {
  if (x.size() <= kChunk) return serial::sum(x);
  return combine(chunk_partials(x.size(), [&](std::size_t lo, std::size_t hi) {
    return serial::sum(x.subspan(lo, hi - lo));
  }));
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() <= kChunk) return serial::dot(a, b);
  return combine(chunk_partials(a.size(), [&](std::size_t lo, std::size_t hi) {
    return serial::dot(a.subspan(lo, hi - lo), b.subspan(lo, hi - lo));
  }));
}

double max_value(std::span<const double> x) {
  if (x.size() <= kChunk) return serial::max_value(x);
  const auto part =
      chunk_partials(x.size(), [&](std::size_t lo, std::size_t hi) {
        return serial::max_value(x.subspan(lo, hi - lo));
      });
  double m = -std::numeric_limits<double>::infinity();
  for (double v : part) m = std::max(m, v);
  return m;
}

void softmax(std::span<const double> logits, std::span<double> probs) {
  if (logits.size() <= kChunk) {
    serial::softmax(logits, probs);
    return;
  }
  const double m = max_value(logits);
  const auto part =
      chunk_partials(logits.size(), [&](std::size_t lo, std::size_t hi) {
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
          probs[i] = std::exp(logits[i] - m);
          s += probs[i];
        }
        return s;
      });
  const double z = combine(part);
  const std::size_t n = probs.size();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
    probs[static_cast<std::size_t>(i)] /= z;
}

double entropy(std::span<const double> probs) {
  if (probs.size() <= kChunk) return serial::entropy(probs);
  return combine(
      chunk_partials(probs.size(), [&](std::size_t lo, std::size_t hi) {
        return serial::entropy(probs.subspan(lo, hi - lo));
      }));
}

double masked_sum(std::span<const double> x, std::span<const std::uint8_t> mask,
                  std::uint8_t want) {
  if (x.size() <= kChunk) return serial::masked_sum(x, mask, want);
  return combine(chunk_partials(x.size(), [&](std::size_t lo, std::size_t hi) {
    return serial::masked_sum(x.subspan(lo, hi - lo),
                              mask.subspan(lo, hi - lo), want);
  }));
}

double masked_sq_sum(std::span<const double> x,
                     std::span<const std::uint8_t> mask, std::uint8_t want) {
  if (x.size() <= kChunk) return serial::masked_sq_sum(x, mask, want);
  return combine(chunk_partials(x.size(), [&](std::size_t lo, std::size_t hi) {
    return serial::masked_sq_sum(x.subspan(lo, hi - lo),
                                 mask.subspan(lo, hi - lo), want);
  }));
}

double retained_loss(std::span<const double> p0, std::span<const double> pt,
                     std::span<const std::uint8_t> mask) {
  if (p0.size() <= kChunk) return serial::retained_loss(p0, pt, mask);
  return combine(chunk_partials(p0.size(), [&](std::size_t lo, std::size_t hi) {
    return serial::retained_loss(p0.subspan(lo, hi - lo),
                                 pt.subspan(lo, hi - lo),
                                 mask.subspan(lo, hi - lo));
  }));
}

void build_alias(std::span<const double> probs, AliasTable& out) {
  const std::size_t n = probs.size();
  out.accept.resize(n);
  out.alias.resize(n);
  out.scaled.resize(n);
  out.worklist.resize(n);

  double* const scaled = out.scaled.data();
  const double nd = static_cast<double>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
    scaled[i] = probs[static_cast<std::size_t>(i)] * nd;

  // Small entries fill the worklist from the front, large from the back.
  std::uint32_t* const work = out.worklist.data();
  std::size_t small_end = 0;
  std::size_t large_begin = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (scaled[i] < 1.0)
      work[small_end++] = static_cast<std::uint32_t>(i);
    else
      work[--large_begin] = static_cast<std::uint32_t>(i);
  }

  std::size_t small_top = small_end;
  std::size_t large_top = large_begin;
  while (small_top > 0 && large_top < n) {
    const std::uint32_t s = work[--small_top];
    const std::uint32_t l = work[large_top];
    out.accept[s] = scaled[s];
    out.alias[s] = l;
    scaled[l] = (scaled[l] + scaled[s]) - 1.0;
    if (scaled[l] < 1.0) {
      ++large_top;
      work[small_top++] = l;
    }
  }
  // Leftovers on either side keep the full column.
  while (large_top < n) {
    const std::uint32_t l = work[large_top++];
    out.accept[l] = 1.0;
    out.alias[l] = l;
  }
  while (small_top > 0) {
    const std::uint32_t s = work[--small_top];
    out.accept[s] = 1.0;
    out.alias[s] = s;
  }
}

}  // namespace grouprel::kernels
