#include "grouprel/analytic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

#include "grouprel/rng.hpp"

namespace grouprel::analytic {

namespace {

// (1-x)^n for x in [0,1]; exact at the endpoints and for n <= 1.
double pow_one_minus(double x, long long n) {
  if (n == 0) return 1.0;
  if (x <= 0.0) return 1.0;
  if (x >= 1.0) return 0.0;
  if (n == 1) return 1.0 - x;
  return std::exp(static_cast<double>(n) * std::log1p(-x));
}

// b^n for b in [0,1].
double pow_base(double b, long long n) {
  if (n == 0) return 1.0;
  if (b <= 0.0) return 0.0;
  if (b >= 1.0) return 1.0;
  if (n == 1) return b;
  return std::exp(static_cast<double>(n) * std::log(b));
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// C(n,k) by the multiplicative recurrence; exact in unsigned arithmetic for
// the n <= 54 range it is used with.
unsigned long long binom_exact(long long n, long long k) {
  if (k < 0 || k > n) return 0;
  if (k > n - k) k = n - k;
  unsigned long long c = 1;
  for (long long i = 0; i < k; ++i) {
    c = c * static_cast<unsigned long long>(n - i) /
        static_cast<unsigned long long>(i + 1);
  }
  return c;
}

// Single-problem pass@k. For small n the ratio C(n-c,k)/C(n,k) is formed from
// exact integer binomials so the result matches exhaustive enumeration
// bit-for-bit; otherwise it is a long-double product of ratios.
double row_pass_at_k(long long n, long long c, long long k) {
  if (k > n - c) return 1.0;
  if (c == 0) return 0.0;
  if (n <= 54) {
    const double num = static_cast<double>(binom_exact(n - c, k));
    const double den = static_cast<double>(binom_exact(n, k));
    return (den - num) / den;
  }
  long double ratio = 1.0L;
  for (long long i = 0; i < k; ++i)
    ratio *= static_cast<long double>(n - c - i) /
             static_cast<long double>(n - i);
  return static_cast<double>(1.0L - ratio);
}

}  // namespace

void PromptStats::validate() const {
  if (!(mu_pos >= 0.0 && mu_pos <= 1.0))
    throw DomainError("prompt stats: mu_pos must lie in [0, 1]");
  if (!(tau >= 0.0 && tau <= mu_pos))
    throw DomainError("prompt stats: need 0 <= tau <= mu_pos");
  if (group_size < 1) throw DomainError("prompt stats: group_size must be >= 1");
}

void ConditionalDist::validate() const {
  if (probs.empty()) throw DomainError("conditional dist: empty support");
  if (!(total_mass >= 0.0 && total_mass <= 1.0))
    throw DomainError("conditional dist: total_mass must lie in [0, 1]");
  double s = 0.0;
  for (double q : probs) {
    if (!(q >= 0.0)) throw DomainError("conditional dist: negative probability");
    s += q;
  }
  if (std::abs(s - 1.0) > 1e-10)
    throw DomainError("conditional dist: probabilities must sum to 1");
}

long long CorrectnessMatrix::row_sum(std::size_t r) const {
  long long s = 0;
  for (std::size_t c = 0; c < cols; ++c) s += at(r, c);
  return s;
}

void CorrectnessMatrix::validate() const {
  if (rows == 0 || cols == 0)
    throw DomainError("correctness matrix: must have at least one row and column");
  if (cells.size() != rows * cols)
    throw DomainError("correctness matrix: shape mismatch");
}

CorrectnessMatrix load_correctness_matrix(std::istream& in) {
  CorrectnessMatrix m;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    // skip blank lines
    if (line.find_first_not_of(" \t,") == std::string::npos) continue;
    std::vector<std::uint8_t> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t");
      const auto e = cell.find_last_not_of(" \t");
      if (b == std::string::npos)
        throw DomainError("correctness matrix: empty cell");
      const std::string t = cell.substr(b, e - b + 1);
      if (t == "0")
        row.push_back(0);
      else if (t == "1")
        row.push_back(1);
      else
        throw DomainError("correctness matrix: cell '" + t +
                          "' is not 0 or 1");
    }
    if (m.rows == 0) {
      m.cols = row.size();
    } else if (row.size() != m.cols) {
      throw DomainError("correctness matrix: ragged rows");
    }
    m.cells.insert(m.cells.end(), row.begin(), row.end());
    ++m.rows;
  }
  m.validate();
  return m;
}

CorrectnessMatrix load_correctness_matrix_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return load_correctness_matrix(in);
}

double activity_probability(const PromptStats& stats) {
  stats.validate();
  if (stats.group_size == 1) return 0.0;
  const double v = 1.0 - pow_base(stats.mu_pos, stats.group_size) -
                   pow_one_minus(stats.mu_pos, stats.group_size);
  return clamp01(v);
}

double tail_miss_probability(const PromptStats& stats) {
  stats.validate();
  if (stats.group_size == 1) return 0.0;
  const double v = pow_one_minus(stats.tau, stats.group_size) -
                   pow_base(stats.mu_pos - stats.tau, stats.group_size) -
                   pow_one_minus(stats.mu_pos, stats.group_size);
  if (v < 0.0) {
    if (v > -1e-12) return 0.0;
    throw NumericalError("tail-miss probability: inconsistent negative value");
  }
  return std::min(v, 1.0);
}

PeakResult tail_miss_peak(double mu_pos, double tau, long long n_max) {
  if (n_max < 1) throw DomainError("tail-miss peak: n_max must be >= 1");
  if (!(tau > 0.0 && tau < mu_pos && mu_pos < 1.0))
    throw DomainError("tail-miss peak: need 0 < tau < mu_pos < 1");

  const auto eval = [&](long long n) {
    return tail_miss_probability(PromptStats{mu_pos, tau, n});
  };

  // 64 log-spaced probes over [1, n_max].
  std::vector<long long> probes;
  const int kProbes = 64;
  const double span = std::log(static_cast<double>(n_max));
  for (int i = 0; i < kProbes; ++i) {
    const double t = kProbes == 1 ? 0.0 : static_cast<double>(i) / (kProbes - 1);
    auto n = static_cast<long long>(std::llround(std::exp(t * span)));
    n = std::clamp<long long>(n, 1, n_max);
    if (probes.empty() || probes.back() != n) probes.push_back(n);
  }

  std::size_t best = 0;
  double best_val = -1.0;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const double v = eval(probes[i]);
    if (v > best_val) {
      best_val = v;
      best = i;
    }
  }

  const long long lo = best > 0 ? probes[best - 1] : 1;
  const long long hi = best + 1 < probes.size() ? probes[best + 1] : n_max;
  PeakResult out{lo, eval(lo)};
  for (long long n = lo + 1; n <= hi; ++n) {
    const double v = eval(n);
    if (v > out.value) {
      out.value = v;
      out.n_star = n;
    }
  }
  return out;
}

double expected_sampled_mass_given_k(const ConditionalDist& dist, long long k) {
  dist.validate();
  if (k < 0) throw DomainError("expected sampled mass: k must be >= 0");
  if (k == 0) return 0.0;
  double s = 0.0;
  for (double q : dist.probs)
    s += dist.total_mass * q * (1.0 - pow_one_minus(q, k));
  return s;
}

double expected_baseline_given_k(const ConditionalDist& pos,
                                 const ConditionalDist& neg, long long k,
                                 long long n, const RewardConfig& cfg) {
  cfg.validate();
  if (k < 0 || k > n)
    throw DomainError("expected baseline: k must lie in [0, N]");
  return cfg.r_correct * expected_sampled_mass_given_k(pos, k) +
         cfg.r_wrong * expected_sampled_mass_given_k(neg, n - k);
}

double pass_at_k(const CorrectnessMatrix& matrix, long long k) {
  matrix.validate();
  if (k < 1) throw DomainError("pass@k: k must be >= 1");
  if (k > static_cast<long long>(matrix.cols))
    throw DomainError("pass@k: k exceeds the number of generations");
  double s = 0.0;
  for (std::size_t r = 0; r < matrix.rows; ++r)
    s += row_pass_at_k(static_cast<long long>(matrix.cols), matrix.row_sum(r),
                       k);
  return s / static_cast<double>(matrix.rows);
}

SubsampleTestResult paired_subsample_test(const CorrectnessMatrix& a,
                                          const CorrectnessMatrix& b,
                                          long long m, long long k,
                                          long long iterations, double alpha,
                                          std::uint64_t seed,
                                          bool shared_indices) {
  a.validate();
  b.validate();
  if (a.rows != b.rows || a.cols != b.cols)
    throw DomainError("subsample test: matrices must have identical shape");
  const auto n = static_cast<long long>(a.cols);
  if (m < 1 || m > n) throw DomainError("subsample test: need 1 <= m <= n");
  if (k < 1 || k > m) throw DomainError("subsample test: need 1 <= k <= m");
  if (iterations < 1) throw DomainError("subsample test: iterations must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw DomainError("subsample test: alpha must lie in (0, 1)");

  const rng::Stream root = rng::stream(seed);
  std::vector<double> diffs(static_cast<std::size_t>(iterations));
  const auto rows = static_cast<long long>(a.rows);

  // Each (iteration, problem) pair owns its stream, so sharding across
  // threads cannot change the outcome.
#pragma omp parallel
  {
    std::vector<std::uint32_t> idx(static_cast<std::size_t>(n));
#pragma omp for schedule(static)
    for (std::ptrdiff_t it = 0; it < static_cast<std::ptrdiff_t>(iterations);
         ++it) {
      const rng::Stream iter_stream =
          root.child(static_cast<std::uint64_t>(it));
      double pa = 0.0;
      double pb = 0.0;
      for (long long p = 0; p < rows; ++p) {
        const rng::Stream ps = iter_stream.child(static_cast<std::uint64_t>(p));
        const auto subsample_counts = [&](const CorrectnessMatrix& mat,
                                          rng::Sequence& seq) {
          for (long long i = 0; i < n; ++i)
            idx[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(i);
          long long c = 0;
          for (long long j = 0; j < m; ++j) {
            const long long r =
                j + static_cast<long long>(
                        seq.below(static_cast<std::uint64_t>(n - j)));
            std::swap(idx[static_cast<std::size_t>(j)],
                      idx[static_cast<std::size_t>(r)]);
            c += mat.at(static_cast<std::size_t>(p),
                        idx[static_cast<std::size_t>(j)]);
          }
          return c;
        };
        rng::Sequence seq_a(ps.child(0));
        const long long ca = subsample_counts(a, seq_a);
        long long cb;
        if (shared_indices) {
          rng::Sequence seq_b(ps.child(0));
          cb = subsample_counts(b, seq_b);
        } else {
          rng::Sequence seq_b(ps.child(1));
          cb = subsample_counts(b, seq_b);
        }
        pa += row_pass_at_k(m, ca, k);
        pb += row_pass_at_k(m, cb, k);
      }
      diffs[static_cast<std::size_t>(it)] =
          (pb - pa) / static_cast<double>(rows);
    }
  }

  double mean = 0.0;
  long long below = 0;
  long long at_zero = 0;
  for (double d : diffs) {
    mean += d;
    if (d < 0.0)
      ++below;
    else if (d == 0.0)
      ++at_zero;
  }
  mean /= static_cast<double>(iterations);
  const double f0 = (static_cast<double>(below) +
                     0.5 * static_cast<double>(at_zero)) /
                    static_cast<double>(iterations);
  const double p_value = 2.0 * std::min(f0, 1.0 - f0);
  return SubsampleTestResult{mean, p_value, p_value < alpha};
}

}  // namespace grouprel::analytic
