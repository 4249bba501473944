#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "grouprel/core.hpp"
#include "grouprel/errors.hpp"

namespace grouprel::analytic {

// (mu_pos, tau, N): per-prompt success probability, rare-correct mass, and
// group size. Invariant: 0 <= tau <= mu_pos <= 1, N >= 1.
struct PromptStats {
  double mu_pos = 0.5;
  double tau = 0.0;
  long long group_size = 1;

  void validate() const;
  double rho() const { return tau / mu_pos; }
};

// A restricted distribution q over a labeled support together with the total
// mass of its region, so that pi(o) = total_mass * q(o).
struct ConditionalDist {
  std::vector<double> probs;
  double total_mass = 1.0;

  void validate() const;
};

// Boolean correctness outcomes, rows = problems, columns = generations.
struct CorrectnessMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> cells;  // row-major

  std::uint8_t at(std::size_t r, std::size_t c) const {
    return cells[r * cols + c];
  }
  long long row_sum(std::size_t r) const;
  void validate() const;
};

// Parses rows of comma-separated 0/1 cells; no header, rectangular.
CorrectnessMatrix load_correctness_matrix(std::istream& in);
CorrectnessMatrix load_correctness_matrix_file(const std::string& path);

// Probability that a group of size N contains both correct and incorrect
// rollouts: 1 - mu^N - (1-mu)^N, evaluated in log space and clamped to [0,1].
double activity_probability(const PromptStats& stats);

// Probability that the group is active yet contains no rollout from the
// rare-correct region: (1-tau)^N - (mu-tau)^N - (1-mu)^N. Powers are taken
// as exp(N*log1p(-x)); tiny negative results of the subtraction are clamped
// to zero, larger ones raise NumericalError.
double tail_miss_probability(const PromptStats& stats);

struct PeakResult {
  long long n_star = 1;
  double value = 0.0;
};

// Integer N in [1, n_max] maximizing tail_miss_probability: a 64-point
// log-spaced probe pass picks the bracket, which is then scanned exhaustively.
// Ties break toward smaller N.
PeakResult tail_miss_peak(double mu_pos, double tau, long long n_max);

// E[sampled distinct mass | k i.i.d. draws from q]:
// sum_o pi(o) * (1 - (1 - q(o))^k).  Non-decreasing in k; 0 at k = 0.
double expected_sampled_mass_given_k(const ConditionalDist& dist, long long k);

// E[S_R | X = k] = r_correct * E[P_pos|k] + r_wrong * E[P_neg|k], the
// negative side using exponent N - k.
double expected_baseline_given_k(const ConditionalDist& pos,
                                 const ConditionalDist& neg, long long k,
                                 long long n, const RewardConfig& cfg);

// Unbiased pass@k: mean over problems of 1 - C(n-c,k)/C(n,k), evaluated
// without factorial overflow.
double pass_at_k(const CorrectnessMatrix& matrix, long long k);

struct SubsampleTestResult {
  double mean_diff = 0.0;  // mean over iterations of pass@k(b) - pass@k(a)
  double p_value = 1.0;
  bool significant = false;
};

// Paired m-out-of-n subsampling test. Per iteration, each problem contributes
// m columns drawn without replacement (the same column indices for both
// matrices unless shared_indices is false); the pass@k difference b - a is
// averaged over problems. The two-sided p-value is 2*min(F(0), 1-F(0)) over
// the empirical difference distribution with the midpoint convention for ties
// at zero, equivalent to the (1-alpha) confidence interval excluding zero.
// Deterministic given seed, regardless of thread count.
SubsampleTestResult paired_subsample_test(const CorrectnessMatrix& a,
                                          const CorrectnessMatrix& b,
                                          long long m, long long k,
                                          long long iterations, double alpha,
                                          std::uint64_t seed,
                                          bool shared_indices = true);

}  // namespace grouprel::analytic
