#include "grouprel/oracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <vector>

#include "grouprel/errors.hpp"
#include "grouprel/rng.hpp"

namespace grouprel::oracle {

namespace {

constexpr long long kShard = 1 << 16;

inline bool four_sigma_pass(double estimate, double reference, double se) {
  return estimate == reference || std::abs(estimate - reference) <= 4.0 * se;
}

}  // namespace

OracleReport mc_tail_miss(double mu_pos, double tau, long long group_size,
                          long long trials, std::uint64_t seed,
                          double reference) {
  if (trials < 1) throw DomainError("mc_tail_miss: trials must be >= 1");
  if (!(tau >= 0.0 && tau <= mu_pos && mu_pos <= 1.0))
    throw DomainError("mc_tail_miss: need 0 <= tau <= mu_pos <= 1");
  if (group_size < 1) throw DomainError("mc_tail_miss: group_size must be >= 1");

  const rng::Stream root = rng::stream(seed);
  const long long shards = (trials + kShard - 1) / kShard;
  std::vector<long long> hits(static_cast<std::size_t>(shards), 0);

#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t s = 0; s < static_cast<std::ptrdiff_t>(shards); ++s) {
    rng::Sequence seq(root.child(static_cast<std::uint64_t>(s)));
    const long long lo = static_cast<long long>(s) * kShard;
    const long long hi = std::min(lo + kShard, trials);
    long long h = 0;
    for (long long t = lo; t < hi; ++t) {
      bool saw_rare = false;
      bool saw_other_correct = false;
      bool saw_incorrect = false;
      for (long long j = 0; j < group_size; ++j) {
        const double u = seq.unit();
        if (u < tau) {
          saw_rare = true;
          break;
        }
        if (u < mu_pos)
          saw_other_correct = true;
        else
          saw_incorrect = true;
      }
      if (!saw_rare && saw_other_correct && saw_incorrect) ++h;
    }
    hits[static_cast<std::size_t>(s)] = h;
  }

  long long total = 0;
  for (long long h : hits) total += h;
  const double est = static_cast<double>(total) / static_cast<double>(trials);
  // Binomial standard error at the Laplace-smoothed rate, so that zero (or
  // all) hits still carry a finite error bar.
  const double q = (static_cast<double>(total) + 1.0) /
                   (static_cast<double>(trials) + 2.0);
  const double se = std::sqrt(q * (1.0 - q) / static_cast<double>(trials));
  return OracleReport{"mc_tail_miss", est, reference, se,
                      four_sigma_pass(est, reference, se), trials};
}

OracleReport mc_conditional_mass(std::span<const double> q, double total_mass,
                                 long long k, long long trials,
                                 std::uint64_t seed, double reference) {
  if (trials < 1) throw DomainError("mc_conditional_mass: trials must be >= 1");
  if (k < 0) throw DomainError("mc_conditional_mass: k must be >= 0");

  std::vector<double> cdf(q.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    acc += q[i];
    cdf[i] = acc;
  }

  const rng::Stream root = rng::stream(seed);
  const long long shards = (trials + kShard - 1) / kShard;
  std::vector<double> sums(static_cast<std::size_t>(shards), 0.0);
  std::vector<double> sq_sums(static_cast<std::size_t>(shards), 0.0);

#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t s = 0; s < static_cast<std::ptrdiff_t>(shards); ++s) {
    rng::Sequence seq(root.child(static_cast<std::uint64_t>(s)));
    std::vector<std::uint8_t> seen(q.size(), 0);
    std::vector<std::uint32_t> touched;
    const long long lo = static_cast<long long>(s) * kShard;
    const long long hi = std::min(lo + kShard, trials);
    double sum = 0.0;
    double sq = 0.0;
    for (long long t = lo; t < hi; ++t) {
      touched.clear();
      double mass = 0.0;
      for (long long j = 0; j < k; ++j) {
        const double u = seq.unit() * acc;
        const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
        const auto idx = static_cast<std::size_t>(
            std::min<std::ptrdiff_t>(it - cdf.begin(),
                                     static_cast<std::ptrdiff_t>(q.size()) - 1));
        if (!seen[idx]) {
          seen[idx] = 1;
          touched.push_back(static_cast<std::uint32_t>(idx));
          mass += total_mass * q[idx];
        }
      }
      for (std::uint32_t idx : touched) seen[idx] = 0;
      sum += mass;
      sq += mass * mass;
    }
    sums[static_cast<std::size_t>(s)] = sum;
    sq_sums[static_cast<std::size_t>(s)] = sq;
  }

  double sum = 0.0;
  double sq = 0.0;
  for (std::size_t s = 0; s < sums.size(); ++s) {
    sum += sums[s];
    sq += sq_sums[s];
  }
  const auto n = static_cast<double>(trials);
  const double mean = sum / n;
  const double var = std::max(0.0, sq / n - mean * mean);
  const double se = std::sqrt(var / n);
  // Degenerate per-trial distributions (variance 0) still accumulate rounding
  // noise in the mean; allow for it explicitly.
  const bool pass = mean == reference ||
                    std::abs(mean - reference) <= 4.0 * se + 1e-9;
  return OracleReport{"mc_conditional_mass", mean, reference, se, pass, trials};
}

namespace {

// Local softmax and masked sums: this module keeps its own arithmetic.
void local_softmax(std::span<const double> z, std::vector<double>& p) {
  p.resize(z.size());
  double m = -std::numeric_limits<double>::infinity();
  for (double v : z) m = std::max(m, v);
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - m);
    total += p[i];
  }
  for (double& v : p) v /= total;
}

}  // namespace

std::array<OracleReport, 2> first_order_check(
    std::span<const double> logits, std::span<const std::uint8_t> correct_mask,
    std::span<const std::uint32_t> sampled_correct,
    std::span<const std::uint32_t> sampled_incorrect, long long n_draws,
    const RewardConfig& cfg, double eta, double predicted_qpos,
    double predicted_qupos) {
  if (!(eta > 0.0)) throw DomainError("first_order_check: eta must be > 0");
  if (n_draws < 1) throw DomainError("first_order_check: n_draws must be >= 1");

  const std::size_t sz = logits.size();
  std::vector<double> p;
  local_softmax(logits, p);

  std::vector<std::uint8_t> in_batch(sz, 0);
  double s_r = 0.0;
  for (std::uint32_t i : sampled_correct) {
    in_batch[i] = 1;
    s_r += cfg.r_correct * p[i];
  }
  for (std::uint32_t i : sampled_incorrect) {
    in_batch[i] = 2;
    s_r += cfg.r_wrong * p[i];
  }

  const auto masses = [&](const std::vector<double>& probs, double& qpos,
                          double& qupos) {
    qpos = 0.0;
    qupos = 0.0;
    for (std::size_t i = 0; i < sz; ++i) {
      if (!correct_mask[i]) continue;
      qpos += probs[i];
      if (!in_batch[i]) qupos += probs[i];
    }
  };

  double qpos0 = 0.0;
  double qupos0 = 0.0;
  masses(p, qpos0, qupos0);

  const auto residuals = [&](double step, double& res_qpos, double& res_qupos) {
    std::vector<double> z2(logits.begin(), logits.end());
    const double scale = step / static_cast<double>(n_draws);
    for (std::size_t i = 0; i < sz; ++i) {
      const double reward = in_batch[i] == 1   ? cfg.r_correct
                            : in_batch[i] == 2 ? cfg.r_wrong
                                               : 0.0;
      z2[i] += scale * p[i] * (reward - s_r);
    }
    std::vector<double> p2;
    local_softmax(z2, p2);
    double qpos1 = 0.0;
    double qupos1 = 0.0;
    masses(p2, qpos1, qupos1);
    const double frac = step / eta;  // predictions are linear in the step
    res_qpos = std::abs((qpos1 - qpos0) - frac * predicted_qpos);
    res_qupos = std::abs((qupos1 - qupos0) - frac * predicted_qupos);
  };

  double rq1 = 0.0, ru1 = 0.0, rq2 = 0.0, ru2 = 0.0;
  residuals(eta, rq1, ru1);
  residuals(eta / 2.0, rq2, ru2);

  const auto report = [&](const char* name, double r_full, double r_half) {
    const bool tiny = r_full < 1e-14 && r_half < 1e-14;
    const double ratio = r_half > 0.0 ? r_full / r_half
                         : tiny       ? 4.0
                                      : std::numeric_limits<double>::infinity();
    return OracleReport{name, ratio, 4.0, 0.0, tiny || ratio >= 3.5, 2};
  };
  return {report("first_order/qpos", rq1, rq2),
          report("first_order/qupos", ru1, ru2)};
}

double exhaustive_pass_at_k(int row_n, int c, int k) {
  if (row_n < 1 || row_n > 12)
    throw DomainError("exhaustive_pass_at_k: need 1 <= n <= 12");
  if (c < 0 || c > row_n || k < 1 || k > row_n)
    throw DomainError("exhaustive_pass_at_k: c and k must lie within the row");
  const std::uint32_t correct_bits = (1u << c) - 1u;
  long long total = 0;
  long long hits = 0;
  for (std::uint32_t mask = 0; mask < (1u << row_n); ++mask) {
    if (std::popcount(mask) != k) continue;
    ++total;
    if (mask & correct_bits) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace grouprel::oracle
