#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>

#include "grouprel/core.hpp"

namespace grouprel::oracle {

// Result of one independent verification. The reference value is supplied by
// the caller so that this module never calls the code it checks: everything
// here is built from raw inputs and its own arithmetic.
struct OracleReport {
  std::string name;
  double estimate = 0.0;
  double reference = 0.0;
  double std_error = 0.0;
  bool pass = false;
  long long trials = 0;
};

// Trinomial Monte Carlo for the tail-miss event: each rollout lands in the
// rare-correct region (tau), the remaining-correct region (mu - tau), or the
// incorrect region (1 - mu). Counts the frequency of {mixed batch and zero
// rare hits}. pass iff |estimate - reference| <= 4 * stderr (or exact match).
OracleReport mc_tail_miss(double mu_pos, double tau, long long group_size,
                          long long trials, std::uint64_t seed,
                          double reference);

// Conditional Monte Carlo for expected sampled distinct mass: draws k samples
// from q per trial and measures the pi-mass of the distinct outcomes.
OracleReport mc_conditional_mass(std::span<const double> q, double total_mass,
                                 long long k, long long trials,
                                 std::uint64_t seed, double reference);

// First-order step-size check. Applies its own surrogate update
// dz_i = (eta/n) p_i (R_i - S_R) at eta and eta/2 to a softmax policy given
// by raw logits, measures the realized changes in total correct mass and in
// unsampled-correct mass, and compares them to the supplied linear
// predictions. Quadratic remainders must shrink by >= 3.5x when the step is
// halved (or be below 1e-14 at both sizes).
std::array<OracleReport, 2> first_order_check(
    std::span<const double> logits, std::span<const std::uint8_t> correct_mask,
    std::span<const std::uint32_t> sampled_correct,
    std::span<const std::uint32_t> sampled_incorrect, long long n_draws,
    const RewardConfig& cfg, double eta, double predicted_qpos,
    double predicted_qupos);

// Exact pass@k by enumerating all C(n,k) subsets (n <= 12) and counting those
// containing at least one of the first c indices.
double exhaustive_pass_at_k(int row_n, int c, int k);

}  // namespace grouprel::oracle
