#pragma once

#include <span>
#include <vector>

#include "grouprel/errors.hpp"

namespace grouprel {

// Binary outcome reward pair plus the advantage-normalization epsilon.
struct RewardConfig {
  double r_correct = 1.0;
  double r_wrong = 0.0;
  double adv_epsilon = 1e-6;

  void validate() const;
};

// Rewards of one group of rollouts; every entry must equal r_correct or
// r_wrong of the associated RewardConfig.
struct RolloutGroup {
  std::vector<double> rewards;

  void validate(const RewardConfig& cfg) const;
  // Number of correct entries.
  long long correct_count(const RewardConfig& cfg) const;
};

struct FocalConfig {
  double gamma = 0.0;

  void validate() const;
};

// One token-level importance-ratio sample with its clipping bounds. The same
// fields hold the importance-sampling bounds of the clipped-weight variant.
struct TokenRatioPoint {
  double ratio = 1.0;
  double advantage = 0.0;
  double eps_low = 0.2;
  double eps_high = 0.2;

  void validate() const;
};

namespace core {

// Fraction of correct rollouts X/N, equal to (mean reward - r_wrong) /
// (r_correct - r_wrong). Unbiased for the true success probability.
double empirical_success_rate(const RolloutGroup& group, const RewardConfig& cfg);

// Group-relative advantages (R_i - mean) / (std + eps) with the population
// standard deviation (divide by N). A homogeneous group short-circuits to the
// all-zero vector before any division, for every eps.
std::vector<double> grpo_advantages(const RolloutGroup& group,
                                    const RewardConfig& cfg);

// Difficulty weight (1 - X/N)^gamma, with 0^0 defined as 1 so gamma = 0 is
// exactly the identity.
double focal_weight(const RolloutGroup& group, const RewardConfig& cfg,
                    const FocalConfig& focal);

// Element-wise focal_weight * grpo_advantages; the scalar weight is shared by
// all rollouts of the group, so signs are never flipped.
std::vector<double> focal_advantages(const RolloutGroup& group,
                                     const RewardConfig& cfg,
                                     const FocalConfig& focal);

struct MagnitudeCurve {
  std::vector<double> correct;
  std::vector<double> incorrect;
};

// Scaled advantage magnitudes for binary rewards at success probability mu:
// |A_correct| = sqrt((1-mu)/mu), |A_incorrect| = sqrt(mu/(1-mu)), each
// multiplied by (1-mu)^gamma. By default the normalization epsilon is treated
// as 0 (the closed form); use_adv_epsilon switches to the finite-eps curve
// (r_correct - r_wrong) * |R - mean| / (sigma + eps).
MagnitudeCurve advantage_magnitude_curve(std::span<const double> mu_grid,
                                         double gamma, const RewardConfig& cfg,
                                         bool use_adv_epsilon = false);

// min(r * A, clip(r, 1 - eps_low, 1 + eps_high) * A).
double clip_surrogate_term(const TokenRatioPoint& p);

// clip(r, 1 - eps_low, 1 + eps_high). Returned as a plain value: it acts as a
// constant multiplier of the per-token advantage contribution and carries no
// derivative at this scale.
double cispo_clipped_weight(const TokenRatioPoint& p);

}  // namespace core
}  // namespace grouprel
