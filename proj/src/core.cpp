#include "grouprel/core.hpp"

#include <algorithm>
#include <cmath>

namespace grouprel {

void RewardConfig::validate() const {
  if (!(r_correct > r_wrong))
    throw DomainError("reward config: r_correct must exceed r_wrong");
  if (!(adv_epsilon >= 0.0))
    throw DomainError("reward config: adv_epsilon must be >= 0");
}

void RolloutGroup::validate(const RewardConfig& cfg) const {
  cfg.validate();
  if (rewards.empty()) throw DomainError("rollout group: empty");
  for (double r : rewards)
    if (r != cfg.r_correct && r != cfg.r_wrong)
      throw DomainError("rollout group: reward outside {r_correct, r_wrong}");
}

long long RolloutGroup::correct_count(const RewardConfig& cfg) const {
  long long x = 0;
  for (double r : rewards)
    if (r == cfg.r_correct) ++x;
  return x;
}

void FocalConfig::validate() const {
  if (!(gamma >= 0.0)) throw DomainError("focal config: gamma must be >= 0");
}

void TokenRatioPoint::validate() const {
  if (!(ratio > 0.0)) throw DomainError("token ratio: ratio must be > 0");
  if (!(eps_low >= 0.0 && eps_low <= 1.0))
    throw DomainError("token ratio: eps_low must lie in [0, 1]");
  if (!(eps_high >= 0.0))
    throw DomainError("token ratio: eps_high must be >= 0");
}

namespace core {

double empirical_success_rate(const RolloutGroup& group,
                              const RewardConfig& cfg) {
  group.validate(cfg);
  const long long x = group.correct_count(cfg);
  return static_cast<double>(x) / static_cast<double>(group.rewards.size());
}

std::vector<double> grpo_advantages(const RolloutGroup& group,
                                    const RewardConfig& cfg) {
  group.validate(cfg);
  const std::size_t n = group.rewards.size();
  const long long x = group.correct_count(cfg);
  if (x == 0 || x == static_cast<long long>(n))
    return std::vector<double>(n, 0.0);

  double mean = 0.0;
  for (double r : group.rewards) mean += r;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double r : group.rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(n);
  const double denom = std::sqrt(var) + cfg.adv_epsilon;

  std::vector<double> adv(n);
  for (std::size_t i = 0; i < n; ++i)
    adv[i] = (group.rewards[i] - mean) / denom;
  return adv;
}

double focal_weight(const RolloutGroup& group, const RewardConfig& cfg,
                    const FocalConfig& focal) {
  group.validate(cfg);
  focal.validate();
  if (focal.gamma == 0.0) return 1.0;
  const double mu_hat = empirical_success_rate(group, cfg);
  if (mu_hat >= 1.0) return 0.0;
  return std::pow(1.0 - mu_hat, focal.gamma);
}

std::vector<double> focal_advantages(const RolloutGroup& group,
                                     const RewardConfig& cfg,
                                     const FocalConfig& focal) {
  const double g = focal_weight(group, cfg, focal);
  std::vector<double> adv = grpo_advantages(group, cfg);
  for (double& a : adv) a *= g;
  return adv;
}

MagnitudeCurve advantage_magnitude_curve(std::span<const double> mu_grid,
                                         double gamma, const RewardConfig& cfg,
                                         bool use_adv_epsilon) {
  cfg.validate();
  FocalConfig{gamma}.validate();
  MagnitudeCurve out;
  out.correct.reserve(mu_grid.size());
  out.incorrect.reserve(mu_grid.size());
  for (double mu : mu_grid) {
    if (!(mu > 0.0 && mu < 1.0))
      throw DomainError("magnitude curve: mu must lie strictly inside (0, 1)");
    const double g = gamma == 0.0 ? 1.0 : std::pow(1.0 - mu, gamma);
    if (use_adv_epsilon) {
      const double scale = cfg.r_correct - cfg.r_wrong;
      const double denom = scale * std::sqrt(mu * (1.0 - mu)) + cfg.adv_epsilon;
      out.correct.push_back(g * scale * (1.0 - mu) / denom);
      out.incorrect.push_back(g * scale * mu / denom);
    } else {
      out.correct.push_back(g * std::sqrt((1.0 - mu) / mu));
      out.incorrect.push_back(g * std::sqrt(mu / (1.0 - mu)));
    }
  }
  return out;
}

double clip_surrogate_term(const TokenRatioPoint& p) {
  p.validate();
  const double clipped =
      std::clamp(p.ratio, 1.0 - p.eps_low, 1.0 + p.eps_high);
  return std::min(p.ratio * p.advantage, clipped * p.advantage);
}

double cispo_clipped_weight(const TokenRatioPoint& p) {
  p.validate();
  return std::clamp(p.ratio, 1.0 - p.eps_low, 1.0 + p.eps_high);
}

}  // namespace core
}  // namespace grouprel
