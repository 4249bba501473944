#include "grouprel/categorical.hpp"

#include <algorithm>
#include <cmath>

namespace grouprel::categorical {

void CategoricalPolicy::refresh() {
  probs.resize(logits.size());
  kernels::softmax(logits, probs);
}

void CategoricalPolicy::validate() const {
  if (logits.empty()) throw DomainError("policy: empty action space");
  if (correct.size() != logits.size() || probs.size() != logits.size())
    throw DomainError("policy: field sizes disagree");
  bool any_correct = false;
  bool any_incorrect = false;
  for (std::uint8_t c : correct) (c ? any_correct : any_incorrect) = true;
  if (!any_correct || !any_incorrect)
    throw DomainError("policy: need at least one correct and one incorrect action");
  if (std::abs(kernels::sum(probs) - 1.0) > 1e-10)
    throw DomainError("policy: probabilities out of sync with the logits");
}

double CategoricalPolicy::q_pos() const {
  return kernels::masked_sum(probs, correct, 1);
}

CategoricalPolicy init_anchor_policy(long long n_actions, long long n_correct,
                                     double z_anchor, double z_correct,
                                     double z_incorrect) {
  if (n_correct < 1 || n_correct >= n_actions)
    throw DomainError("anchor policy: need 1 <= n_correct < n_actions");
  CategoricalPolicy p;
  p.logits.assign(static_cast<std::size_t>(n_actions), z_incorrect);
  p.correct.assign(static_cast<std::size_t>(n_actions), 0);
  for (long long i = 0; i < n_correct; ++i) {
    p.logits[static_cast<std::size_t>(i)] = z_correct;
    p.correct[static_cast<std::size_t>(i)] = 1;
  }
  p.logits[0] = z_anchor;
  p.refresh();
  p.validate();
  return p;
}

void SimScratch::resize(std::size_t n_actions) {
  if (sampled.size() != n_actions) {
    sampled.assign(n_actions, 0);
    touched.clear();
    alias_valid = false;
  }
}

namespace {

// Draws into scratch (alias rebuild + n keyed draws) and fills the distinct
// sampled list. scratch.sampled must be all-zero on entry; touched is left
// sorted ascending.
long long draw_into_scratch(const CategoricalPolicy& policy, long long n,
                            rng::Stream stream, SimScratch& scratch) {
  scratch.resize(policy.size());
  if (!scratch.alias_valid) {
    kernels::build_alias(policy.probs, scratch.alias);
    scratch.alias_valid = true;
  }
  scratch.draws.resize(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(n); ++j) {
    const auto jj = static_cast<std::uint64_t>(j);
    const std::uint64_t word = stream.at(2 * jj);
    const double u = stream.unit_at(2 * jj + 1);
    scratch.draws[static_cast<std::size_t>(j)] =
        kernels::alias_pick(scratch.alias, word, u);
  }
  scratch.touched.clear();
  long long correct_draws = 0;
  for (std::uint32_t idx : scratch.draws) {
    correct_draws += policy.correct[idx];
    if (!scratch.sampled[idx]) {
      scratch.sampled[idx] = 1;
      scratch.touched.push_back(idx);
    }
  }
  std::sort(scratch.touched.begin(), scratch.touched.end());
  return correct_draws;
}

void clear_scratch_flags(SimScratch& scratch) {
  for (std::uint32_t idx : scratch.touched) scratch.sampled[idx] = 0;
}

double sparse_mass(const CategoricalPolicy& policy,
                   const std::vector<std::uint32_t>& touched,
                   std::uint8_t want) {
  double s = 0.0;
  for (std::uint32_t idx : touched)
    if (policy.correct[idx] == want) s += policy.probs[idx];
  return s;
}

}  // namespace

SampleBatch sample_batch(const CategoricalPolicy& policy, long long n,
                         rng::Stream stream) {
  policy.validate();
  if (n < 1) throw DomainError("sample batch: n must be >= 1");
  SimScratch scratch;  // fresh: the alias table is built from current probs
  const long long x = draw_into_scratch(policy, n, stream, scratch);
  SampleBatch batch;
  batch.indices = scratch.draws;
  batch.correct_draws = x;
  for (std::uint32_t idx : scratch.touched) {
    if (policy.correct[idx])
      batch.sampled_correct.push_back(idx);
    else
      batch.sampled_incorrect.push_back(idx);
  }
  return batch;
}

BatchDecomposition decompose_batch(const CategoricalPolicy& policy,
                                   const SampleBatch& batch,
                                   const RewardConfig& cfg) {
  policy.validate();
  cfg.validate();
  BatchDecomposition d;
  for (std::uint32_t i : batch.sampled_correct) {
    if (i >= policy.size()) throw DomainError("decompose: index out of range");
    d.p_pos += policy.probs[i];
    d.a2 += policy.probs[i] * policy.probs[i];
  }
  for (std::uint32_t i : batch.sampled_incorrect) {
    if (i >= policy.size()) throw DomainError("decompose: index out of range");
    d.p_neg += policy.probs[i];
    d.b2 += policy.probs[i] * policy.probs[i];
  }
  const double pos2 = kernels::masked_sq_sum(policy.probs, policy.correct, 1);
  const double neg2 = kernels::masked_sq_sum(policy.probs, policy.correct, 0);
  d.u_pos2 = std::max(0.0, pos2 - d.a2);
  d.u_neg2 = std::max(0.0, neg2 - d.b2);
  d.u2 = d.u_pos2 + d.u_neg2;
  d.q_pos = policy.q_pos();
  d.q_neg = 1.0 - d.q_pos;
  d.q_upos = std::max(0.0, d.q_pos - d.p_pos);
  d.s_r = cfg.r_correct * d.p_pos + cfg.r_wrong * d.p_neg;
  return d;
}

CategoricalPolicy theoretical_update(const CategoricalPolicy& policy,
                                     const SampleBatch& batch,
                                     const RewardConfig& cfg, double eta) {
  policy.validate();
  cfg.validate();
  if (!(eta >= 0.0)) throw DomainError("theoretical update: eta must be >= 0");
  const BatchDecomposition d = decompose_batch(policy, batch, cfg);
  const double scale = eta / static_cast<double>(batch.draw_count());

  CategoricalPolicy out = policy;
  // Unsampled actions carry reward 0.
  for (std::size_t i = 0; i < out.size(); ++i)
    out.logits[i] += scale * policy.probs[i] * (0.0 - d.s_r);
  for (std::uint32_t i : batch.sampled_correct)
    out.logits[i] = policy.logits[i] +
                    scale * policy.probs[i] * (cfg.r_correct - d.s_r);
  for (std::uint32_t i : batch.sampled_incorrect)
    out.logits[i] = policy.logits[i] +
                    scale * policy.probs[i] * (cfg.r_wrong - d.s_r);
  out.refresh();
  return out;
}

double predicted_delta_qpos(const BatchDecomposition& d,
                            const RewardConfig& cfg, double eta, long long n) {
  const double scale = eta / static_cast<double>(n);
  return scale * ((cfg.r_correct - d.s_r) * d.q_neg * d.a2 +
                  (d.s_r - cfg.r_wrong) * d.q_pos * d.b2 +
                  d.s_r * (d.q_pos * d.u_neg2 - d.q_neg * d.u_pos2));
}

QuposDelta predicted_delta_qupos_terms(const BatchDecomposition& d,
                                       const RewardConfig& cfg, double eta,
                                       long long n) {
  const double scale = eta / static_cast<double>(n);
  QuposDelta out;
  out.direct_drift = scale * (-d.s_r * d.u_pos2);
  const double inner = (cfg.r_correct - d.s_r) * d.a2 +
                       (cfg.r_wrong - d.s_r) * d.b2 - d.s_r * d.u2;
  out.normalization_coupling = scale * (-d.q_upos * inner);
  out.total = out.direct_drift + out.normalization_coupling;
  return out;
}

double predicted_delta_qupos(const BatchDecomposition& d,
                             const RewardConfig& cfg, double eta, long long n) {
  return predicted_delta_qupos_terms(d, cfg, eta, n).total;
}

double subset_mass_delta(const CategoricalPolicy& policy,
                         std::span<const std::uint32_t> subset,
                         std::span<const double> dz) {
  policy.validate();
  if (dz.size() != policy.size())
    throw DomainError("subset mass delta: dz length mismatch");
  double direct = 0.0;
  double q_s = 0.0;
  for (std::uint32_t i : subset) {
    if (i >= policy.size())
      throw DomainError("subset mass delta: index out of range");
    direct += policy.probs[i] * dz[i];
    q_s += policy.probs[i];
  }
  const double total = kernels::dot(policy.probs, dz);
  return direct - q_s * total;
}

StepMetrics simulation_step(CategoricalPolicy& policy, long long n,
                            const RewardConfig& cfg, const FocalConfig& focal,
                            double eta, rng::Stream stream,
                            SimScratch& scratch) {
  cfg.validate();
  focal.validate();
  if (n < 1) throw DomainError("simulation step: n must be >= 1");
  if (!(eta > 0.0)) throw DomainError("simulation step: eta must be > 0");

  const long long x = draw_into_scratch(policy, n, stream, scratch);

  StepMetrics m;
  m.correct_draws = x;
  m.active = (x > 0 && x < n);
  const double mu_hat = static_cast<double>(x) / static_cast<double>(n);
  m.g = focal.gamma == 0.0
            ? 1.0
            : (mu_hat >= 1.0 ? 0.0 : std::pow(1.0 - mu_hat, focal.gamma));
  const double p_pos = sparse_mass(policy, scratch.touched, 1);
  const double p_neg = sparse_mass(policy, scratch.touched, 0);
  m.s_r = cfg.r_correct * p_pos + cfg.r_wrong * p_neg;

  if (m.active && m.g > 0.0) {
    const double step = eta * m.g;
    const std::size_t sz = policy.size();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(sz); ++i) {
      const auto ii = static_cast<std::size_t>(i);
      const double reward =
          scratch.sampled[ii]
              ? (policy.correct[ii] ? cfg.r_correct : cfg.r_wrong)
              : 0.0;
      policy.logits[ii] += step * (reward - m.s_r);
    }
    policy.refresh();
    scratch.alias_valid = false;
  }
  clear_scratch_flags(scratch);
  return m;
}

StepMetrics simulation_step(CategoricalPolicy& policy, long long n,
                            const RewardConfig& cfg, const FocalConfig& focal,
                            double eta, rng::Stream stream) {
  SimScratch scratch;
  return simulation_step(policy, n, cfg, focal, eta, stream, scratch);
}

double retained_mass(const CategoricalPolicy& initial,
                     const CategoricalPolicy& current) {
  if (initial.size() != current.size() || initial.correct != current.correct)
    throw DomainError("retained mass: action spaces disagree");
  const double denom =
      kernels::masked_sum(initial.probs, initial.correct, 1);
  if (denom <= 0.0) throw DomainError("retained mass: no initial correct mass");
  const double lost =
      kernels::retained_loss(initial.probs, current.probs, initial.correct);
  return 1.0 - lost / denom;
}

double policy_entropy(const CategoricalPolicy& policy) {
  return kernels::entropy(policy.probs);
}

}  // namespace grouprel::categorical
