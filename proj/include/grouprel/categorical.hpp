#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "grouprel/core.hpp"
#include "grouprel/errors.hpp"
#include "grouprel/kernels.hpp"
#include "grouprel/rng.hpp"

namespace grouprel::categorical {

// Softmax policy over a finite action space (temperature fixed at 1), with a
// designated subset of correct actions. probs is kept in sync with logits.
struct CategoricalPolicy {
  std::vector<double> logits;
  std::vector<std::uint8_t> correct;
  std::vector<double> probs;

  std::size_t size() const { return logits.size(); }
  void refresh();
  void validate() const;
  double q_pos() const;
};

// One anchor correct action at z_anchor (index 0), remaining correct actions
// at z_correct, incorrect actions at z_incorrect.
CategoricalPolicy init_anchor_policy(long long n_actions, long long n_correct,
                                     double z_anchor, double z_correct,
                                     double z_incorrect);

// N i.i.d. draws from the policy plus the derived distinct sampled sets.
struct SampleBatch {
  std::vector<std::uint32_t> indices;           // multiset, draw order
  std::vector<std::uint32_t> sampled_correct;   // distinct set A, ascending
  std::vector<std::uint32_t> sampled_incorrect; // distinct set B, ascending
  long long correct_draws = 0;                  // X, counting duplicates

  long long draw_count() const {
    return static_cast<long long>(indices.size());
  }
};

// Reusable buffers for repeated stepping of one policy. A scratch belongs to
// a single run: the cached alias table is only rebuilt after steps that
// actually moved the logits.
struct SimScratch {
  kernels::AliasTable alias;
  bool alias_valid = false;
  std::vector<std::uint32_t> draws;
  std::vector<std::uint8_t> sampled;   // per-action flag, zero outside a step
  std::vector<std::uint32_t> touched;  // distinct sampled actions

  void resize(std::size_t n_actions);
};

// Draws n actions through an alias table built from the current
// probabilities. Draw j consumes words (2j, 2j+1) of the stream, so the
// result is independent of how draws are split across threads and two calls
// with the same stream return identical index vectors.
SampleBatch sample_batch(const CategoricalPolicy& policy, long long n,
                         rng::Stream stream);

// Sampled masses, concentration (second-moment) statistics, and the batch
// baseline S_R for one batch. Duplicates collapse: a repeated action
// contributes once.
struct BatchDecomposition {
  double p_pos = 0.0, p_neg = 0.0;
  double a2 = 0.0, b2 = 0.0;
  double u2 = 0.0, u_pos2 = 0.0, u_neg2 = 0.0;
  double s_r = 0.0;
  double q_pos = 0.0, q_neg = 0.0, q_upos = 0.0;
};

BatchDecomposition decompose_batch(const CategoricalPolicy& policy,
                                   const SampleBatch& batch,
                                   const RewardConfig& cfg);

// One-step surrogate update on the distinct sampled sets:
// dz_i = (eta/N) * p_i * (R_i - S_R), with R_i = 0 for unsampled actions
// (so dz_i = -(eta/N) * S_R * p_i there). Probabilities renormalize through
// the softmax. This is the exact gradient of the linear sampled-reward
// surrogate sum_{i in A u B} R_i p_i scaled by eta/N.
CategoricalPolicy theoretical_update(const CategoricalPolicy& policy,
                                     const SampleBatch& batch,
                                     const RewardConfig& cfg, double eta);

// First-order prediction of the change in total correct mass:
// (eta/N) * [(Rc-S_R) Qneg A2 + (S_R-Rw) Qpos B2
//            + S_R (Qpos Uneg2 - Qneg Upos2)].
double predicted_delta_qpos(const BatchDecomposition& d,
                            const RewardConfig& cfg, double eta, long long n);

struct QuposDelta {
  double direct_drift = 0.0;          // -(eta/N) * S_R * Upos2
  double normalization_coupling = 0.0;
  double total = 0.0;
};

// First-order prediction of the change in unsampled-correct mass:
// (eta/N) * [-S_R Upos2 - Qupos ((Rc-S_R) A2 + (Rw-S_R) B2 - S_R U2)],
// reported with its two pieces.
QuposDelta predicted_delta_qupos_terms(const BatchDecomposition& d,
                                       const RewardConfig& cfg, double eta,
                                       long long n);
double predicted_delta_qupos(const BatchDecomposition& d,
                             const RewardConfig& cfg, double eta, long long n);

// First-order mass change of an action subset under a logit perturbation:
// sum_{i in S} p_i dz_i - Q_S * sum_j p_j dz_j.
double subset_mass_delta(const CategoricalPolicy& policy,
                         std::span<const std::uint32_t> subset,
                         std::span<const double> dz);

// Per-step outcome of the simulation (duplicates counted in correct_draws;
// s_r is the distinct-set baseline; g the difficulty weight actually used).
struct StepMetrics {
  long long correct_draws = 0;
  double g = 1.0;
  double s_r = 0.0;
  bool active = false;
};

// One training step of the group-relative simulation. Draws a multiset of n
// actions and computes the multiset correct fraction X/n. A homogeneous batch
// (X = 0 or X = n) carries zero learning signal and leaves the policy
// unchanged, as does g = (1 - X/n)^gamma = 0. Otherwise the logits move by
// the per-action update
//   dz_i = eta * g * (R_i - S_R)   for distinct sampled actions,
//   dz_i = -eta * g * S_R          for unsampled actions,
// where S_R is the distinct-sampled-mass baseline. Drawing an action more
// than once does not increase its update: the per-action step saturates once
// the action is in the batch, which is what lets very large groups lift all
// correct actions uniformly instead of concentrating on the lucky ones.
StepMetrics simulation_step(CategoricalPolicy& policy, long long n,
                            const RewardConfig& cfg, const FocalConfig& focal,
                            double eta, rng::Stream stream, SimScratch& scratch);
StepMetrics simulation_step(CategoricalPolicy& policy, long long n,
                            const RewardConfig& cfg, const FocalConfig& focal,
                            double eta, rng::Stream stream);

// Fraction of initial correct-action probability not lost at the current
// state: 1 - sum_P max(0, p0 - pt) / sum_P p0.
double retained_mass(const CategoricalPolicy& initial,
                     const CategoricalPolicy& current);

// -sum p ln p in nats, with 0 ln 0 = 0.
double policy_entropy(const CategoricalPolicy& policy);

// Metric row of a simulation run.
struct SimMetrics {
  long long step = 0;
  double q_pos = 0.0;
  double retained_mass = 1.0;
  double entropy = 0.0;
};

}  // namespace grouprel::categorical
