#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "grouprel/categorical.hpp"
#include "grouprel/core.hpp"
#include "grouprel/oracle.hpp"

namespace grouprel::harness {

// Grid and policy parameters of one sweep. Field names match the config file
// keys one-to-one.
struct SweepConfig {
  long long n_actions = 128000;
  long long n_correct = 10000;
  double z_anchor = 5.0;
  double z_correct = 3.0;
  double z_incorrect = 0.0;
  double eta = 1e-2;
  long long steps = 1000;
  std::vector<long long> group_sizes;
  std::vector<double> gammas;
  std::vector<std::uint64_t> seeds;
  RewardConfig rewards{1.0, -1.0, 1e-6};
  long long log_every = 10;

  void validate() const;

  // 128k actions, N in {2, 4, ..., 131072}, gamma in {0, 1}, 4 seeds.
  static SweepConfig default_config();
  // 1280 actions / 100 correct, N up to 2^13; same qualitative regimes in a
  // fraction of the time.
  static SweepConfig small_preset();

  static SweepConfig from_json_text(const std::string& text);
  static SweepConfig from_json_file(const std::filesystem::path& path);
  std::string to_json_text() const;
};

// Parameters of a single simulation run.
struct RunParams {
  long long n_actions = 128000;
  long long n_correct = 10000;
  double z_anchor = 5.0;
  double z_correct = 3.0;
  double z_incorrect = 0.0;
  double eta = 1e-2;
  long long steps = 1000;
  long long log_every = 10;
  long long group_size = 8;
  double gamma = 0.0;
  std::uint64_t seed = 1;
  RewardConfig rewards{1.0, -1.0, 1e-6};

  void validate() const;
};

// One logged metrics row; g_mean and s_r_mean average the per-step values
// over the window since the previous logged row (NaN on the step-0 row).
struct MetricsRow {
  long long step = 0;
  double q_pos = 0.0;
  double retained_mass = 1.0;
  double entropy = 0.0;
  double g_mean = 0.0;
  double s_r_mean = 0.0;
};

// Runs one simulation; rows at step 0, every log_every steps, and the final
// step. Deterministic in (params, seed) regardless of thread count.
std::vector<MetricsRow> simulate_run(const RunParams& params);

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows);

struct SummaryRow {
  long long n = 0;
  double gamma = 0.0;
  int n_seeds = 0;
  double final_q_pos_mean = 0.0;
  double final_retained_mass_mean = 0.0;
  double final_entropy_mean = 0.0;
  bool concentration_zone = false;
};

struct SweepSummary {
  std::vector<SummaryRow> rows;

  const SummaryRow* find(long long n, double gamma) const;
};

// Executes the full (N x gamma x seed) grid, one CSV per run under
// out_dir/N{n}_gamma{g}/seed{s}.csv, then writes the seed-averaged
// summary.csv. Completed record files are skipped on rerun (crash resume);
// stale partials are discarded. Outputs are byte-identical for any
// parallelism value.
SweepSummary run_sweep(const SweepConfig& config,
                       const std::filesystem::path& out_dir, int parallelism);

// Loads the summary a previous run_sweep wrote.
SweepSummary read_summary(const std::filesystem::path& summary_csv);

// Tail-miss curve grid: columns mu,rho,n,pr_btau,pr_active over a log-spaced
// n grid up to n_max, plus the exact peak row of each curve.
void emit_tailmiss_grid(std::span<const double> mu_values,
                        std::span<const double> rho_values, long long n_max,
                        std::ostream& out);

// Scaled advantage magnitude curve on an open mu grid (endpoints excluded):
// columns mu,gamma,mag_correct,mag_incorrect.
void emit_focal_curve(std::span<const double> gamma_values, int grid_points,
                      std::ostream& out);

// The full independent-verification suite behind the `verify` subcommand.
std::vector<oracle::OracleReport> verify_suite(std::uint64_t seed);

// Shortest-form %.Ng formatting used for all numeric output.
std::string format_value(double v, int significant_digits);

}  // namespace grouprel::harness
