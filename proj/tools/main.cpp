#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "grouprel/analytic.hpp"
#include "grouprel/core.hpp"
#include "grouprel/errors.hpp"
#include "grouprel/harness.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using namespace grouprel;
namespace fs = std::filesystem;

int g_digits = 7;

std::string fmt(double v) { return harness::format_value(v, g_digits); }

void set_threads(int threads) {
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

// Writes through `out` if a path is given, else to stdout.
template <typename Fn>
void with_output(const std::string& path, Fn&& fn) {
  if (path.empty()) {
    fn(std::cout);
  } else {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    fn(out);
  }
}

int run(int argc, char** argv) {
  CLI::App app{
      "Numerical laboratory for the sampling dynamics of group-relative "
      "binary-reward policy optimization: tail-miss probabilities, "
      "first-order softmax mass transfer, focal-weighted advantages, and "
      "categorical policy simulation."};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "print help for every subcommand");

  bool full_precision = false;
  app.add_flag("--full-precision", full_precision,
               "print 17 significant digits instead of 7");

  // ---- tailmiss ----
  auto* tailmiss = app.add_subcommand(
      "tailmiss",
      "probability that a group of N rollouts is mixed yet misses the "
      "rare-correct region");
  double tm_mu = 0.5, tm_tau = 0.0;
  long long tm_n = 1;
  bool tm_grid = false;
  std::vector<double> tm_mus{0.8, 0.5, 0.2};
  std::vector<double> tm_rhos{0.01, 0.1, 0.5};
  long long tm_nmax = 1'000'000;
  std::string tm_output;
  auto* tm_mu_opt =
      tailmiss->add_option("--mu", tm_mu, "success probability mu_pos");
  tailmiss->add_option("--tau", tm_tau, "rare-correct mass tau");
  auto* tm_n_opt = tailmiss->add_option("--n", tm_n, "group size N");
  tailmiss->add_flag("--grid", tm_grid,
                     "emit a CSV curve grid instead of a single value");
  tailmiss->add_option("--mus", tm_mus, "grid mode: mu values")
      ->delimiter(',');
  tailmiss
      ->add_option("--rhos", tm_rhos, "grid mode: rho = tau/mu values in (0,1]")
      ->delimiter(',');
  tailmiss->add_option("--n-max", tm_nmax, "grid mode: largest N");
  tailmiss->add_option("--output", tm_output, "grid mode: output file");

  // ---- peak ----
  auto* peak = app.add_subcommand(
      "peak", "group size maximizing the tail-miss probability");
  double pk_mu = 0.5, pk_tau = 0.05;
  long long pk_nmax = 1'000'000;
  peak->add_option("--mu", pk_mu, "success probability mu_pos")->required();
  peak->add_option("--tau", pk_tau, "rare-correct mass tau")->required();
  peak->add_option("--n-max", pk_nmax, "largest N considered");

  // ---- simulate ----
  auto* simulate = app.add_subcommand(
      "simulate", "run one categorical-policy training simulation");
  harness::RunParams sim;
  bool sim_small = false;
  std::string sim_output;
  int sim_threads = 0;
  simulate->add_option("--n", sim.group_size, "group size N (rollouts per step)")
      ->required();
  simulate->add_option("--gamma", sim.gamma, "difficulty-weight exponent");
  simulate->add_option("--seed", sim.seed, "run seed");
  simulate->add_option("--steps", sim.steps, "training steps");
  simulate->add_option("--eta", sim.eta, "learning rate");
  simulate->add_option("--log-every", sim.log_every, "logging cadence");
  simulate->add_option("--actions", sim.n_actions, "action count");
  simulate->add_option("--correct", sim.n_correct, "correct action count");
  simulate->add_option("--z-anchor", sim.z_anchor, "anchor logit");
  simulate->add_option("--z-correct", sim.z_correct, "non-anchor correct logit");
  simulate->add_option("--z-incorrect", sim.z_incorrect, "incorrect logit");
  simulate->add_option("--r-correct", sim.rewards.r_correct, "correct reward");
  simulate->add_option("--r-wrong", sim.rewards.r_wrong, "incorrect reward");
  simulate->add_flag("--small", sim_small,
                     "use the reduced 1280-action / 100-correct policy");
  simulate->add_option("--output", sim_output, "output CSV file (default stdout)");
  simulate->add_option("--threads", sim_threads, "worker threads");

  // ---- sweep ----
  auto* sweep = app.add_subcommand(
      "sweep", "run the (N x gamma x seed) simulation grid and summarize");
  std::string sw_config;
  bool sw_small = false;
  std::string sw_output;
  int sw_parallelism = 0;
  std::vector<std::uint64_t> sw_seeds;
  sweep->add_option("--config", sw_config, "JSON sweep configuration file");
  sweep->add_flag("--small", sw_small, "use the reduced built-in preset");
  sweep->add_option("--output", sw_output,
                    "output directory (default $GROUPREL_OUTPUT_DIR/sweep or "
                    "./sweep_out)");
  sweep->add_option("--parallelism", sw_parallelism,
                    "concurrent runs (default: hardware threads)");
  sweep->add_option("--seeds", sw_seeds, "override the config seed list")
      ->delimiter(',');

  // ---- focal-curve ----
  auto* focal = app.add_subcommand(
      "focal-curve", "scaled advantage magnitudes versus success probability");
  std::vector<double> fc_gammas{0.0, 0.5, 1.0, 2.0};
  int fc_points = 99;
  std::string fc_output;
  focal->add_option("--gammas", fc_gammas, "difficulty-weight exponents")
      ->delimiter(',');
  focal->add_option("--grid-points", fc_points,
                    "points of the open (0,1) success-probability grid");
  focal->add_option("--output", fc_output, "output file (default stdout)");

  // ---- passk ----
  auto* passk =
      app.add_subcommand("passk", "unbiased pass@k over a correctness CSV");
  std::string pa_input;
  long long pa_k = 1;
  passk->add_option("--input", pa_input, "CSV file, one 0/1 row per problem")
      ->required();
  passk->add_option("--k", pa_k, "samples drawn per problem")->required();

  // ---- sigtest ----
  auto* sigtest = app.add_subcommand(
      "sigtest",
      "paired m-out-of-n subsampling test of the pass@k difference "
      "(second input minus first)");
  std::string st_a, st_b;
  long long st_m = 256;
  std::vector<long long> st_ks{1, 256};
  long long st_iters = 50'000;
  double st_alpha = 0.05;
  std::uint64_t st_seed = 0;
  bool st_unpaired = false;
  int st_threads = 0;
  sigtest->add_option("--a", st_a, "baseline correctness CSV")->required();
  sigtest->add_option("--b", st_b, "treatment correctness CSV")->required();
  sigtest->add_option("--m", st_m, "subsample size per problem");
  sigtest->add_option("--k", st_ks, "pass@k values to test")->delimiter(',');
  sigtest->add_option("--iterations", st_iters, "subsampling iterations");
  sigtest->add_option("--alpha", st_alpha, "significance level");
  sigtest->add_option("--seed", st_seed, "subsampling seed");
  sigtest->add_flag("--unpaired-indices", st_unpaired,
                    "draw independent column indices for the two inputs");
  sigtest->add_option("--threads", st_threads, "worker threads");

  // ---- verify ----
  auto* verify = app.add_subcommand(
      "verify", "run the independent Monte Carlo / enumeration checks");
  bool vf_all = true;
  std::uint64_t vf_seed = 7;
  int vf_threads = 0;
  verify->add_flag("--all", vf_all, "run every check (default)");
  verify->add_option("--seed", vf_seed, "suite seed");
  verify->add_option("--threads", vf_threads, "worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    std::cerr << app.help() << '\n';
    return 1;
  }
  g_digits = full_precision ? 17 : 7;

  if (tailmiss->parsed()) {
    if (tm_grid) {
      with_output(tm_output, [&](std::ostream& out) {
        harness::emit_tailmiss_grid(tm_mus, tm_rhos, tm_nmax, out);
      });
      return 0;
    }
    if (tm_mu_opt->count() == 0 || tm_n_opt->count() == 0)
      throw DomainError("tailmiss: --mu and --n are required without --grid");
    std::cout << fmt(analytic::tail_miss_probability(
                     analytic::PromptStats{tm_mu, tm_tau, tm_n}))
              << '\n';
    return 0;
  }

  if (peak->parsed()) {
    const analytic::PeakResult r = analytic::tail_miss_peak(pk_mu, pk_tau, pk_nmax);
    std::cout << r.n_star << ' ' << fmt(r.value) << '\n';
    return 0;
  }

  if (simulate->parsed()) {
    set_threads(sim_threads);
    if (sim_small) {
      sim.n_actions = 1280;
      sim.n_correct = 100;
    }
    const std::vector<harness::MetricsRow> rows = harness::simulate_run(sim);
    with_output(sim_output, [&](std::ostream& out) {
      harness::write_metrics_csv(out, rows);
    });
    return 0;
  }

  if (sweep->parsed()) {
    harness::SweepConfig config =
        !sw_config.empty() ? harness::SweepConfig::from_json_file(sw_config)
        : sw_small         ? harness::SweepConfig::small_preset()
                           : harness::SweepConfig::default_config();
    if (!sw_seeds.empty()) config.seeds = sw_seeds;
    if (sw_output.empty()) {
      const char* env = std::getenv("GROUPREL_OUTPUT_DIR");
      sw_output = env != nullptr && *env != '\0'
                      ? (fs::path(env) / "sweep").string()
                      : std::string("sweep_out");
    }
    int parallelism = sw_parallelism;
#ifdef _OPENMP
    if (parallelism <= 0) parallelism = omp_get_max_threads();
#else
    if (parallelism <= 0) parallelism = 1;
#endif
    harness::run_sweep(config, sw_output, parallelism);
    std::ifstream summary(fs::path(sw_output) / "summary.csv");
    std::cout << summary.rdbuf();
    return 0;
  }

  if (focal->parsed()) {
    with_output(fc_output, [&](std::ostream& out) {
      harness::emit_focal_curve(fc_gammas, fc_points, out);
    });
    return 0;
  }

  if (passk->parsed()) {
    const analytic::CorrectnessMatrix m =
        analytic::load_correctness_matrix_file(pa_input);
    std::cout << fmt(analytic::pass_at_k(m, pa_k)) << '\n';
    return 0;
  }

  if (sigtest->parsed()) {
    set_threads(st_threads);
    const analytic::CorrectnessMatrix a =
        analytic::load_correctness_matrix_file(st_a);
    const analytic::CorrectnessMatrix b =
        analytic::load_correctness_matrix_file(st_b);
    std::cout << "k,mean_diff,p_value,significant\n";
    for (long long k : st_ks) {
      const analytic::SubsampleTestResult r = analytic::paired_subsample_test(
          a, b, st_m, k, st_iters, st_alpha, st_seed, !st_unpaired);
      std::cout << k << ',' << fmt(r.mean_diff) << ',' << fmt(r.p_value) << ','
                << (r.significant ? 1 : 0) << '\n';
    }
    return 0;
  }

  if (verify->parsed()) {
    set_threads(vf_threads);
    const std::vector<oracle::OracleReport> reports =
        harness::verify_suite(vf_seed);
    std::cout << "name,estimate,reference,stderr,pass,trials\n";
    bool all_pass = true;
    for (const oracle::OracleReport& r : reports) {
      std::cout << r.name << ',' << fmt(r.estimate) << ',' << fmt(r.reference)
                << ',' << fmt(r.std_error) << ',' << (r.pass ? 1 : 0) << ','
                << r.trials << '\n';
      all_pass = all_pass && r.pass;
    }
    if (!all_pass) {
      std::cerr << "verify: at least one check failed\n";
      return 2;
    }
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const grouprel::DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const grouprel::NumericalError& e) {
    std::cerr << "numerical-consistency error: " << e.what() << '\n';
    return 2;
  } catch (const grouprel::IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
