#include "grouprel/harness.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "grouprel/analytic.hpp"
#include "grouprel/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace grouprel::harness {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_value(double v, int significant_digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", significant_digits, v);
  return buf;
}

namespace {

std::string g17(double v) { return format_value(v, 17); }

void require(bool ok, const char* msg) {
  if (!ok) throw DomainError(msg);
}

}  // namespace

void SweepConfig::validate() const {
  require(n_correct >= 1 && n_correct < n_actions,
          "sweep config: need 1 <= n_correct < n_actions");
  require(eta > 0.0, "sweep config: eta must be > 0");
  require(steps >= 1, "sweep config: steps must be >= 1");
  require(log_every >= 1, "sweep config: log_every must be >= 1");
  require(!group_sizes.empty(), "sweep config: group_sizes must be non-empty");
  require(!gammas.empty(), "sweep config: gammas must be non-empty");
  require(!seeds.empty(), "sweep config: seeds must be non-empty");
  for (long long n : group_sizes)
    require(n >= 1, "sweep config: group sizes must be >= 1");
  for (double g : gammas) require(g >= 0.0, "sweep config: gammas must be >= 0");
  rewards.validate();
}

SweepConfig SweepConfig::default_config() {
  SweepConfig c;
  for (long long n = 2; n <= 131072; n *= 2) c.group_sizes.push_back(n);
  c.gammas = {0.0, 1.0};
  c.seeds = {1, 2, 3, 4};
  return c;
}

SweepConfig SweepConfig::small_preset() {
  SweepConfig c;
  c.n_actions = 1280;
  c.n_correct = 100;
  for (long long n = 2; n <= 8192; n *= 2) c.group_sizes.push_back(n);
  c.gammas = {0.0, 1.0};
  c.seeds = {1, 2, 3, 4};
  return c;
}

SweepConfig SweepConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DomainError(std::string("sweep config: invalid JSON: ") + e.what());
  }
  SweepConfig c = default_config();
  static const char* known[] = {"n_actions", "n_correct",   "z_anchor",
                                "z_correct", "z_incorrect", "eta",
                                "steps",     "group_sizes", "gammas",
                                "seeds",     "rewards",     "log_every"};
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(std::begin(known), std::end(known), [&](const char* k) {
          return key == k;
        }) == std::end(known))
      throw DomainError("sweep config: unknown key '" + key + "'");
  }
  try {
    if (j.contains("n_actions")) c.n_actions = j["n_actions"].get<long long>();
    if (j.contains("n_correct")) c.n_correct = j["n_correct"].get<long long>();
    if (j.contains("z_anchor")) c.z_anchor = j["z_anchor"].get<double>();
    if (j.contains("z_correct")) c.z_correct = j["z_correct"].get<double>();
    if (j.contains("z_incorrect"))
      c.z_incorrect = j["z_incorrect"].get<double>();
    if (j.contains("eta")) c.eta = j["eta"].get<double>();
    if (j.contains("steps")) c.steps = j["steps"].get<long long>();
    if (j.contains("log_every")) c.log_every = j["log_every"].get<long long>();
    if (j.contains("group_sizes"))
      c.group_sizes = j["group_sizes"].get<std::vector<long long>>();
    if (j.contains("gammas"))
      c.gammas = j["gammas"].get<std::vector<double>>();
    if (j.contains("seeds"))
      c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("rewards")) {
      const auto& r = j["rewards"];
      for (const auto& [key, value] : r.items()) {
        if (key != "r_correct" && key != "r_wrong" && key != "adv_epsilon")
          throw DomainError("sweep config: unknown rewards key '" + key + "'");
      }
      if (r.contains("r_correct"))
        c.rewards.r_correct = r["r_correct"].get<double>();
      if (r.contains("r_wrong")) c.rewards.r_wrong = r["r_wrong"].get<double>();
      if (r.contains("adv_epsilon"))
        c.rewards.adv_epsilon = r["adv_epsilon"].get<double>();
    }
  } catch (const json::exception& e) {
    throw DomainError(std::string("sweep config: bad field type: ") + e.what());
  }
  c.validate();
  return c;
}

SweepConfig SweepConfig::from_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::string SweepConfig::to_json_text() const {
  json j;
  j["n_actions"] = n_actions;
  j["n_correct"] = n_correct;
  j["z_anchor"] = z_anchor;
  j["z_correct"] = z_correct;
  j["z_incorrect"] = z_incorrect;
  j["eta"] = eta;
  j["steps"] = steps;
  j["group_sizes"] = group_sizes;
  j["gammas"] = gammas;
  j["seeds"] = seeds;
  j["rewards"] =
      json{{"r_correct", rewards.r_correct},
           {"r_wrong", rewards.r_wrong},
           {"adv_epsilon", rewards.adv_epsilon}};
  j["log_every"] = log_every;
  return j.dump(2) + "\n";
}

void RunParams::validate() const {
  require(n_correct >= 1 && n_correct < n_actions,
          "run params: need 1 <= n_correct < n_actions");
  require(eta > 0.0, "run params: eta must be > 0");
  require(steps >= 1, "run params: steps must be >= 1");
  require(log_every >= 1, "run params: log_every must be >= 1");
  require(group_size >= 1, "run params: group_size must be >= 1");
  rewards.validate();
}

std::vector<MetricsRow> simulate_run(const RunParams& params) {
  params.validate();
  using namespace categorical;
  CategoricalPolicy policy =
      init_anchor_policy(params.n_actions, params.n_correct, params.z_anchor,
                         params.z_correct, params.z_incorrect);
  const CategoricalPolicy initial = policy;

  const rng::Stream run_stream =
      rng::stream(params.seed)
          .child(static_cast<std::uint64_t>(params.group_size))
          .child(std::bit_cast<std::uint64_t>(params.gamma));

  std::vector<MetricsRow> rows;
  rows.reserve(static_cast<std::size_t>(params.steps / params.log_every + 2));
  const double nan = std::numeric_limits<double>::quiet_NaN();
  rows.push_back(MetricsRow{0, policy.q_pos(), 1.0, policy_entropy(policy),
                            nan, nan});

  SimScratch scratch;
  const FocalConfig focal{params.gamma};
  double g_sum = 0.0;
  double sr_sum = 0.0;
  long long window = 0;
  for (long long t = 1; t <= params.steps; ++t) {
    const StepMetrics m = simulation_step(
        policy, params.group_size, params.rewards, focal, params.eta,
        run_stream.child(static_cast<std::uint64_t>(t)), scratch);
    g_sum += m.g;
    sr_sum += m.s_r;
    ++window;
    if (t % params.log_every == 0 || t == params.steps) {
      rows.push_back(MetricsRow{t, policy.q_pos(),
                                retained_mass(initial, policy),
                                policy_entropy(policy),
                                g_sum / static_cast<double>(window),
                                sr_sum / static_cast<double>(window)});
      g_sum = 0.0;
      sr_sum = 0.0;
      window = 0;
    }
  }
  return rows;
}

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows) {
  out << "step,q_pos,retained_mass,entropy,g_mean,s_r_mean\n";
  for (const MetricsRow& r : rows) {
    out << r.step << ',' << g17(r.q_pos) << ',' << g17(r.retained_mass) << ','
        << g17(r.entropy) << ',' << g17(r.g_mean) << ',' << g17(r.s_r_mean)
        << '\n';
  }
}

namespace {

MetricsRow parse_last_row(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open record '" + file.string() + "'");
  std::string line;
  std::string last;
  std::getline(in, line);  // header
  while (std::getline(in, line))
    if (!line.empty()) last = line;
  if (last.empty()) throw IoError("record '" + file.string() + "' has no rows");
  MetricsRow r;
  std::stringstream ss(last);
  std::string cell;
  double vals[6] = {0, 0, 0, 0, 0, 0};
  for (double& v : vals) {
    if (!std::getline(ss, cell, ','))
      throw IoError("record '" + file.string() + "' has a malformed row");
    v = std::strtod(cell.c_str(), nullptr);
  }
  r.step = static_cast<long long>(vals[0]);
  r.q_pos = vals[1];
  r.retained_mass = vals[2];
  r.entropy = vals[3];
  r.g_mean = vals[4];
  r.s_r_mean = vals[5];
  return r;
}

std::string cell_dir_name(long long n, double gamma) {
  return "N" + std::to_string(n) + "_gamma" + format_value(gamma, 7);
}

}  // namespace

const SummaryRow* SweepSummary::find(long long n, double gamma) const {
  for (const SummaryRow& r : rows)
    if (r.n == n && r.gamma == gamma) return &r;
  return nullptr;
}

SweepSummary run_sweep(const SweepConfig& config, const fs::path& out_dir,
                       int parallelism) {
  config.validate();
  if (parallelism < 1) throw DomainError("sweep: parallelism must be >= 1");

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + out_dir.string() +
                        "'");
  {
    std::ofstream snap(out_dir / "config.snapshot");
    if (!snap) throw IoError("cannot write config snapshot");
    snap << config.to_json_text();
  }

  struct Task {
    long long n;
    double gamma;
    std::uint64_t seed;
    fs::path file;
  };
  std::vector<Task> tasks;
  for (long long n : config.group_sizes) {
    for (double gamma : config.gammas) {
      const fs::path cell = out_dir / cell_dir_name(n, gamma);
      fs::create_directories(cell, ec);
      if (ec) throw IoError("cannot create '" + cell.string() + "'");
      for (std::uint64_t seed : config.seeds)
        tasks.push_back(
            Task{n, gamma, seed, cell / ("seed" + std::to_string(seed) + ".csv")});
    }
  }

  // Discard stale partials; a completed record is only ever visible under its
  // final name (written to *.tmp, then renamed).
  for (const auto& entry : fs::recursive_directory_iterator(out_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".tmp")
      fs::remove(entry.path());
  }

#ifdef _OPENMP
  const int prev_nested = omp_get_max_active_levels();
  omp_set_max_active_levels(1);
#endif
  std::exception_ptr first_error = nullptr;
#pragma omp parallel for schedule(dynamic, 1) num_threads(parallelism)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(tasks.size());
       ++i) {
    try {
      const Task& task = tasks[static_cast<std::size_t>(i)];
      if (fs::exists(task.file)) continue;  // resume: keep finished records
      RunParams p;
      p.n_actions = config.n_actions;
      p.n_correct = config.n_correct;
      p.z_anchor = config.z_anchor;
      p.z_correct = config.z_correct;
      p.z_incorrect = config.z_incorrect;
      p.eta = config.eta;
      p.steps = config.steps;
      p.log_every = config.log_every;
      p.group_size = task.n;
      p.gamma = task.gamma;
      p.seed = task.seed;
      p.rewards = config.rewards;
      const std::vector<MetricsRow> rows = simulate_run(p);
      const fs::path tmp = task.file.string() + ".tmp";
      {
        std::ofstream out(tmp);
        if (!out) throw IoError("cannot write '" + tmp.string() + "'");
        write_metrics_csv(out, rows);
      }
      fs::rename(tmp, task.file);
    } catch (...) {
#pragma omp critical(grouprel_sweep_error)
      if (!first_error) first_error = std::current_exception();
    }
  }
#ifdef _OPENMP
  omp_set_max_active_levels(prev_nested);
#endif
  if (first_error) std::rethrow_exception(first_error);

  // Seed-averaged summary, single-threaded, in grid order.
  SweepSummary summary;
  for (long long n : config.group_sizes) {
    for (double gamma : config.gammas) {
      SummaryRow row;
      row.n = n;
      row.gamma = gamma;
      row.n_seeds = static_cast<int>(config.seeds.size());
      for (std::uint64_t seed : config.seeds) {
        const fs::path file = out_dir / cell_dir_name(n, gamma) /
                              ("seed" + std::to_string(seed) + ".csv");
        const MetricsRow last = parse_last_row(file);
        row.final_q_pos_mean += last.q_pos;
        row.final_retained_mass_mean += last.retained_mass;
        row.final_entropy_mean += last.entropy;
      }
      const auto k = static_cast<double>(config.seeds.size());
      row.final_q_pos_mean /= k;
      row.final_retained_mass_mean /= k;
      row.final_entropy_mean /= k;
      summary.rows.push_back(row);
    }
  }
  // The reported concentration zone: group sizes whose gamma = 0 seed-mean
  // final retained mass falls below 0.5.
  for (SummaryRow& row : summary.rows) {
    const SummaryRow* base = summary.find(row.n, 0.0);
    row.concentration_zone =
        base != nullptr && base->final_retained_mass_mean < 0.5;
  }

  {
    std::ofstream out(out_dir / "summary.csv");
    if (!out) throw IoError("cannot write summary.csv");
    out << "# final metrics are the state at the last step (step = steps)\n";
    out << "n,gamma,n_seeds,final_q_pos_mean,final_retained_mass_mean,"
           "final_entropy_mean,concentration_zone\n";
    for (const SummaryRow& r : summary.rows) {
      out << r.n << ',' << format_value(r.gamma, 7) << ',' << r.n_seeds << ','
          << g17(r.final_q_pos_mean) << ',' << g17(r.final_retained_mass_mean)
          << ',' << g17(r.final_entropy_mean) << ','
          << (r.concentration_zone ? 1 : 0) << '\n';
    }
  }
  return summary;
}

SweepSummary read_summary(const fs::path& summary_csv) {
  std::ifstream in(summary_csv);
  if (!in) throw IoError("cannot open '" + summary_csv.string() + "'");
  SweepSummary s;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("n,", 0) == 0) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) throw IoError("summary.csv: malformed row");
    SummaryRow r;
    r.n = std::stoll(cells[0]);
    r.gamma = std::strtod(cells[1].c_str(), nullptr);
    r.n_seeds = std::stoi(cells[2]);
    r.final_q_pos_mean = std::strtod(cells[3].c_str(), nullptr);
    r.final_retained_mass_mean = std::strtod(cells[4].c_str(), nullptr);
    r.final_entropy_mean = std::strtod(cells[5].c_str(), nullptr);
    r.concentration_zone = cells[6] == "1";
    s.rows.push_back(r);
  }
  return s;
}

void emit_tailmiss_grid(std::span<const double> mu_values,
                        std::span<const double> rho_values, long long n_max,
                        std::ostream& out) {
  if (n_max < 1) throw DomainError("tailmiss grid: n_max must be >= 1");
  out << "mu,rho,n,pr_btau,pr_active\n";
  for (double mu : mu_values) {
    if (!(mu > 0.0 && mu < 1.0))
      throw DomainError("tailmiss grid: mu must lie in (0, 1)");
    for (double rho : rho_values) {
      if (!(rho > 0.0 && rho <= 1.0))
        throw DomainError("tailmiss grid: rho must lie in (0, 1]");
      const double tau = rho * mu;
      std::vector<long long> ns;
      const int kPoints = 96;
      const double span = std::log(static_cast<double>(n_max));
      for (int i = 0; i < kPoints; ++i) {
        const double t =
            kPoints == 1 ? 0.0 : static_cast<double>(i) / (kPoints - 1);
        auto n = static_cast<long long>(std::llround(std::exp(t * span)));
        ns.push_back(std::clamp<long long>(n, 1, n_max));
      }
      if (tau < mu) {
        const analytic::PeakResult peak = analytic::tail_miss_peak(mu, tau, n_max);
        ns.push_back(peak.n_star);
      }
      std::sort(ns.begin(), ns.end());
      ns.erase(std::unique(ns.begin(), ns.end()), ns.end());
      for (long long n : ns) {
        const analytic::PromptStats stats{mu, tau, n};
        out << format_value(mu, 17) << ',' << format_value(rho, 17) << ',' << n
            << ',' << g17(analytic::tail_miss_probability(stats)) << ','
            << g17(analytic::activity_probability(stats)) << '\n';
      }
    }
  }
}

void emit_focal_curve(std::span<const double> gamma_values, int grid_points,
                      std::ostream& out) {
  if (grid_points < 2)
    throw DomainError("focal curve: grid_points must be >= 2");
  out << "mu,gamma,mag_correct,mag_incorrect\n";
  std::vector<double> mu_grid(static_cast<std::size_t>(grid_points));
  for (int i = 0; i < grid_points; ++i)
    mu_grid[static_cast<std::size_t>(i)] =
        static_cast<double>(i + 1) / static_cast<double>(grid_points + 1);
  const RewardConfig cfg{1.0, 0.0, 0.0};
  for (double gamma : gamma_values) {
    const core::MagnitudeCurve curve =
        core::advantage_magnitude_curve(mu_grid, gamma, cfg);
    for (std::size_t i = 0; i < mu_grid.size(); ++i) {
      out << g17(mu_grid[i]) << ',' << format_value(gamma, 17) << ','
          << g17(curve.correct[i]) << ',' << g17(curve.incorrect[i]) << '\n';
    }
  }
}

std::vector<oracle::OracleReport> verify_suite(std::uint64_t seed) {
  using analytic::ConditionalDist;
  using analytic::PromptStats;
  using oracle::OracleReport;
  std::vector<OracleReport> reports;
  rng::Sequence seq(rng::stream(seed).child(0xC0FFEE));

  const auto named = [&](OracleReport r, const std::string& name) {
    r.name = name;
    reports.push_back(std::move(r));
  };

  // Tail-miss closed form against trinomial simulation.
  named(oracle::mc_tail_miss(
            0.5, 0.05, 8, 10'000'000, seq.next(),
            analytic::tail_miss_probability(PromptStats{0.5, 0.05, 8})),
        "tailmiss/mu0.5_tau0.05_n8");
  named(oracle::mc_tail_miss(
            0.3, 0.0, 16, 1'000'000, seq.next(),
            analytic::activity_probability(PromptStats{0.3, 0.0, 16})),
        "tailmiss/tau0_activity_reduction");
  named(oracle::mc_tail_miss(0.5, 0.2, 1, 100'000, seq.next(),
                             analytic::tail_miss_probability(
                                 PromptStats{0.5, 0.2, 1})),
        "tailmiss/n1_exact_zero");
  for (int i = 0; i < 3; ++i) {
    const double mu = 0.1 + 0.8 * rng::to_unit(seq.next());
    const double rho = 0.05 + 0.75 * rng::to_unit(seq.next());
    const long long n =
        2 + static_cast<long long>(rng::to_bounded(seq.next(), 255));
    const PromptStats stats{mu, rho * mu, n};
    named(oracle::mc_tail_miss(mu, rho * mu, n, 1'000'000, seq.next(),
                               analytic::tail_miss_probability(stats)),
          "tailmiss/random_" + std::to_string(i));
  }

  // Conditional sampled-mass identity.
  const ConditionalDist two_point{{0.75, 0.25}, 0.4};
  named(oracle::mc_conditional_mass(
            two_point.probs, two_point.total_mass, 1, 1'000'000, seq.next(),
            analytic::expected_sampled_mass_given_k(two_point, 1)),
        "condmass/two_point_k1");
  named(oracle::mc_conditional_mass(
            two_point.probs, two_point.total_mass, 2, 1'000'000, seq.next(),
            analytic::expected_sampled_mass_given_k(two_point, 2)),
        "condmass/two_point_k2");
  named(oracle::mc_conditional_mass(
            two_point.probs, two_point.total_mass, 0, 10'000, seq.next(),
            analytic::expected_sampled_mass_given_k(two_point, 0)),
        "condmass/k0_exact_zero");
  const ConditionalDist point{{1.0}, 0.7};
  named(oracle::mc_conditional_mass(
            point.probs, point.total_mass, 3, 10'000, seq.next(),
            analytic::expected_sampled_mass_given_k(point, 3)),
        "condmass/single_point_saturates");
  for (int i = 0; i < 2; ++i) {
    const auto support =
        2 + static_cast<std::size_t>(rng::to_bounded(seq.next(), 49));
    ConditionalDist d;
    d.total_mass = 0.1 + 0.8 * rng::to_unit(seq.next());
    double sum = 0.0;
    for (std::size_t s = 0; s < support; ++s) {
      d.probs.push_back(0.05 + rng::to_unit(seq.next()));
      sum += d.probs.back();
    }
    for (double& q : d.probs) q /= sum;
    const long long k =
        1 + static_cast<long long>(rng::to_bounded(seq.next(), 24));
    named(oracle::mc_conditional_mass(
              d.probs, d.total_mass, k, 200'000, seq.next(),
              analytic::expected_sampled_mass_given_k(d, k)),
          "condmass/random_" + std::to_string(i));
  }

  // First-order mass-transfer predictions on a random small policy.
  {
    categorical::CategoricalPolicy policy;
    const std::size_t sz = 16;
    for (std::size_t i = 0; i < sz; ++i) {
      policy.logits.push_back(2.0 * rng::to_unit(seq.next()) - 1.0);
      policy.correct.push_back(i < 6 ? 1 : 0);
    }
    policy.refresh();
    const RewardConfig cfg{1.0, 0.0, 1e-6};
    const categorical::SampleBatch batch =
        categorical::sample_batch(policy, 8, rng::Stream{seq.next()});
    const categorical::BatchDecomposition d =
        categorical::decompose_batch(policy, batch, cfg);
    const double eta = 1e-3;
    const auto pair = oracle::first_order_check(
        policy.logits, policy.correct, batch.sampled_correct,
        batch.sampled_incorrect, batch.draw_count(), cfg, eta,
        categorical::predicted_delta_qpos(d, cfg, eta, batch.draw_count()),
        categorical::predicted_delta_qupos(d, cfg, eta, batch.draw_count()));
    named(pair[0], "first_order/qpos_random16");
    named(pair[1], "first_order/qupos_random16");
  }

  // pass@k estimator against exhaustive enumeration for every n <= 12.
  {
    double worst = 0.0;
    long long cases = 0;
    for (int n = 1; n <= 12; ++n) {
      for (int c = 0; c <= n; ++c) {
        analytic::CorrectnessMatrix m;
        m.rows = 1;
        m.cols = static_cast<std::size_t>(n);
        m.cells.assign(static_cast<std::size_t>(n), 0);
        for (int i = 0; i < c; ++i) m.cells[static_cast<std::size_t>(i)] = 1;
        for (int k = 1; k <= n; ++k) {
          const double est = analytic::pass_at_k(m, k);
          const double ref = oracle::exhaustive_pass_at_k(n, c, k);
          worst = std::max(worst, std::abs(est - ref));
          ++cases;
        }
      }
    }
    reports.push_back(OracleReport{"passk/exhaustive_n_le_12", worst, 0.0, 0.0,
                                   worst == 0.0, cases});
  }

  return reports;
}

}  // namespace grouprel::harness
