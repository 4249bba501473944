#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Invocation {
  int exit_code;
  std::string out;
  std::string err;
};

fs::path work_dir() {
  static const fs::path dir = [] {
    fs::path p = fs::temp_directory_path() /
                 ("grouprel_cli_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Invocation invoke(const std::string& args) {
  const char* bin = std::getenv("GROUPREL_BIN");
  REQUIRE_MESSAGE(bin != nullptr, "GROUPREL_BIN must point at the CLI binary");
  const fs::path out = work_dir() / "stdout.txt";
  const fs::path err = work_dir() / "stderr.txt";
  const std::string cmd = std::string(bin) + " " + args + " > " +
                          out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  Invocation r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

}  // namespace

TEST_CASE("tailmiss prints the probability with 7 significant digits") {
  const auto r = invoke("tailmiss --mu 0.5 --tau 0.05 --n 8");
  CHECK(r.exit_code == 0);
  CHECK(r.out == "0.6578327\n");
}

TEST_CASE("full precision flag widens the output") {
  const auto r = invoke("--full-precision tailmiss --mu 0.5 --tau 0.05 --n 8");
  CHECK(r.exit_code == 0);
  const double v = std::strtod(r.out.c_str(), nullptr);
  CHECK(v == doctest::Approx(0.6578326687499998).epsilon(1e-12));
  CHECK(r.out.size() > 12);  // 17 significant digits, not 7
}

TEST_CASE("peak prints the argmax and its value") {
  const auto r = invoke("peak --mu 0.5 --tau 0.05 --n-max 100000");
  CHECK(r.exit_code == 0);
  CHECK(r.out == "5 0.7240781\n");
}

TEST_CASE("domain errors exit with code 1") {
  const auto r = invoke("tailmiss --mu 0.5 --tau 0.7 --n 8");
  CHECK(r.exit_code == 1);
  CHECK(r.out.empty());
  CHECK(!r.err.empty());
}

TEST_CASE("missing input files exit with code 3") {
  const auto r = invoke("passk --input /nonexistent/grades.csv --k 2");
  CHECK(r.exit_code == 3);
  CHECK(!r.err.empty());
}

TEST_CASE("unknown flags exit with code 1 and print usage") {
  const auto r = invoke("tailmiss --bogus 1");
  CHECK(r.exit_code == 1);
  CHECK(!r.err.empty());
  const auto r2 = invoke("no-such-command");
  CHECK(r2.exit_code == 1);
}

TEST_CASE("passk evaluates a correctness CSV") {
  const fs::path grades = work_dir() / "grades.csv";
  {
    std::ofstream out(grades);
    out << "1,1,0,0\n";
  }
  const auto r = invoke("passk --input " + grades.string() + " --k 2");
  CHECK(r.exit_code == 0);
  CHECK(r.out == "0.8333333\n");
}

TEST_CASE("simulate output is byte-identical across runs and thread counts") {
  const std::string flags =
      "simulate --small --n 32 --steps 30 --seed 9 --gamma 0.5";
  const auto a = invoke(flags + " --threads 1");
  const auto b = invoke(flags + " --threads 8");
  const auto c = invoke(flags + " --threads 1");
  CHECK(a.exit_code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out == c.out);
  CHECK(a.out.rfind("step,q_pos,retained_mass,entropy,g_mean,s_r_mean\n", 0) ==
        0);
}

TEST_CASE("simulate honors the output flag") {
  const fs::path out_file = work_dir() / "run.csv";
  const auto r = invoke("simulate --small --n 16 --steps 10 --output " +
                        out_file.string());
  CHECK(r.exit_code == 0);
  CHECK(r.out.empty());
  CHECK(slurp(out_file).rfind("step,", 0) == 0);
}

TEST_CASE("sigtest on identical inputs is never significant") {
  const fs::path grades = work_dir() / "same.csv";
  {
    std::ofstream out(grades);
    out << "1,0,1,0,1,0,1,0\n0,0,1,1,0,0,1,1\n";
  }
  const auto r = invoke("sigtest --a " + grades.string() + " --b " +
                        grades.string() + " --m 4 --k 1,2 --iterations 500");
  CHECK(r.exit_code == 0);
  std::stringstream ss(r.out);
  std::string line;
  std::getline(ss, line);
  CHECK(line == "k,mean_diff,p_value,significant");
  std::getline(ss, line);
  CHECK(line == "1,0,1,0");
  std::getline(ss, line);
  CHECK(line == "2,0,1,0");
}

TEST_CASE("sigtest at the default subsample size exercises wide matrices") {
  // 6 problems x 300 generations; treatment flips a block of zeros to ones.
  const fs::path a_path = work_dir() / "wide_a.csv";
  const fs::path b_path = work_dir() / "wide_b.csv";
  {
    std::ofstream a(a_path);
    std::ofstream b(b_path);
    for (int p = 0; p < 6; ++p) {
      for (int j = 0; j < 300; ++j) {
        const int va = (j * 7 + p * 13) % 29 == 0 ? 1 : 0;
        const int vb = va || (j % 11 == 0 && p % 2 == 0) ? 1 : 0;
        a << va << (j + 1 < 300 ? "," : "\n");
        b << vb << (j + 1 < 300 ? "," : "\n");
      }
    }
  }
  const auto r = invoke("sigtest --a " + a_path.string() + " --b " +
                        b_path.string() + " --iterations 400 --seed 11");
  CHECK(r.exit_code == 0);
  std::stringstream ss(r.out);
  std::string header, k1, k256;
  std::getline(ss, header);
  std::getline(ss, k1);
  std::getline(ss, k256);
  CHECK(k1.rfind("1,", 0) == 0);
  CHECK(k256.rfind("256,", 0) == 0);
  // pass@256 of the subsample saturates for both models (every problem has
  // at least one correct generation), so the difference distribution is 0.
  CHECK(k256.find(",0,1,0") != std::string::npos);
  // pass@1 strictly improves in the treatment.
  const double diff1 = std::strtod(k1.c_str() + 2, nullptr);
  CHECK(diff1 > 0.0);

  const auto r2 = invoke("sigtest --a " + a_path.string() + " --b " +
                         b_path.string() + " --iterations 400 --seed 11");
  CHECK(r2.out == r.out);  // byte-reproducible given identical flags
}

TEST_CASE("sigtest rejects k above m") {
  const fs::path grades = work_dir() / "small.csv";
  {
    std::ofstream out(grades);
    out << "1,0,1,0\n";
  }
  const auto r = invoke("sigtest --a " + grades.string() + " --b " +
                        grades.string() + " --m 4 --iterations 10");
  CHECK(r.exit_code == 1);  // default k list includes 256 > m
}

TEST_CASE("tailmiss grid mode writes a CSV") {
  const fs::path grid = work_dir() / "grid.csv";
  const auto r = invoke(
      "tailmiss --grid --mus 0.5 --rhos 0.1 --n-max 1000 --output " +
      grid.string());
  CHECK(r.exit_code == 0);
  const std::string content = slurp(grid);
  CHECK(content.rfind("mu,rho,n,pr_btau,pr_active\n", 0) == 0);
}

TEST_CASE("focal-curve prints the magnitude table") {
  const auto r = invoke("focal-curve --gammas 0,1 --grid-points 9");
  CHECK(r.exit_code == 0);
  CHECK(r.out.rfind("mu,gamma,mag_correct,mag_incorrect\n", 0) == 0);
  int lines = 0;
  for (char ch : r.out)
    if (ch == '\n') ++lines;
  CHECK(lines == 1 + 2 * 9);
}

TEST_CASE("verify runs the oracle suite and reports per-check rows") {
  const auto r = invoke("verify --all --seed 7");
  CHECK(r.exit_code == 0);
  CHECK(r.out.rfind("name,estimate,reference,stderr,pass,trials\n", 0) == 0);
  int rows = 0;
  std::stringstream ss(r.out);
  std::string line;
  std::getline(ss, line);
  while (std::getline(ss, line)) {
    ++rows;
    // pass is the fifth of six comma-separated fields
    std::stringstream row(line);
    std::string field;
    for (int i = 0; i < 5; ++i) std::getline(row, field, ',');
    CHECK(field == "1");
  }
  CHECK(rows >= 12);
}

TEST_CASE("sweep falls back to the output-directory environment variable") {
  const fs::path root = work_dir() / "env_out";
  const fs::path cfg_path = work_dir() / "env_cfg.json";
  {
    std::ofstream cfg(cfg_path);
    cfg << R"({"n_actions": 64, "n_correct": 8, "steps": 2, "log_every": 1,
               "group_sizes": [2], "gammas": [0], "seeds": [1]})";
  }
  const char* bin = std::getenv("GROUPREL_BIN");
  REQUIRE(bin != nullptr);
  const fs::path out = work_dir() / "env_stdout.txt";
  const std::string cmd = "GROUPREL_OUTPUT_DIR=" + root.string() + " " + bin +
                          " sweep --config " + cfg_path.string() + " > " +
                          out.string() + " 2>/dev/null";
  REQUIRE(std::system(cmd.c_str()) == 0);
  CHECK(fs::exists(root / "sweep" / "summary.csv"));
  CHECK(fs::exists(root / "sweep" / "N2_gamma0" / "seed1.csv"));
}

TEST_CASE("sweep writes records, summary, and is resumable") {
  const fs::path dir = work_dir() / "sweep";
  const fs::path cfg_path = work_dir() / "cfg.json";
  {
    std::ofstream cfg(cfg_path);
    cfg << R"({"n_actions": 64, "n_correct": 8, "steps": 5, "log_every": 2,
               "group_sizes": [2, 4], "gammas": [0], "seeds": [1, 2]})";
  }
  const auto r = invoke("sweep --config " + cfg_path.string() + " --output " +
                        dir.string() + " --parallelism 2");
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(dir / "summary.csv"));
  CHECK(fs::exists(dir / "config.snapshot"));
  CHECK(fs::exists(dir / "N2_gamma0" / "seed1.csv"));
  CHECK(fs::exists(dir / "N4_gamma0" / "seed2.csv"));
  CHECK(r.out.find("n,gamma,n_seeds") != std::string::npos);

  const std::string before = slurp(dir / "N2_gamma0" / "seed1.csv");
  const auto r2 = invoke("sweep --config " + cfg_path.string() + " --output " +
                         dir.string() + " --parallelism 1");
  CHECK(r2.exit_code == 0);
  CHECK(slurp(dir / "N2_gamma0" / "seed1.csv") == before);
  CHECK(r2.out == r.out);
}
