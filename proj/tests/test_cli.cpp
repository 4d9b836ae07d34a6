#include "hetmf_cli.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

using namespace hetmf;
namespace fs = std::filesystem;

namespace {

struct Result {
  int rc = 0;
  std::string out, err;
};

Result run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Result r;
  r.rc = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

using Row = std::map<std::string, std::string>;

std::vector<Row> parse_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::getline(is, line);
  const auto header = cli::detail::split(line, ',');
  std::vector<Row> rows;
  while (std::getline(is, line)) {
    const auto cells = cli::detail::split(line, ',');
    EXPECT_EQ(cells.size(), header.size()) << line;
    Row row;
    for (std::size_t i = 0; i < header.size() && i < cells.size(); ++i) row[header[i]] = cells[i];
    rows.push_back(row);
  }
  return rows;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "hetmf_cli_test";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run_cli({"transient", "--cache", "3,0.8,1", "--grid", "0:1:0"}).rc, 1);
  EXPECT_EQ(run_cli({"transient", "--cache", "3,0.8,1", "--grid", "2:1:4"}).rc, 1);
  EXPECT_EQ(run_cli({"transient", "--cache", "3,0.8,1"}).rc, 1);
  EXPECT_EQ(run_cli({"transient", "--grid", "0:1:4"}).rc, 1);
  EXPECT_EQ(run_cli({"steady", "--cache", "3,0.8,1", "--methods", "mf,magic"}).rc, 1);
  EXPECT_EQ(run_cli({"steady", "--cache", "3,0.8,1", "--methods", ""}).rc, 1);
  EXPECT_EQ(run_cli({"steady", "--cache", "3,0.8,4"}).rc, 1);
  EXPECT_EQ(run_cli({"steady", "--lb", "3,0.8,4,1:2"}).rc, 1);
  EXPECT_EQ(run_cli({"frobnicate"}).rc, 1);
  EXPECT_EQ(run_cli({"--help"}).rc, 0);
  const auto r = run_cli({"transient", "--cache", "3,0.8,1", "--grid", "0:1:0"});
  EXPECT_NE(r.err.find("grid"), std::string::npos);
}

TEST(Cli, GridParsing) {
  const auto g = cli::parse_grid("0:2:4");
  EXPECT_EQ(g, (std::vector<double>{0.0, 0.5, 1.0, 1.5, 2.0}));
  EXPECT_THROW(cli::parse_grid("0:2"), cli::UsageError);
  EXPECT_THROW(cli::parse_grid("0:x:3"), cli::UsageError);
  EXPECT_THROW(cli::parse_grid("-1:2:3"), cli::UsageError);
}

TEST(Cli, TransientOracleOverCap) {
  const auto r = run_cli({"transient", "--cache", "20,0.5,5", "--grid", "0:1:2", "--methods", "mf,oracle"});
  EXPECT_EQ(r.rc, 2);
  EXPECT_NE(r.err.find("cap exceeded"), std::string::npos) << r.err;
  const auto rows = parse_csv(r.out);
  ASSERT_EQ(rows.size(), 3u * 20u * 2u);
  for (const auto& row : rows) {
    EXPECT_FALSE(row.at("mf").empty());
    EXPECT_TRUE(row.at("oracle").empty());
    EXPECT_TRUE(row.at("refined").empty());
  }
}

TEST(Cli, TransientMethodsAgreeOnSmallCache) {
  const auto r = run_cli({"transient", "--cache", "4,0.8,2", "--grid", "0:2:4", "--methods", "mf,refined,sim,oracle",
                          "--replicas", "200"});
  ASSERT_EQ(r.rc, 0) << r.err;
  const auto rows = parse_csv(r.out);
  ASSERT_EQ(rows.size(), 5u * 4u * 2u);
  // objects 3 and 4 start in the cache
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(rows[2 * k + 1].at("oracle"), k >= 2 ? "1" : "0");
  double mf_err = 0.0, rf_err = 0.0;
  for (const auto& row : rows) {
    EXPECT_FALSE(row.at("sim_mean").empty());
    EXPECT_FALSE(row.at("sim_ci_halfwidth").empty());
    const double o = std::stod(row.at("oracle"));
    mf_err = std::max(mf_err, std::abs(std::stod(row.at("mf")) - o));
    rf_err = std::max(rf_err, std::abs(std::stod(row.at("refined")) - o));
  }
  EXPECT_LT(rf_err, mf_err);
  EXPECT_LT(mf_err, 0.1);
}

TEST(Cli, SteadyCacheSummaryRow) {
  const auto prefix = scratch("steady10").string();
  const auto r = run_cli({"steady", "--cache", "10,0.5,3,3", "--methods", "mf,refined,exact", "--out", prefix});
  ASSERT_EQ(r.rc, 0) << r.err;
  EXPECT_TRUE(r.out.empty());
  const auto rows = parse_csv(slurp(prefix + "_steady.csv"));
  ASSERT_EQ(rows.size(), 10u * 3u + 1u);
  const auto& summary = rows.back();
  EXPECT_EQ(summary.at("object"), "summary");
  EXPECT_EQ(summary.at("state"), "cache_error");
  EXPECT_NEAR(std::stod(summary.at("mf")), 0.0142, 0.0142 * 0.05);
  EXPECT_NEAR(std::stod(summary.at("refined")), 0.00197, 0.00197 * 0.1);

  const auto side = nlohmann::json::parse(slurp(prefix + "_steady.json"));
  EXPECT_EQ(side["version"], cli::kVersion);
  EXPECT_TRUE(side.contains("revision"));
  EXPECT_EQ(side["config"]["command"], "steady");
  EXPECT_EQ(side["config"]["model"]["list_sizes"], (std::vector<std::size_t>{3, 3}));
  EXPECT_EQ(side["status"], "ok");
  EXPECT_EQ(side["clamped"]["mf"], 0);
}

TEST(Cli, SteadyExactAndOracleAgree) {
  const auto r = run_cli({"steady", "--cache", "8,0.5,2,2", "--methods", "exact,oracle"});
  ASSERT_EQ(r.rc, 0) << r.err;
  const auto rows = parse_csv(r.out);
  ASSERT_EQ(rows.size(), 8u * 3u + 1u);
  for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
    EXPECT_LE(std::abs(std::stod(rows[i].at("exact")) - std::stod(rows[i].at("oracle"))), 1e-10);
  }
  EXPECT_LE(std::stod(rows.back().at("oracle")), 1e-10);
}

TEST(Cli, SteadyLoadBalanceHasNoExactColumn) {
  const auto r = run_cli({"steady", "--lb", "3,0.8,4,flat", "--methods", "mf,refined,exact", "--events", "1000"});
  EXPECT_EQ(r.rc, 0) << r.err;
  EXPECT_NE(r.err.find("exact"), std::string::npos);
  const auto rows = parse_csv(r.out);
  ASSERT_EQ(rows.size(), 3u * 5u);
  for (const auto& row : rows) {
    EXPECT_TRUE(row.at("exact").empty());
    EXPECT_FALSE(row.at("refined").empty());
  }
}

TEST(Cli, SteadyUnstableFixedPointIsPartial) {
  // Infection outpaces recovery; starting from all susceptible the fixed point
  // found is the unstable disease-free state.
  const ModelSpec m(2, {"S", "I"},
                    {pairwise({0, 0, 1}, {1, 1, 1}, 2.0), pairwise({1, 0, 1}, {0, 1, 1}, 2.0)});
  const auto path = scratch("sis.json");
  save_model(m, path);
  const auto r = run_cli({"steady", "--model", path.string(), "--init", "S,S", "--methods", "mf,refined"});
  EXPECT_EQ(r.rc, 2);
  EXPECT_NE(r.err.find("refined"), std::string::npos) << r.err;
  for (const auto& row : parse_csv(r.out)) EXPECT_TRUE(row.at("refined").empty());
}

TEST(Cli, ModelFileWithInitialState) {
  const ModelSpec m(2, {"a", "b"}, {unilateral(0, 0, 1, 1.0), unilateral(1, 1, 0, 2.0)});
  const auto path = scratch("flip.json");
  save_model(m, path);
  const auto r = run_cli({"transient", "--model", path.string(), "--init", "a,b", "--grid", "0:1:1"});
  ASSERT_EQ(r.rc, 0) << r.err;
  const auto rows = parse_csv(r.out);
  ASSERT_EQ(rows.size(), 8u);
  EXPECT_EQ(rows[1].at("object"), "1");
  EXPECT_EQ(rows[1].at("state"), "b");
  EXPECT_EQ(rows[3].at("mf"), "1");
  EXPECT_NEAR(std::stod(rows[5].at("mf")), 1.0 - std::exp(-1.0), 1e-7);
  EXPECT_NEAR(std::stod(rows[7].at("mf")), std::exp(-2.0), 1e-7);
  EXPECT_EQ(run_cli({"transient", "--model", path.string(), "--init", "a", "--grid", "0:1:1"}).rc, 1);
  EXPECT_EQ(run_cli({"transient", "--model", path.string(), "--init", "a,z", "--grid", "0:1:1"}).rc, 1);
}

TEST(Cli, DeterministicReruns) {
  const std::vector<std::string> args{"transient", "--cache", "5,0.8,2", "--grid", "0:3:3",
                                      "--methods", "mf,refined,sim", "--replicas", "300", "--seed", "7"};
  auto one = args, two = args;
  one.insert(one.end(), {"--threads", "1"});
  two.insert(two.end(), {"--threads", "3"});
  const auto a = run_cli(one), b = run_cli(two);
  ASSERT_EQ(a.rc, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(run_cli(one).out, a.out);

  const std::vector<std::string> steady{"steady", "--lb", "4,0.9,6,light", "--methods", "mf,sim",
                                        "--events", "20000", "--warmup", "2000"};
  EXPECT_EQ(run_cli(steady).out, run_cli(steady).out);
}

TEST(Cli, OutputsAreProbabilities) {
  const auto r = run_cli({"transient", "--lb", "4,0.9,5,strong", "--grid", "0:5:5", "--methods", "mf,refined"});
  ASSERT_EQ(r.rc, 0) << r.err;
  for (const auto& row : parse_csv(r.out)) {
    for (const char* col : {"mf", "refined"}) {
      const double v = std::stod(row.at(col));
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Cli, BenchCacheSingleRow) {
  const auto prefix = scratch("bench_cache").string();
  const auto r = run_cli({"bench-cache", "--n-list", "10", "--out", prefix});
  ASSERT_EQ(r.rc, 0) << r.err;
  const auto rows = parse_csv(slurp(prefix + "_bench_cache.csv"));
  ASSERT_EQ(rows.size(), 1u);
  const auto& row = rows.front();
  EXPECT_EQ(row.at("n"), "10");
  const double mf = std::stod(row.at("mf")), rf = std::stod(row.at("refined"));
  EXPECT_NEAR(mf, 0.0142, 0.0142 * 0.05);
  EXPECT_NEAR(rf, 0.00197, 0.00197 * 0.1);
  EXPECT_NEAR(std::stod(row.at("n_x_mf")), 10.0 * mf, 1e-8);
  EXPECT_NEAR(std::stod(row.at("n2_x_refined")), 100.0 * rf, 1e-8);
  EXPECT_TRUE(row.at("sim").empty());
  const auto side = nlohmann::json::parse(slurp(prefix + "_bench-cache.json"));
  ASSERT_EQ(side["rows"].size(), 1u);
  EXPECT_NEAR(side["rows"][0]["mf"].get<double>(), mf, 1e-9 * mf);  // CSV keeps 10 significant digits
}

TEST(Cli, BenchCacheIsolatesFailures) {
  // n = 1 leaves both lists empty.
  const auto r = run_cli({"bench-cache", "--n-list", "1,10", "--occupancy", "0.5"});
  EXPECT_EQ(r.rc, 2);
  const auto rows = parse_csv(r.out);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_TRUE(rows[0].at("mf").empty());
  EXPECT_FALSE(rows[1].at("mf").empty());
}

TEST(Cli, BenchLoadBalanceMethods) {
  const auto prefix = scratch("bench_lb").string();
  const std::vector<std::string> base{"bench-lb", "--n-list", "4", "--buffer", "6", "--sim-buffer", "12",
                                      "--events", "20000", "--warmup", "2000", "--out", prefix};
  auto off = base;
  off.push_back("--no-homogeneous");
  ASSERT_EQ(run_cli(off).rc, 0);
  auto rows = parse_csv(slurp(prefix + "_lb_errors.csv"));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].at("method"), "mf");
  EXPECT_EQ(rows[1].at("method"), "refined");

  ASSERT_EQ(run_cli(base).rc, 0);
  rows = parse_csv(slurp(prefix + "_lb_errors.csv"));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[2].at("method"), "mf_homogeneous");
  EXPECT_EQ(rows[3].at("method"), "refined_homogeneous");

  const auto tails = parse_csv(slurp(prefix + "_lb_tails.csv"));
  std::size_t sim_rows = 0;
  for (const auto& t : tails) {
    if (t.at("method") == "sim") ++sim_rows;
    if (t.at("s") == "0") EXPECT_NEAR(std::stod(t.at("value")), 1.0, 1e-12);
  }
  EXPECT_EQ(sim_rows, 13u);
  const auto side = nlohmann::json::parse(slurp(prefix + "_bench-lb.json"));
  EXPECT_EQ(side["average_queue_length"].size(), 1u);
}

TEST(Cli, BenchLoadBalanceWithoutArrivals) {
  const auto r = run_cli({"bench-lb", "--n-list", "3", "--lambda", "0", "--events", "100"});
  ASSERT_EQ(r.rc, 0) << r.err;
  const auto rows = parse_csv(r.out);
  ASSERT_EQ(rows.size(), 4u);
  for (const auto& row : rows) EXPECT_LE(std::stod(row.at("error")), 1e-9);
}
