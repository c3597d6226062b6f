#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "gauss_eot/cli.hpp"
#include "test_support.hpp"

using namespace gauss_eot;

namespace {

const std::string kData = GAUSS_EOT_DATA_DIR;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "gauss-eot");
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

/// Runs the installed binary through the shell; returns the exit status.
int run_binary(const std::string& env, const std::string& args) {
  const std::string cmd = env + " " + GAUSS_EOT_CLI + " " + args + " > /dev/null 2>&1";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

struct Csv {
  std::vector<std::string> comments;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t col(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw std::runtime_error("no column " + name);
  }
  double num(std::size_t row, const std::string& name) const {
    return parse_double(rows.at(row).at(col(name)), name);
  }
  const std::string& text(std::size_t row, const std::string& name) const {
    return rows.at(row).at(col(name));
  }
};

Csv parse_csv(const std::string& text) {
  Csv csv;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first) {
      EXPECT_EQ(line, kCsvVersionLine);
      first = false;
      continue;
    }
    if (!line.empty() && line[0] == '#') {
      csv.comments.push_back(line);
    } else if (csv.header.empty()) {
      csv.header = split_csv_line(line);
    } else {
      csv.rows.push_back(split_csv_line(line));
    }
  }
  return csv;
}

std::string temp_file(const std::string& name) { return ::testing::TempDir() + "gauss_eot_cli_" + name; }

std::string write_corners(std::uint64_t seed) {
  // Spectra in [6, 12] keep entropic fixed points positive up to eps = 10.
  std::mt19937_64 rng(seed);
  Json members = Json::array();
  for (int c = 0; c < 4; ++c) {
    const Gaussian g(testing_support::gaussian_matrix(2, 1, rng),
                     testing_support::random_spd(2, rng, 6.0, 12.0));
    members.push_back(gaussian_to_json(g));
  }
  const std::string path = temp_file("corners_" + std::to_string(seed) + ".json");
  std::ofstream(path) << Json{{"members", members}}.dump();
  return path;
}

}  // namespace

TEST(EpsilonSweep, ParseAndEndpoints) {
  const auto s = cli::EpsilonSweep::parse("0.001:1000:7:log").values();
  ASSERT_EQ(s.size(), 7u);
  EXPECT_EQ(s.front(), 0.001);
  EXPECT_EQ(s.back(), 1000.0);
  EXPECT_NEAR(s[3], 1.0, 1e-12);
  const auto lin = cli::EpsilonSweep::parse("0:1:5").values();
  EXPECT_EQ(lin[2], 0.5);
  for (const char* bad : {"1:0:5", "0:1", "0:1:1", "0:1:5:cubic", "0:1:5:log", "a:1:3", "-1:1:3"}) {
    EXPECT_THROW(cli::EpsilonSweep::parse(bad), cli::ConfigError) << bad;
  }
}

TEST(Cli, DistanceHeaderAndRows) {
  const Outcome o = run_cli({"distance", kData + "/fig1_source.json", kData + "/fig1_target.json",
                             "--epsilon-sweep", "0.01:100:6:log"});
  ASSERT_EQ(o.code, 0) << o.err;
  const Csv csv = parse_csv(o.out);
  EXPECT_EQ(csv.header, (std::vector<std::string>{"epsilon", "w2_sq", "ot_eps", "sinkhorn_div"}));
  ASSERT_EQ(csv.rows.size(), 6u);
  const double w2 = w2_distance_sq(load_gaussian(kData + "/fig1_source.json"),
                                   load_gaussian(kData + "/fig1_target.json"));
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    EXPECT_EQ(csv.num(r, "w2_sq"), w2);
    if (r > 0) {
      EXPECT_GT(csv.num(r, "ot_eps"), csv.num(r - 1, "ot_eps"));
      EXPECT_LT(csv.num(r, "sinkhorn_div"), csv.num(r - 1, "sinkhorn_div"));
    }
  }
  EXPECT_LT(std::abs(csv.num(5, "sinkhorn_div") - 16.0), 1e-2);
}

TEST(Cli, DistanceZeroEpsilonAndIdenticalInputs) {
  const Outcome o = run_cli(
      {"distance", kData + "/tensor_a.json", kData + "/tensor_a.json", "--epsilon", "0,1,10"});
  ASSERT_EQ(o.code, 0) << o.err;
  const Csv csv = parse_csv(o.out);
  ASSERT_EQ(csv.rows.size(), 3u);
  for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(csv.num(r, "sinkhorn_div"), 0.0);
  EXPECT_EQ(csv.num(0, "ot_eps"), 0.0);
  const Outcome z =
      run_cli({"distance", kData + "/tensor_a.json", kData + "/tensor_b.json", "--epsilon", "0"});
  const Csv zc = parse_csv(z.out);
  EXPECT_EQ(zc.num(0, "ot_eps"), zc.num(0, "w2_sq"));
  EXPECT_EQ(zc.num(0, "sinkhorn_div"), zc.num(0, "w2_sq"));
}

TEST(Cli, InterpolateEndpointsRoundTrip) {
  const std::string a = kData + "/tensor_a.json";
  const std::string b = kData + "/tensor_b.json";
  const Outcome o = run_cli({"interpolate", a, b, "--epsilon", "0.5", "--t-grid", "2"});
  ASSERT_EQ(o.code, 0) << o.err;
  const Csv csv = parse_csv(o.out);
  ASSERT_EQ(csv.rows.size(), 2u);
  const Gaussian g0 = load_gaussian(a);
  const Gaussian g1 = load_gaussian(b);
  const Gaussian r0 = gaussian_from_fields(csv.rows[0], csv.col("mean_0"), 3);
  const Gaussian r1 = gaussian_from_fields(csv.rows[1], csv.col("mean_0"), 3);
  EXPECT_EQ(r0.mean(), g0.mean());
  EXPECT_EQ(r0.cov().matrix(), g0.cov().matrix());
  EXPECT_EQ(r1.mean(), g1.mean());
  EXPECT_EQ(r1.cov().matrix(), g1.cov().matrix());
}

TEST(Cli, InterpolateTable) {
  const Outcome o = run_cli({"interpolate", kData + "/fig1_source.json", kData + "/fig1_target.json",
                             "--density-grid", "-4:4:9"});
  ASSERT_EQ(o.code, 0) << o.err;
  const Csv csv = parse_csv(o.out);
  EXPECT_EQ(csv.rows.size(), 5u * 11u);
  EXPECT_EQ(csv.header.back(), "pdf_8");
  ASSERT_EQ(csv.comments.size(), 1u);
  EXPECT_NE(csv.comments[0].find("pdf_k"), std::string::npos);
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    if (csv.num(r, "epsilon") == 20.0 && csv.num(r, "t") == 0.5) {
      EXPECT_NEAR(csv.num(r, "cov_0_0"), 2.652498751, 1e-8);
      EXPECT_NEAR(csv.num(r, "mean_0"), 0.0, 1e-15);
    }
  }
  EXPECT_EQ(run_cli({"interpolate", kData + "/tensor_a.json", kData + "/tensor_b.json",
                     "--density-grid", "-4:4:9"}).code,
            2);
  const std::string a = kData + "/fig1_source.json";
  const std::string b = kData + "/fig1_target.json";
  EXPECT_EQ(run_cli({"interpolate", a, b, "--t-grid", "1"}).code, 2);
  EXPECT_EQ(run_cli({"interpolate", a, b, "--density-grid", "4:-4:9"}).code, 2);
  EXPECT_EQ(run_cli({"interpolate", a, b, "--density-grid", "-4:4"}).code, 2);
}

TEST(Cli, JsonOutput) {
  const Outcome o = run_cli({"distance", kData + "/fig1_source.json", kData + "/fig1_target.json",
                             "--epsilon", "1", "--format", "json"});
  ASSERT_EQ(o.code, 0) << o.err;
  const Json j = Json::parse(o.out);
  EXPECT_EQ(j["format"], "gauss-eot v1");
  ASSERT_EQ(j["rows"].size(), 1u);
  EXPECT_EQ(j["rows"][0]["epsilon"].get<double>(), 1.0);
}

TEST(Cli, OutputFileAndDeterminism) {
  const std::string p1 = temp_file("v1.csv");
  const std::string p2 = temp_file("v2.csv");
  ASSERT_EQ(run_cli({"validate", "--seed", "5", "-o", p1}).code, 0);
  ASSERT_EQ(run_cli({"validate", "--seed", "5", "-o", p2}).code, 0);
  std::ifstream f1(p1);
  std::ifstream f2(p2);
  const std::string s1((std::istreambuf_iterator<char>(f1)), {});
  const std::string s2((std::istreambuf_iterator<char>(f2)), {});
  EXPECT_FALSE(s1.empty());
  EXPECT_EQ(s1, s2);
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST(Cli, SinkhornOracleCommand) {
  const Outcome o = run_cli({"sinkhorn", kData + "/standard_1d.json", kData + "/fig1_target.json",
                             "--epsilon", "0.5,2", "--grid", "256"});
  ASSERT_EQ(o.code, 0) << o.err;
  const Csv csv = parse_csv(o.out);
  ASSERT_EQ(csv.rows.size(), 2u);
  for (std::size_t r = 0; r < 2; ++r) {
    EXPECT_EQ(csv.num(r, "nodes"), 256.0);
    EXPECT_LT(csv.num(r, "rel_err"), 1e-4);
  }
  EXPECT_EQ(run_cli({"sinkhorn", kData + "/standard_1d.json", kData + "/fig1_target.json", "--epsilon", "0"})
                .code,
            2);
  EXPECT_EQ(run_cli({"sinkhorn", kData + "/tensor_a.json", kData + "/tensor_b.json"}).code, 2);
}

TEST(Cli, Barycenter) {
  const Outcome o = run_cli({"barycenter", kData + "/population_2d.json", "--epsilon", "0,0.5", "--kind",
                             "sinkhorn"});
  ASSERT_EQ(o.code, 0) << o.err;
  const Csv csv = parse_csv(o.out);
  ASSERT_EQ(csv.rows.size(), 2u);
  EXPECT_EQ(csv.text(0, "kind"), "w2");
  EXPECT_EQ(csv.text(1, "kind"), "sinkhorn");
  const WeightedPopulation pop = load_population(kData + "/population_2d.json");
  const BarycenterResult direct = sinkhorn_barycenter(pop, Epsilon(0.5));
  EXPECT_EQ(csv.text(1, "status"), "converged");
  EXPECT_EQ(csv.num(1, "cov_0_1"), direct.barycenter.cov().matrix()(0, 1));
  EXPECT_EQ(csv.num(1, "mean_1"), direct.barycenter.mean()(1));
}

TEST(Cli, BarycenterFailureStillWritesTable) {
  const Outcome o = run_cli({"barycenter", kData + "/population_2d.json", "--epsilon", "0.1,50", "--kind",
                             "entropic"});
  EXPECT_EQ(o.code, 1);
  const Csv csv = parse_csv(o.out);
  ASSERT_EQ(csv.rows.size(), 2u);
  EXPECT_EQ(csv.text(0, "status"), "converged");
  EXPECT_NE(csv.text(1, "status"), "converged");
  EXPECT_EQ(csv.text(1, "cov_0_0"), "");
  EXPECT_FALSE(o.err.empty());
}

TEST(Cli, SpanTrendsAcrossEpsilon) {
  // Entropic barycenters contract as eps grows; Sinkhorn ones stay put.
  const std::string corners = write_corners(120);
  std::map<std::string, std::vector<double>> traces;
  for (const char* kind : {"entropic", "sinkhorn"}) {
    const Outcome o = run_cli({"span", corners, "--kind", kind, "--epsilon", "0.1,1,10", "--cells", "5"});
    ASSERT_EQ(o.code, 0) << o.err;
    const Csv csv = parse_csv(o.out);
    ASSERT_EQ(csv.rows.size(), 3u * 25u);
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
      EXPECT_EQ(csv.text(r, "status"), "converged");
      traces[kind].push_back(csv.num(r, "cov_0_0") + csv.num(r, "cov_1_1"));
    }
  }
  for (std::size_t r = 0; r < traces["entropic"].size(); ++r) {
    EXPECT_LE(traces["entropic"][r], traces["sinkhorn"][r] + 1e-8) << r;
  }
  for (std::size_t cell = 0; cell < 25; ++cell) {
    EXPECT_LT(traces["entropic"][50 + cell], traces["entropic"][cell]);
  }
  std::remove(corners.c_str());
}

TEST(Cli, SpanNeedsFourCorners) {
  EXPECT_EQ(run_cli({"span", kData + "/population_2d.json"}).code, 2);
  EXPECT_EQ(run_cli({"span", kData + "/corners_2d.json", "--cells", "1"}).code, 2);
  const Outcome o = run_cli({"span", kData + "/corners_2d.json", "--kind", "w2", "--cells", "3"});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(parse_csv(o.out).rows.size(), 9u);
}

TEST(Cli, LimitsHeaderAndThreshold) {
  const Outcome o = run_cli({"limits", kData + "/fig1_source.json", kData + "/fig1_target.json"});
  ASSERT_EQ(o.code, 0) << o.err;
  const Csv csv = parse_csv(o.out);
  EXPECT_EQ(csv.header,
            (std::vector<std::string>{"epsilon", "ot_eps", "gap_w2", "gap_sinkhorn_mmd", "gap_ot_mmd"}));
  EXPECT_EQ(csv.rows.size(), 10u);
  EXPECT_EQ(run_cli({"limits", kData + "/fig1_source.json", kData + "/fig1_target.json", "--w2-threshold",
                     "1e-12"})
                .code,
            1);
  EXPECT_EQ(run_cli({"limits", kData + "/fig1_source.json", kData + "/fig1_target.json", "--epsilon", "0,1"})
                .code,
            2);
}

TEST(Cli, ValidateDefaultAndTightened) {
  for (const char* scale : {"1", "0.01"}) {
    const Outcome o = run_cli({"validate", "--tol-scale", scale});
    EXPECT_EQ(o.code, 0) << scale << "\n" << o.err;
    const Csv csv = parse_csv(o.out);
    EXPECT_EQ(csv.header,
              (std::vector<std::string>{"check", "group", "fixture", "value", "tolerance", "status"}));
    for (std::size_t r = 0; r < csv.rows.size(); ++r) EXPECT_EQ(csv.text(r, "status"), "pass");
  }
}

TEST(Cli, ValidateCoarseGridFailsOnlyGridChecks) {
  const Outcome o = run_cli({"validate", "--tol-scale", "0.01", "--grid", "16"});
  EXPECT_EQ(o.code, 1);
  const Csv csv = parse_csv(o.out);
  int grid_failures = 0;
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    if (csv.text(r, "group") == "grid") {
      grid_failures += csv.text(r, "status") != "pass";
    } else {
      EXPECT_EQ(csv.text(r, "status"), "pass") << csv.text(r, "check") << " " << csv.text(r, "fixture");
    }
  }
  EXPECT_GT(grid_failures, 0);
}

TEST(Cli, ValidateFixturesFile) {
  const std::string path = temp_file("fixtures.json");
  std::ofstream(path) << R"({"oracle": [{"source": {"mean": [0], "cov": [[1]]},
                                       "target": {"mean": [1], "cov": [[2]]}, "epsilon": 1}],
                             "pairs": []})";
  const Outcome o = run_cli({"validate", "--fixtures", path});
  EXPECT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(parse_csv(o.out).rows.size(), 1u);
  std::remove(path.c_str());
  EXPECT_EQ(run_cli({"validate", "--fixtures", kData + "/fixtures_corrupt.json"}).code, 2);
}

TEST(Cli, ConfigErrors) {
  const std::string a = kData + "/fig1_source.json";
  const std::string b = kData + "/fig1_target.json";
  EXPECT_EQ(run_cli({"bogus"}).code, 2);
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"distance", a, kData + "/missing.json"}).code, 2);
  EXPECT_EQ(run_cli({"distance", a}).code, 2);
  EXPECT_EQ(run_cli({"distance", a, kData + "/tensor_a.json"}).code, 2);
  EXPECT_EQ(run_cli({"distance", a, b, "--epsilon", "1", "--epsilon-sweep", "1:2:3"}).code, 2);
  EXPECT_EQ(run_cli({"distance", a, b, "--epsilon", "-1"}).code, 2);
  EXPECT_EQ(run_cli({"distance", a, b, "--format", "xml"}).code, 2);
  EXPECT_EQ(run_cli({"barycenter", kData + "/population_2d.json", "--damping", "2"}).code, 2);
  EXPECT_EQ(run_cli({"distance", "--help"}).code, 0);
}

TEST(CliBinary, ExitCodesAndFloorOverride) {
  const std::string a = kData + "/fig1_source.json";
  const std::string b = kData + "/fig1_target.json";
  EXPECT_EQ(run_binary("", "distance " + a + " " + b), 0);
  EXPECT_EQ(run_binary("", "distance " + a), 2);
  EXPECT_EQ(run_binary("", "limits " + a + " " + b + " --w2-threshold 1e-12"), 1);
  // Every population_2d member has lambda_min / lambda_max below 0.5.
  const std::string pop = kData + "/population_2d.json";
  EXPECT_EQ(run_binary("", "barycenter " + pop), 0);
  EXPECT_EQ(run_binary("GAUSS_EOT_EPS_FLOOR=0.5", "barycenter " + pop), 2);
  EXPECT_EQ(run_binary("GAUSS_EOT_EPS_FLOOR=junk", "barycenter " + pop), 0);
}
