#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "gauss_eot/io.hpp"
#include "test_support.hpp"

using namespace gauss_eot;

namespace {

std::string temp_path(const std::string& name) {
  return ::testing::TempDir() + "gauss_eot_io_" + name;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ParseError& ex) {
    return ex.what();
  }
  return "";
}

}  // namespace

TEST(FormatDouble, ShortestRoundTrip) {
  std::mt19937_64 rng(110);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng) * std::pow(10.0, static_cast<int>(i % 40) - 20);
    EXPECT_EQ(parse_double(format_double(x), "x"), x);
  }
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_EQ(format_double(1e-300), "1e-300");
}

TEST(ParseDouble, RejectsJunk) {
  EXPECT_THROW(parse_double("1.5x", "f"), ParseError);
  EXPECT_THROW(parse_double("", "f"), ParseError);
  EXPECT_THROW(parse_double(" 1", "f"), ParseError);
  EXPECT_NE(error_of([] { parse_double("abc", "row 3"); }).find("row 3"), std::string::npos);
}

TEST(GaussianJson, RoundTripIsBitwise) {
  std::mt19937_64 rng(111);
  const Gaussian g = testing_support::random_gaussian(3, rng);
  const std::string path = temp_path("g.json");
  save_gaussian(path, g);
  const Gaussian back = load_gaussian(path);
  EXPECT_EQ(back.mean(), g.mean());
  EXPECT_EQ(back.cov().matrix(), g.cov().matrix());
  std::remove(path.c_str());
}

TEST(GaussianJson, ErrorsNameTheField) {
  const auto parse = [](const char* text) {
    return error_of([&] { gaussian_from_json(Json::parse(text), "in.json"); });
  };
  EXPECT_NE(parse(R"({"cov": [[1]]})").find("missing field 'mean'"), std::string::npos);
  EXPECT_NE(parse(R"({"mean": [0, 1], "cov": [[1, 0]]})").find("in.json.cov"), std::string::npos);
  EXPECT_NE(parse(R"({"mean": [0, 1], "cov": [[1, 0], [0]]})").find("in.json.cov[1]"),
            std::string::npos);
  EXPECT_NE(parse(R"({"mean": ["a"], "cov": [[1]]})").find("in.json.mean[0]"), std::string::npos);
  EXPECT_NE(parse(R"({"mean": [0, 0], "cov": [[1, 0.5], [0.4, 1]]})").find("not symmetric"),
            std::string::npos);
  EXPECT_NE(parse(R"({"mean": [0], "cov": [[-1]]})").find("in.json.cov"), std::string::npos);
  EXPECT_NE(parse(R"([1, 2])").find("expected an object"), std::string::npos);
}

TEST(GaussianJson, FileErrors) {
  EXPECT_THROW(load_gaussian(temp_path("missing.json")), ParseError);
  const std::string path = temp_path("broken.json");
  std::ofstream(path) << "{\"mean\": [0], ";
  EXPECT_NE(error_of([&] { load_gaussian(path); }).find(path), std::string::npos);
  std::remove(path.c_str());
}

TEST(PopulationJson, WeightsOptionalAndChecked) {
  const Json one = Json::parse(R"({"mean": [0], "cov": [[1]]})");
  const Json two = Json::parse(R"({"mean": [1], "cov": [[2]]})");
  const WeightedPopulation eq = population_from_json(Json{{"members", {one, two}}}, "p");
  EXPECT_DOUBLE_EQ(eq.weights()[0], 0.5);
  const WeightedPopulation w =
      population_from_json(Json{{"members", {one, two}}, {"weights", {1.0, 3.0}}}, "p");
  EXPECT_DOUBLE_EQ(w.weights()[1], 0.75);
  EXPECT_THROW(population_from_json(Json{{"members", {one, two}}, {"weights", {1.0}}}, "p"), ParseError);
  EXPECT_THROW(population_from_json(Json{{"members", {one, two}}, {"weights", {-1.0, 1.0}}}, "p"),
               ParseError);
  EXPECT_THROW(population_from_json(Json{{"members", Json::array()}}, "p"), ParseError);
  const Json wide = Json::parse(R"({"mean": [0, 0], "cov": [[1, 0], [0, 1]]})");
  EXPECT_NE(error_of([&] { population_from_json(Json{{"members", {one, wide}}}, "p"); })
                .find("p.members[1]"),
            std::string::npos);
}

TEST(DataFiles, AllLoad) {
  const std::string dir = GAUSS_EOT_DATA_DIR;
  EXPECT_EQ(load_gaussian(dir + "/fig1_source.json").dim(), 1);
  EXPECT_EQ(load_gaussian(dir + "/tensor_a.json").dim(), 3);
  EXPECT_EQ(load_population(dir + "/population_2d.json").size(), 3u);
  EXPECT_EQ(load_population(dir + "/corners_2d.json").size(), 4u);
  EXPECT_THROW(detail::read_json_file(dir + "/fixtures_corrupt.json"), ParseError);
}

TEST(GaussianFields, ColumnsAndRoundTrip) {
  const std::vector<std::string> cols = gaussian_columns(2);
  const std::vector<std::string> expected{"mean_0", "mean_1", "cov_0_0", "cov_0_1", "cov_1_0", "cov_1_1"};
  EXPECT_EQ(cols, expected);
  std::mt19937_64 rng(112);
  const Gaussian g = testing_support::random_gaussian(2, rng);
  std::vector<Table::Cell> row{std::string("x")};
  append_gaussian(row, g);
  Table t({"tag", "mean_0", "mean_1", "cov_0_0", "cov_0_1", "cov_1_0", "cov_1_1"});
  t.add_row(row);
  std::ostringstream os;
  t.write_csv(os);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  std::getline(in, line);
  const Gaussian back = gaussian_from_fields(split_csv_line(line), 1, 2);
  EXPECT_EQ(back.mean(), g.mean());
  EXPECT_EQ(back.cov().matrix(), g.cov().matrix());
  EXPECT_THROW(gaussian_from_fields({"1", "2"}, 0, 2), ParseError);
}

TEST(SplitCsv, TrailingEmptyField) {
  EXPECT_EQ(split_csv_line("a,,b,").size(), 4u);
  EXPECT_EQ(split_csv_line("a").size(), 1u);
}

TEST(Table, CsvLayout) {
  Table t({"epsilon", "n", "status"});
  t.add_comment("hello");
  t.add_row({0.25, 3LL, std::string("converged")});
  t.add_row({std::nan(""), -1LL, std::string("failed")});
  std::ostringstream os;
  t.write_csv(os);
  EXPECT_EQ(os.str(), "# gauss-eot v1\n# hello\nepsilon,n,status\n0.25,3,converged\n,-1,failed\n");
  EXPECT_THROW(t.add_row({1.0}), InvalidArgument);
}

TEST(Table, JsonLayout) {
  Table t({"epsilon", "n"});
  t.add_row({0.5, 2LL});
  t.add_row({std::nan(""), 1LL});
  const Json j = t.to_json();
  EXPECT_EQ(j["format"], "gauss-eot v1");
  EXPECT_EQ(j["columns"], Json({"epsilon", "n"}));
  EXPECT_EQ(j["rows"][0]["epsilon"].get<double>(), 0.5);
  EXPECT_EQ(j["rows"][0]["n"].get<long long>(), 2);
  EXPECT_TRUE(j["rows"][1]["epsilon"].is_null());
  std::ostringstream os;
  t.write_json(os);
  EXPECT_EQ(Json::parse(os.str()), j);
}
