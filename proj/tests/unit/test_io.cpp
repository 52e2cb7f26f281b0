#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "bsbt/errors.hpp"
#include "bsbt/io.hpp"
#include "bsbt/random.hpp"

using namespace bsbt;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("bsbt_io_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

void write_small_dataset(const fs::path& dir, const std::string& comparisons) {
  write(dir / "areas.csv", "id,name,x,y\na,Alpha,0,0\nb,\"Beta, east\",1,0\nc,Gamma,,\n");
  write(dir / "edges.csv", "id_a,id_b,weight\na,b,1\nb,c,2.5\n");
  write(dir / "comparisons.csv", comparisons);
}

}  // namespace

TEST_CASE("numbers round trip through their text form") {
  Rng rng(1);
  for (int k = 0; k < 1000; ++k) {
    const double v = std::ldexp(uniform01(rng) - 0.5, static_cast<int>(uniform01(rng) * 200) - 100);
    CHECK(parse_double(format_double(v)) == v);
  }
  CHECK(format_double(std::nan("")) == "NA");
  CHECK(std::isnan(parse_double("NA")));
  CHECK(format_double(0.1) == "0.1");
  CHECK(parse_double(format_double(std::numeric_limits<double>::infinity())) == std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(parse_double("1.5x"), ValidationError);
  CHECK_THROWS_AS(parse_double(""), ValidationError);
}

TEST_CASE("CSV quoting round trip") {
  CsvTable t;
  t.header = {"a", "b"};
  t.rows = {{"plain", "with,comma"}, {"with \"quote\"", "line\nbreak"}, {"", " spaced "}};
  const auto parsed = parse_csv(to_csv(t), "t.csv");
  CHECK(parsed.header == t.header);
  CHECK(parsed.rows == t.rows);
  CHECK(csv_field("x,y") == "\"x,y\"");
  CHECK(csv_field("ok") == "ok");
}

TEST_CASE("CSV parsing details and errors") {
  const auto t = parse_csv("\xEF\xBB\xBFid,v\r\n1,2\r\n\r\n3,4", "x.csv");
  CHECK(t.header[0] == "id");
  CHECK(t.rows.size() == 2);
  CHECK(t.column("v", "x.csv") == 1);
  CHECK_FALSE(t.find_column("w").has_value());
  CHECK_THROWS_WITH_AS(t.column("w", "x.csv"), doctest::Contains("x.csv"), ValidationError);
  CHECK_THROWS_WITH_AS(parse_csv("a,b\n1,2\n3\n", "y.csv"), doctest::Contains("row 3"), ValidationError);
  CHECK_THROWS_AS(parse_csv("a\n\"open\n", "z.csv"), ValidationError);
}

TEST_CASE("dataset load, save, load is the identity") {
  TempDir tmp;
  write_small_dataset(tmp.path,
                      "judge_id,area_i,area_j,outcome,timestamp\n"
                      "j1,a,b,I_WINS,2024-01-01T00:00:00Z\nj2,c,b,TIE,\nj1,a,c,UNFAMILIAR,\n");
  write(tmp.path / "judges.csv", "judge_id,gender,occupation,familiarity\nj1,f,teacher,a|b|c\nj2,m,driver,b|c\n");
  const auto ds = load_dataset(tmp.path);
  CHECK(ds.network.size() == 3);
  CHECK(ds.network.area(1).name == "Beta, east");
  CHECK_FALSE(ds.network.area(2).x.has_value());
  CHECK(ds.records.size() == 3);
  CHECK(ds.records[1].outcome == Outcome::kTie);
  REQUIRE(ds.judges.size() == 2);
  CHECK(ds.judges[0].covariates.at("occupation") == "teacher");
  CHECK(ds.judges[1].familiarity == std::set<std::string>{"b", "c"});

  save_dataset(ds, tmp.path / "copy");
  const auto again = load_dataset(tmp.path / "copy");
  CHECK(again.records == ds.records);
  CHECK(again.judges == ds.judges);
  CHECK(areas_csv(again.network) == areas_csv(ds.network));
  CHECK(edges_csv(again.network) == edges_csv(ds.network));
  CHECK(read_file(tmp.path / "copy" / "comparisons.csv") == comparisons_csv(ds.records));

  const auto groups = group_by_covariate(ds.judges, "gender");
  CHECK(groups.labels == std::vector<std::string>{"f", "m"});
  CHECK(groups.grouping.group("j2") == 1);
  CHECK_THROWS_AS(groups.grouping.group("nobody"), ValidationError);
}

TEST_CASE("dataset errors name the file and row") {
  TempDir tmp;
  write_small_dataset(tmp.path, "judge_id,area_i,area_j,outcome,timestamp\nj1,a,b,I_WINS,\nj1,a,zz,I_WINS,\n");
  CHECK_THROWS_WITH_AS(load_dataset(tmp.path), doctest::Contains("comparisons.csv row 3"), ValidationError);
  write(tmp.path / "comparisons.csv", "judge_id,area_i,area_j,outcome,timestamp\nj1,a,b,WON,\n");
  CHECK_THROWS_WITH_AS(load_dataset(tmp.path), doctest::Contains("row 2"), ValidationError);
  write(tmp.path / "comparisons.csv", "judge_id,area_i,area_j,outcome,timestamp\nj9,a,b,I_WINS,\n");
  write(tmp.path / "judges.csv", "judge_id,gender,occupation,familiarity\nj1,f,x,a|b\n");
  CHECK_THROWS_WITH_AS(load_dataset(tmp.path), doctest::Contains("j9"), ValidationError);
  fs::remove(tmp.path / "judges.csv");
  CHECK(load_dataset(tmp.path).judges.empty());
  fs::remove(tmp.path / "edges.csv");
  CHECK_THROWS_WITH_AS(load_dataset(tmp.path), doctest::Contains("edges.csv"), ValidationError);
}

TEST_CASE("SHA-256 known answers") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("result bundles publish atomically with a manifest") {
  TempDir tmp;
  ResultBundle empty;
  CHECK(empty.empty());
  const auto m0 = empty.publish(tmp.path / "out");
  CHECK(m0.at("files").empty());
  CHECK(fs::exists(tmp.path / "out" / "manifest.json"));

  ResultBundle b;
  b.add("a.csv", "x\n1\n");
  b.add("sub/b.txt", "hello");
  b.set_seeds({{"seed", 4}});
  b.set_config({{"k", 1}});
  const auto m = b.publish(tmp.path / "out");
  CHECK(m.at("files").size() == 2);
  CHECK(m.at("files")[0].at("sha256") == sha256_hex("x\n1\n"));
  CHECK(m.at("files")[1].at("bytes") == 5);
  CHECK(m.at("format_version") == kFormatVersion);
  CHECK(read_file(tmp.path / "out" / "sub" / "b.txt") == "hello");
  CHECK(nlohmann::json::parse(read_file(tmp.path / "out" / "manifest.json")) == m);
  // No staging directories are left behind.
  int entries = 0;
  for (const auto& e : fs::directory_iterator(tmp.path)) entries += e.is_directory();
  CHECK(entries == 1);
}

TEST_CASE("chain files round trip") {
  TempDir tmp;
  const auto net = grid_network(1, 3);
  PosteriorSamples s;
  s.config.iterations = 12;
  s.config.burn_in = 10;
  s.config.delta_beta = 0.2;
  s.iterations = {11, 12};
  s.lambda.resize(2, 3);
  s.lambda << 0.1, -0.2, 0.1, 1.0 / 3, -2.0 / 3, 1.0 / 3;
  s.beta = {Eigen::MatrixXd::Constant(2, 3, 0.5), Eigen::MatrixXd::Constant(2, 3, -0.5)};
  s.variance_iterations = {11, 12};
  s.alpha_sq_lambda = {1.5, 2.5};
  s.alpha_sq_beta = {{0.1, 0.2}, {0.3, 0.4}};
  s.lambda_acceptance = 0.25;
  s.beta_acceptance = {0.5};
  ResultBundle b;
  for (auto& [name, content] : chain_files(s, net, {"f", "m"}).files) b.add(name, content);
  b.publish(tmp.path / "chain");
  const auto back = load_chain(tmp.path / "chain");
  CHECK(back.iterations == s.iterations);
  CHECK(back.lambda == s.lambda);
  REQUIRE(back.beta.size() == 2);
  CHECK(back.beta[1] == s.beta[1]);
  CHECK(back.alpha_sq_beta == s.alpha_sq_beta);
  CHECK(back.variance_iterations == s.variance_iterations);
  CHECK(back.lambda_acceptance == 0.25);
  CHECK(back.config.delta_beta == 0.2);
  CHECK(back.config.burn_in == 10);
}

TEST_CASE("config JSON round trip and strictness") {
  MCMCConfig c;
  c.iterations = 1234;
  c.burn_in = 234;
  c.delta = 0.05;
  c.dof_adjust = true;
  c.start = StartPoint::kZero;
  const auto back = mcmc_config_from_json(mcmc_config_json(c));
  CHECK(mcmc_config_json(back) == mcmc_config_json(c));
  CHECK_FALSE(back.delta_beta.has_value());

  StudyConfig s;
  s.scenario = Scenario::kNetwork2D;
  s.sizes = {100, 200};
  s.grid_rows = 4;
  const auto sback = study_config_from_json(study_config_json(s));
  CHECK(study_config_json(sback) == study_config_json(s));
  CHECK_THROWS(study_config_from_json({{"scenario", "network_2d"}, {"bogus", 1}}));
}

TEST_CASE("summary CSV columns") {
  const auto net = grid_network(1, 2);
  const std::vector<ParameterSummary> rows{{0.5, 0.4, 0.1, -0.1, 1.0}, {-0.5, -0.4, 0.1, -1.0, 0.1}};
  const auto t = parse_csv(summary_csv(net, rows), "summary.csv");
  CHECK(t.header == std::vector<std::string>{"area_id", "mean", "median", "variance", "q025", "q975"});
  CHECK(parse_double(t.rows[1][1]) == -0.5);
}
