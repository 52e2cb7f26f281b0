#include <doctest.h>

#include <cmath>
#include <numbers>

#include "bsbt/errors.hpp"
#include "bsbt/simulation.hpp"

using namespace bsbt;

TEST_CASE("city deprivation function") {
  const double pi = std::numbers::pi;
  CHECK(city_deprivation(0.0) == doctest::Approx(0.0).scale(1.0));
  CHECK(city_deprivation(pi / 8) == doctest::Approx(1.0));
  CHECK(city_deprivation(-5.0) == doctest::Approx(std::sin(-5.0) - 5.0 + pi));
  CHECK(city_deprivation(5.0) == doctest::Approx(std::sin(5.0) - 5.0 + pi));
  for (double edge : {-pi, pi}) {
    const double e = 1e-9;
    CHECK(std::abs(city_deprivation(edge - e) - city_deprivation(edge + e)) < 1e-6);
  }
}

TEST_CASE("1-d city: sorted Laplace locations on a path") {
  const auto city = gen_city_1d(4000, 7);
  CHECK(std::is_sorted(city.locations.begin(), city.locations.end()));
  double sum = 0, sq = 0;
  for (double x : city.locations) {
    sum += x;
    sq += x * x;
  }
  const double n = 4000;
  const double var = sq / n - (sum / n) * (sum / n);
  CHECK(var == doctest::Approx(8.0).epsilon(0.1));  // sd of the sample variance is about 4%
  CHECK(city.network.edges().size() == 3999);
  CHECK(city.truth(5) == city_deprivation(city.locations[5]));
  CHECK(std::abs(city.centered_truth().sum()) < 1e-9);
  const auto again = gen_city_1d(50, 7);
  CHECK(again.locations == gen_city_1d(50, 7).locations);
}

TEST_CASE("simulated comparisons follow Bradley-Terry probabilities") {
  const auto net = build_network(std::vector<std::string>{"a", "b"}, {{"a", "b"}});
  Eigen::VectorXd truth(2);
  truth << std::log(3.0) / 2, -std::log(3.0) / 2;
  const auto data = simulate_comparisons(net, truth, 20000, 3);
  CHECK(data.records.size() == 20000);
  double a_wins = 0;
  for (const auto& r : data.records) {
    const bool i_won = r.outcome == Outcome::kIWins;
    a_wins += (r.area_i == "a") == i_won;
  }
  CHECK(std::abs(a_wins / 20000 - 0.75) < 5 * std::sqrt(0.1875 / 20000));
  CHECK(data.records[0].judge_id == "judge_0");
  CHECK(data.records[180].judge_id == "judge_1");
  CHECK(data.judge_hours() == doctest::Approx(20000.0 / 180));
  CHECK(simulate_comparisons(net, truth, 50, 3).records == simulate_comparisons(net, truth, 50, 3).records);
}

TEST_CASE("inverted judges flip outcomes") {
  const auto net = build_network(std::vector<std::string>{"a", "b"}, {{"a", "b"}});
  Eigen::VectorXd truth(2);
  truth << 5.0, -5.0;
  const auto data = simulate_judged_comparisons(net, truth, GroupDesign::single(), Eigen::MatrixXd(0, 2),
                                                {{"good", 0, false}, {"bad", 0, true}}, 400, 1);
  int good_right = 0, bad_right = 0;
  for (const auto& r : data.records) {
    const bool a_won = (r.area_i == "a") == (r.outcome == Outcome::kIWins);
    (r.judge_id == "good" ? good_right : bad_right) += a_won;
  }
  CHECK(good_right > 190);
  CHECK(bad_right < 10);
}

TEST_CASE("tie injection rate") {
  const auto net = grid_network(3, 3);
  auto data = simulate_comparisons(net, Eigen::VectorXd::Zero(9), 10000, 4);
  inject_ties(data.records, 0.15, 9);
  double ties = 0;
  for (const auto& r : data.records) ties += r.outcome == Outcome::kTie;
  CHECK(std::abs(ties / 10000 - 0.15) < 5 * std::sqrt(0.15 * 0.85 / 10000));
}

TEST_CASE("study runs are reproducible") {
  StudyConfig c;
  c.sizes = {180, 360};
  c.n_seeds = 2;
  c.n_areas_1d = 12;
  c.mcmc.iterations = 400;
  c.mcmc.burn_in = 100;
  c.mcmc.delta = 0.1;
  const auto a = run_study(c);
  const auto b = run_study(c);
  REQUIRE(a.rows.size() == 8);
  for (std::size_t r = 0; r < a.rows.size(); ++r) {
    CHECK(a.rows[r].size == b.rows[r].size);
    CHECK(a.rows[r].model == b.rows[r].model);
    CHECK(a.rows[r].mae == b.rows[r].mae);
  }
  CHECK(a.means.size() == 4);
  CHECK(study_world(c, 1).truth == study_world(c, 1).truth);
  CHECK(std::abs(study_world(c, 0).truth.sum()) < 1e-9);
  CHECK(parse_scenario(to_string(Scenario::kNetwork2D)) == Scenario::kNetwork2D);
  CHECK(parse_model(to_string(ModelKind::kBsbt)) == ModelKind::kBsbt);
  c.sizes.clear();
  CHECK_THROWS_AS(c.validate(), ValidationError);
}
