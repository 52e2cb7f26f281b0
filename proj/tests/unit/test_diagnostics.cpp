#include <doctest.h>

#include <cmath>

#include "bsbt/diagnostics.hpp"
#include "bsbt/errors.hpp"
#include "bsbt/random.hpp"

using namespace bsbt;

namespace {

double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::VectorXd x = a.array() - a.mean();
  const Eigen::VectorXd y = b.array() - b.mean();
  return x.dot(y) / std::sqrt(x.squaredNorm() * y.squaredNorm());
}

}  // namespace

TEST_CASE("Spearman equals the Pearson correlation of ranks without ties") {
  Rng rng(2);
  for (int rep = 0; rep < 20; ++rep) {
    const auto a = standard_normal_vector(25, rng);
    const auto b = (a + standard_normal_vector(25, rng)).eval();
    CHECK(spearman(a, b) == doctest::Approx(pearson(average_ranks(a), average_ranks(b))));
  }
  Eigen::VectorXd x(4), y(4);
  x << 1, 2, 3, 4;
  y << 40, 30, 20, 10;
  CHECK(spearman(x, x) == doctest::Approx(1.0));
  CHECK(spearman(x, y) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(spearman(x, Eigen::VectorXd::Ones(4)), ValidationError);
}

TEST_CASE("average ranks share tied positions") {
  Eigen::VectorXd v(5);
  v << 3.0, 1.0, 3.0, 2.0, 3.0;
  Eigen::VectorXd expected(5);
  expected << 4.0, 1.0, 4.0, 2.0, 4.0;
  CHECK(average_ranks(v) == expected);
}

TEST_CASE("MAE") {
  Eigen::VectorXd a(3), b(3);
  a << 1, 2, 3;
  b << 1.5, 2, 2;
  CHECK(*mae(a, b) == doctest::Approx(0.5));
  b(1) = std::nan("");
  CHECK_FALSE(mae(a, b).has_value());
}

TEST_CASE("quantiles interpolate order statistics") {
  const std::vector<double> v{4, 1, 3, 2};
  CHECK(quantile(v, 0.0) == 1.0);
  CHECK(quantile(v, 1.0) == 4.0);
  CHECK(quantile(v, 0.25) == doctest::Approx(1.75));
  CHECK(quantile(v, 0.5) == doctest::Approx(2.5));
  const auto s = summarize_draws({1, 2, 3, 4, 10});
  CHECK(s.mean == doctest::Approx(4.0));
  CHECK(s.median == 3.0);
  CHECK(s.variance == doctest::Approx(12.5));
  CHECK(s.q025 == doctest::Approx(1.1));
  CHECK(s.q975 == doctest::Approx(9.4));
}

TEST_CASE("judge heuristic by hand") {
  const auto net = build_network({"a", "b", "c"}, {{"a", "b"}, {"b", "c"}});
  Eigen::VectorXd lambda(3);
  lambda << std::log(3.0), 0.0, 0.0;  // P(a beats b) = 0.75
  const std::vector<ComparisonRecord> records{{"j1", "a", "b", Outcome::kIWins, {}},
                                              {"j1", "b", "a", Outcome::kIWins, {}},
                                              {"j2", "b", "c", Outcome::kTie, {}},
                                              {"j2", "c", "b", Outcome::kJWins, {}}};
  const std::vector<std::optional<double>> observed{1.0, 1.0, std::nullopt, 0.0};
  const auto scores = judge_heuristic(net, records, observed, lambda);
  REQUIRE(scores.size() == 2);
  CHECK(scores[0].judge_id == "j1");
  CHECK(scores[0].n_comparisons == 2);
  // (1 - .75)^2 / .75 and (1 - .25)^2 / .25, averaged
  CHECK(scores[0].x2 == doctest::Approx((0.0625 / 0.75 + 0.5625 / 0.25) / 2));
  CHECK(scores[1].n_comparisons == 1);
  CHECK(scores[1].x2 == doctest::Approx(0.25 / 0.5));
}

TEST_CASE("summaries and traces from stored draws") {
  PosteriorSamples s;
  s.config.burn_in = 10;
  s.iterations = {11, 12, 13, 14};
  s.lambda.resize(4, 2);
  s.lambda << 1, -1, 2, -2, 3, -3, 4, -4;
  s.variance_iterations = {11, 12, 13, 14};
  s.alpha_sq_lambda = {1, 2, 3, 4};
  const auto sum = summarize(s, 1, 2);  // rows 1 and 3
  CHECK(sum.lambda[0].mean == doctest::Approx(3.0));
  CHECK(sum.lambda_mean()(1) == doctest::Approx(-3.0));
  CHECK(sum.alpha_sq_lambda.mean == doctest::Approx(3.0));  // iterations 12..14
  CHECK_THROWS_AS(summarize(s, 4), ValidationError);

  const auto rows = export_traces(s, {TraceRequest::parse("lambda_1"), TraceRequest::parse("alpha_sq_lambda")});
  REQUIRE(rows.size() == 9);
  CHECK(rows[0].parameter == "burn_in_end");
  CHECK(rows[0].value == 10.0);
  CHECK(rows[1].parameter == "lambda_1");
  CHECK(rows[1].value == -1.0);
  CHECK(rows[8].parameter == "alpha_sq_lambda");
  CHECK_THROWS_AS(export_traces(s, {TraceRequest::parse("lambda_7")}), ValidationError);
}

TEST_CASE("trace names round trip") {
  for (const std::string name : {"lambda_3", "beta_0_12", "alpha_sq_lambda", "alpha_sq_2"})
    CHECK(TraceRequest::parse(name).label() == name);
  CHECK_THROWS_AS(TraceRequest::parse("beta_1"), ValidationError);
  CHECK_THROWS_AS(TraceRequest::parse("lambda_x"), ValidationError);
  CHECK_THROWS_AS(TraceRequest::parse("gamma"), ValidationError);
}
