#include <doctest.h>

#include <cmath>

#include "bsbt/errors.hpp"
#include "bsbt/likelihood.hpp"
#include "bsbt/random.hpp"

using namespace bsbt;

namespace {

struct Instance {
  AreaNetwork net;
  std::vector<ComparisonRecord> records;
  JudgeGrouping grouping;
  GroupDesign design;
  Eigen::VectorXd lambda;
  Eigen::MatrixXd beta;
};

// N = 6, G = 2, P = 2: a two-level categorical covariate.
Instance random_instance(std::uint64_t seed) {
  Rng rng(seed);
  Instance in;
  in.net = grid_network(2, 3);
  in.grouping.num_groups = 2;
  in.grouping.group_of = {{"u", 0}, {"v", 1}};
  in.grouping.fallback_group.reset();
  in.design = GroupDesign::categorical({"u", "v"});
  in.lambda = standard_normal_vector(6, rng);
  in.lambda.array() -= in.lambda.mean();
  in.beta = Eigen::MatrixXd::Zero(2, 6);
  in.beta.row(0) = standard_normal_vector(6, rng).transpose() * 0.5;
  in.beta.row(0).array() -= in.beta.row(0).mean();
  in.beta.row(1) = -in.beta.row(0);
  std::uniform_int_distribution<std::size_t> area(0, 5);
  for (int r = 0; r < 80; ++r) {
    std::size_t a = area(rng), b = area(rng);
    while (a == b) b = area(rng);
    in.records.push_back({r % 2 ? "u" : "v", in.net.area(a).id, in.net.area(b).id,
                          uniform01(rng) < 0.5 ? Outcome::kIWins : Outcome::kJWins, {}});
  }
  return in;
}

// Sum over individual records of log P(observed outcome).
double brute_loglik(const Instance& in, const Eigen::VectorXd& lambda, const Eigen::MatrixXd& beta) {
  double total = 0.0;
  for (const auto& r : in.records) {
    const std::size_t g = in.grouping.group(r.judge_id);
    Eigen::VectorXd f = lambda;
    for (Eigen::Index p = 0; p < beta.rows(); ++p) f += in.design.x(static_cast<Eigen::Index>(g), p) * beta.row(p).transpose();
    const double li = f(static_cast<Eigen::Index>(in.net.require_index(r.area_i)));
    const double lj = f(static_cast<Eigen::Index>(in.net.require_index(r.area_j)));
    const double p = std::exp(li) / (std::exp(li) + std::exp(lj));
    total += std::log(r.outcome == Outcome::kIWins ? p : 1.0 - p);
  }
  return total;
}

}  // namespace

TEST_CASE("win probability") {
  CHECK(win_probability(0.0, 0.0) == 0.5);
  CHECK(win_probability(std::log(3.0), 0.0) == doctest::Approx(0.75));
  CHECK(win_probability(1.2, -0.3) + win_probability(-0.3, 1.2) == doctest::Approx(1.0));
  CHECK(win_probability(800.0, 0.0) == 1.0);
  CHECK(win_probability(-800.0, 0.0) == 0.0);
  CHECK(std::isfinite(log_sigmoid(-800.0)));
  CHECK(log_sigmoid(-800.0) == doctest::Approx(-800.0));
  CHECK(log_sigmoid(0.0) == doctest::Approx(std::log(0.5)));
}

TEST_CASE("tallied log-likelihood equals the record-by-record sum") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto in = random_instance(seed);
    const auto t = tally(in.net, in.records, in.grouping);
    const double fast = log_likelihood(t, in.lambda, in.design, in.beta);
    CHECK(fast == doctest::Approx(brute_loglik(in, in.lambda, in.beta)).epsilon(1e-12));
    CHECK(TallyLikelihood(t, in.design)(in.lambda, in.beta) == doctest::Approx(fast).epsilon(1e-12));
  }
}

TEST_CASE("single-group overload ignores covariates") {
  const auto net = build_network(std::vector<std::string>{"a", "b"}, {{"a", "b"}});
  const auto t = tally(net, {{"j", "a", "b", Outcome::kIWins, {}}, {"j", "a", "b", Outcome::kIWins, {}},
                             {"j", "a", "b", Outcome::kIWins, {}}, {"j", "b", "a", Outcome::kIWins, {}}});
  Eigen::VectorXd lambda(2);
  lambda << 0.3, -0.3;
  const double p = win_probability(0.3, -0.3);
  CHECK(log_likelihood(t, lambda) == doctest::Approx(3 * std::log(p) + std::log(1 - p)));
}

TEST_CASE("log-likelihood refuses untreated ties") {
  const auto net = build_network(std::vector<std::string>{"a", "b"}, {{"a", "b"}});
  const auto t = tally(net, {{"j", "a", "b", Outcome::kTie, {}}});
  CHECK_THROWS_AS(log_likelihood(t, Eigen::VectorXd::Zero(2)), ValidationError);
}

TEST_CASE("analytic gradient matches central finite differences") {
  const double h = 1e-5;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto in = random_instance(100 + seed);
    const auto t = tally(in.net, in.records, in.grouping);
    const auto g = log_likelihood_gradient(t, in.lambda, in.design, in.beta);
    for (Eigen::Index i = 0; i < 6; ++i) {
      Eigen::VectorXd up = in.lambda, dn = in.lambda;
      up(i) += h;
      dn(i) -= h;
      const double fd = (log_likelihood(t, up, in.design, in.beta) - log_likelihood(t, dn, in.design, in.beta)) / (2 * h);
      CHECK(g.lambda(i) == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
    }
    for (Eigen::Index p = 0; p < 2; ++p)
      for (Eigen::Index i = 0; i < 6; ++i) {
        Eigen::MatrixXd up = in.beta, dn = in.beta;
        up(p, i) += h;
        dn(p, i) -= h;
        const double fd = (log_likelihood(t, in.lambda, in.design, up) - log_likelihood(t, in.lambda, in.design, dn)) / (2 * h);
        CHECK(g.beta(p, i) == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
      }
  }
}

TEST_CASE("group field adds the design-weighted effects") {
  const auto d = GroupDesign::categorical({"m", "f"});
  Eigen::VectorXd lambda(3);
  lambda << 1, 0, -1;
  Eigen::MatrixXd beta(2, 3);
  beta << 0.2, -0.1, -0.1, -0.2, 0.1, 0.1;
  CHECK(group_field(lambda, d, beta, 0).isApprox(lambda + beta.row(0).transpose()));
  CHECK(group_field(lambda, d, beta, 1).isApprox(lambda + beta.row(1).transpose()));
  CHECK_NOTHROW(validate_effects(d, beta, 3));
  beta(1, 0) = 0.0;
  CHECK_THROWS_AS(validate_effects(d, beta, 3), ValidationError);
}

TEST_CASE("design validation") {
  CHECK_THROWS_AS(GroupDesign::categorical({"only"}), ValidationError);
  GroupDesign d = GroupDesign::categorical({"a", "b", "c"});
  d.constraint_blocks.push_back({0, 1});
  CHECK_THROWS_AS(d.validate(), ValidationError);
  CHECK_NOTHROW(GroupDesign::single().validate());
}
