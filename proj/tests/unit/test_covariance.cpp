#include <doctest.h>

#include <cmath>

#include "bsbt/covariance.hpp"
#include "bsbt/errors.hpp"

using namespace bsbt;

namespace {

// Truncated Taylor series; fine for the small adjacency norms used here.
Eigen::MatrixXd expm_series(const Eigen::MatrixXd& a) {
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(a.rows(), a.cols());
  Eigen::MatrixXd sum = term;
  for (int k = 1; k < 60; ++k) {
    term = term * a / static_cast<double>(k);
    sum += term;
  }
  return sum;
}

// Orthonormal basis of the sum-to-zero subspace.
Eigen::MatrixXd zero_sum_basis(Eigen::Index n) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n);
  m.array() -= 1.0 / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  return es.eigenvectors().rightCols(n - 1);
}

}  // namespace

TEST_CASE("matrix exponential covariance matches a power-series oracle") {
  const auto net = build_network({"a", "b", "c", "d", "e"}, {{"a", "b"}, {"b", "c"}, {"c", "d"}, {"b", "e"}});
  const Eigen::MatrixXd adj = adjacency_matrix(net);
  const double alpha_sq = 2.5;
  const auto cov = matrix_exp_cov(adj, alpha_sq);
  const Eigen::MatrixXd e = expm_series(adj);
  const Eigen::VectorXd inv_sqrt = e.diagonal().array().rsqrt();
  const Eigen::MatrixXd oracle = alpha_sq * inv_sqrt.asDiagonal() * e * inv_sqrt.asDiagonal();
  CHECK((cov.sigma - oracle).cwiseAbs().maxCoeff() < 1e-10);
  for (Eigen::Index i = 0; i < 5; ++i) CHECK(cov.sigma(i, i) == doctest::Approx(alpha_sq).epsilon(1e-14));
  CHECK(cov.unit_sigma.isApprox(cov.sigma / alpha_sq));
}

TEST_CASE("two-node graph gives correlation tanh(1)") {
  Eigen::MatrixXd adj(2, 2);
  adj << 0, 1, 1, 0;
  const auto cov = matrix_exp_cov(adj, 1.0);
  CHECK(std::abs(cov.sigma(0, 1) - std::tanh(1.0)) < 1e-12);
  CHECK(std::abs(cov.sigma(0, 0) - 1.0) < 1e-12);
}

TEST_CASE("matrix exponential input validation") {
  Eigen::MatrixXd bad(2, 2);
  bad << 0, 1, 0, 0;
  CHECK_THROWS_AS(matrix_exp_cov(bad, 1.0), ValidationError);
  bad << 1, 0, 0, 0;
  CHECK_THROWS_AS(matrix_exp_cov(bad, 1.0), ValidationError);
  Eigen::MatrixXd ok = Eigen::MatrixXd::Zero(2, 2);
  CHECK_THROWS_AS(matrix_exp_cov(ok, 0.0), ValidationError);
}

TEST_CASE("disconnected graph gives block-diagonal matrix exponential covariance") {
  const auto net = build_network({"a", "b", "c"}, {{"a", "b"}});
  const auto cov = make_covariance(net, {KernelKind::kMatrixExponential, 1.0, 1.0});
  CHECK(cov.sigma(0, 2) == 0.0);
  CHECK(cov.sigma(2, 2) == 1.0);
}

TEST_CASE("squared-exponential kernel on shortest-path distances") {
  const auto net = build_network({"a", "b", "c", "d"}, {{"a", "b"}, {"b", "c"}, {"c", "d"}});
  const auto cov = make_covariance(net, {KernelKind::kNetworkSquaredExponential, 2.0, 1.5});
  for (Eigen::Index i = 0; i < 4; ++i)
    for (Eigen::Index j = 0; j < 4; ++j) {
      const double d = std::abs(static_cast<double>(i - j));
      CHECK(cov.sigma(i, j) == doctest::Approx(2.0 * std::exp(-d * d / (1.5 * 1.5))).epsilon(1e-9));
    }
  // Points on a line: the kernel is PSD, so nothing is clipped.
  CHECK_FALSE(cov.repair.repaired());
}

TEST_CASE("squared-exponential kernel needs a connected network") {
  const auto net = build_network({"a", "b", "c"}, {{"a", "b"}});
  CHECK_THROWS_AS(make_covariance(net, {KernelKind::kNetworkSquaredExponential, 1.0, 1.0}), ValidationError);
}

TEST_CASE("psd repair clips negative eigenvalues only") {
  Eigen::MatrixXd m(3, 3);
  m << 1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0;  // indefinite
  const auto [fixed, report] = psd_repair(m);
  CHECK(report.repaired());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fixed);
  CHECK(es.eigenvalues().minCoeff() > -1e-12);
  CHECK(report.frobenius_change > 0.0);
  CHECK(report.frobenius_change == doctest::Approx((fixed - m).norm()));

  const Eigen::MatrixXd spd = Eigen::MatrixXd::Identity(3, 3) * 2.0;
  const auto [same, none] = psd_repair(spd);
  CHECK_FALSE(none.repaired());
  CHECK(same.isApprox(spd));
}

TEST_CASE("constraining a scaled identity gives the centring projector") {
  for (Eigen::Index n = 2; n <= 6; ++n) {
    const double a = 1.7;
    const Eigen::MatrixXd c = constrain(a * Eigen::MatrixXd::Identity(n, n));
    Eigen::MatrixXd expect = Eigen::MatrixXd::Identity(n, n);
    expect.array() -= 1.0 / static_cast<double>(n);
    CHECK((c - a * expect).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK_THROWS_AS(constrain(Eigen::MatrixXd::Identity(1, 1)), ValidationError);
}

TEST_CASE("constrained covariance annihilates the ones vector") {
  const auto cov = make_covariance(grid_network(3, 3), {KernelKind::kMatrixExponential, 3.0, 1.0});
  CHECK((cov.constrained_sigma * Eigen::VectorXd::Ones(9)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(cov.constrained_sigma.isApprox(cov.constrained_sigma.transpose()));
}

TEST_CASE("constrained sampler draws sum to zero and are reproducible") {
  const auto cov = make_covariance(grid_network(2, 3), {KernelKind::kMatrixExponential, 2.0, 1.0});
  const Eigen::VectorXd a = sample_constrained_mvn(cov, 42);
  const Eigen::VectorXd b = sample_constrained_mvn(cov, 42);
  CHECK(a == b);
  CHECK(std::abs(a.sum()) < 1e-10);
  CHECK(sample_constrained_mvn(cov, 43) != a);
}

TEST_CASE("constrained sampler covariance matches the conditioned covariance") {
  const auto cov = make_covariance(build_network({"a", "b", "c", "d"}, {{"a", "b"}, {"b", "c"}, {"c", "d"}}),
                                   {KernelKind::kMatrixExponential, 1.0, 1.0});
  const ConstrainedSampler sampler(cov.sigma);
  Rng rng(5);
  const int draws = 40000;
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(4, 4);
  for (int k = 0; k < draws; ++k) {
    const Eigen::VectorXd x = sampler.draw(rng);
    acc += x * x.transpose();
  }
  acc /= draws;
  // Var of a product of normals is at most 2 sigma^2; 5 standard errors.
  CHECK((acc - cov.constrained_sigma).cwiseAbs().maxCoeff() < 5.0 * std::sqrt(2.0 / draws));
}

TEST_CASE("sampler copes with a singular covariance through jitter") {
  Eigen::MatrixXd s = Eigen::MatrixXd::Ones(3, 3);
  s(2, 2) = 2.0;  // rank 2
  const ConstrainedSampler sampler(s);
  Rng rng(1);
  const Eigen::VectorXd x = sampler.draw(rng);
  CHECK(x.allFinite());
  CHECK(std::abs(x.sum()) < 1e-10);
}

TEST_CASE("projection is the conditioning map and fixes zero-sum vectors along Sigma 1") {
  const auto cov = make_covariance(grid_network(2, 2), {KernelKind::kMatrixExponential, 1.0, 1.0});
  const ConstrainedSampler sampler(cov.sigma);
  Eigen::VectorXd z(4);
  z << 1.0, -2.0, 0.5, 3.0;
  const Eigen::VectorXd p = sampler.project(z);
  CHECK(std::abs(p.sum()) < 1e-12);
  const Eigen::VectorXd s1 = cov.sigma * Eigen::VectorXd::Ones(4);
  CHECK((z - s1 * (z.sum() / s1.sum()) - p).norm() < 1e-12);
  CHECK((sampler.project(p) - p).norm() < 1e-12);
}

TEST_CASE("quadratic form uses the inverse on the zero-sum subspace") {
  const auto cov = make_covariance(grid_network(2, 3), {KernelKind::kMatrixExponential, 1.0, 1.0});
  const Eigen::MatrixXd q = zero_sum_basis(6);
  const Eigen::MatrixXd reduced = q.transpose() * cov.unit_constrained_sigma * q;
  Rng rng(9);
  for (int k = 0; k < 5; ++k) {
    Eigen::VectorXd v = standard_normal_vector(6, rng);
    v.array() -= v.mean();
    const Eigen::VectorXd c = q.transpose() * v;
    const double oracle = 0.5 * c.dot(reduced.ldlt().solve(c));
    CHECK(constrained_quad_form(v, cov.unit_constrained_sigma) == doctest::Approx(oracle).epsilon(1e-8));
  }
  Eigen::VectorXd off = Eigen::VectorXd::Ones(6);
  CHECK_THROWS_AS(constrained_quad_form(off, cov.unit_constrained_sigma), ValidationError);
}

TEST_CASE("kernel names round-trip") {
  for (auto k : {KernelKind::kMatrixExponential, KernelKind::kNetworkSquaredExponential})
    CHECK(parse_kernel_kind(to_string(k)) == k);
  CHECK_THROWS_AS(parse_kernel_kind("rbf"), ValidationError);
  CHECK_THROWS_AS((CovarianceSpec{KernelKind::kMatrixExponential, -1.0, 1.0}.validate()), ValidationError);
}
