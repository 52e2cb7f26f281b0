#include "bsbt/covariance.hpp"

#include <algorithm>
#include <cmath>

#include "bsbt/errors.hpp"

namespace bsbt {

namespace {

constexpr double kZeroSumTolerance = 1e-6;

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

void require_square(const Eigen::MatrixXd& m, const char* what) {
  if (m.rows() != m.cols()) throw ValidationError(std::string(what) + " must be square");
}

void require_symmetric(const Eigen::MatrixXd& m, const char* what) {
  require_square(m, what);
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw ValidationError(std::string(what) + " must be symmetric");
}

void fill_derived(CovarianceMatrix& cov) {
  cov.unit_sigma = cov.sigma / cov.spec.alpha_sq;
  cov.constrained_sigma = constrain(cov.sigma);
  cov.unit_constrained_sigma = constrain(cov.unit_sigma);
}

}  // namespace

std::string to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::kNetworkSquaredExponential:
      return "network-squared-exponential";
    case KernelKind::kMatrixExponential:
      return "matrix-exponential";
  }
  return "unknown";
}

KernelKind parse_kernel_kind(const std::string& text) {
  if (text == "network-squared-exponential" || text == "sq-exp" || text == "squared-exponential")
    return KernelKind::kNetworkSquaredExponential;
  if (text == "matrix-exponential" || text == "matrix-exp" || text == "mexp")
    return KernelKind::kMatrixExponential;
  throw ValidationError("unknown covariance kind '" + text + "'");
}

void CovarianceSpec::validate() const {
  if (!(alpha_sq > 0.0) || !std::isfinite(alpha_sq))
    throw ValidationError("alpha_sq must be positive");
  if (kind == KernelKind::kNetworkSquaredExponential &&
      (!(length_scale > 0.0) || !std::isfinite(length_scale)))
    throw ValidationError("length_scale must be positive");
}

Eigen::MatrixXd constrain(const Eigen::MatrixXd& sigma) {
  require_square(sigma, "covariance");
  const Eigen::Index n = sigma.rows();
  if (n < 2) throw ValidationError("sum-to-zero constraint is degenerate for fewer than 2 areas");
  const Eigen::VectorXd sigma_one = sigma.rowwise().sum();
  const double total = sigma_one.sum();
  if (!(total > 1e-12 * std::max(1.0, sigma.trace())))
    throw ValidationError("sum-to-zero constraint is degenerate (1'Sigma1 <= 0)");
  return symmetrize(sigma - sigma_one * sigma_one.transpose() / total);
}

std::pair<Eigen::MatrixXd, PsdRepairReport> psd_repair(const Eigen::MatrixXd& m) {
  require_symmetric(m, "matrix");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(symmetrize(m));
  if (eig.info() != Eigen::Success) throw RuntimeFailure("eigendecomposition failed in PSD repair");
  PsdRepairReport report;
  Eigen::VectorXd values = eig.eigenvalues();
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (values(i) < 0.0) {
      report.clipped_eigenvalues.push_back(values(i));
      values(i) = 0.0;
    }
  }
  if (!report.repaired()) return {m, report};
  Eigen::MatrixXd out =
      symmetrize(eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose());
  report.frobenius_change = (out - m).norm();
  return {out, report};
}

CovarianceMatrix sq_exp_network_cov(const DistanceMatrix& d, double alpha_sq,
                                    double length_scale) {
  CovarianceMatrix cov;
  cov.spec = {KernelKind::kNetworkSquaredExponential, alpha_sq, length_scale};
  cov.spec.validate();
  if (!d.fully_reachable())
    throw ValidationError("squared-exponential network covariance needs a connected network");
  const double l2 = length_scale * length_scale;
  Eigen::MatrixXd sigma = (-(d.d.array().square()) / l2).exp().matrix() * alpha_sq;
  sigma = symmetrize(sigma);

  // Shortest-path distances are not guaranteed to give a PSD kernel.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma, Eigen::EigenvaluesOnly);
  const double min_eig = eig.eigenvalues().minCoeff();
  if (min_eig < -1e-12 * std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff())) {
    auto [fixed, report] = psd_repair(sigma);
    sigma = std::move(fixed);
    cov.repair = std::move(report);
  }
  cov.sigma = std::move(sigma);
  fill_derived(cov);
  return cov;
}

CovarianceMatrix matrix_exp_cov(const Eigen::MatrixXd& adjacency, double alpha_sq) {
  require_symmetric(adjacency, "adjacency matrix");
  for (Eigen::Index i = 0; i < adjacency.rows(); ++i) {
    if (adjacency(i, i) != 0.0) throw ValidationError("adjacency matrix must have zero diagonal");
    for (Eigen::Index j = 0; j < adjacency.cols(); ++j) {
      if (adjacency(i, j) != 0.0 && adjacency(i, j) != 1.0)
        throw ValidationError("adjacency matrix must be 0/1");
    }
  }
  CovarianceMatrix cov;
  cov.spec = {KernelKind::kMatrixExponential, alpha_sq, 1.0};
  cov.spec.validate();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(adjacency);
  if (eig.info() != Eigen::Success) throw RuntimeFailure("eigendecomposition of adjacency failed");
  const Eigen::MatrixXd& q = eig.eigenvectors();
  const Eigen::MatrixXd expm =
      symmetrize(q * eig.eigenvalues().array().exp().matrix().asDiagonal() * q.transpose());

  const Eigen::VectorXd inv_sqrt_diag = expm.diagonal().array().rsqrt();
  Eigen::MatrixXd sigma = alpha_sq * (inv_sqrt_diag.asDiagonal() * expm * inv_sqrt_diag.asDiagonal());
  sigma = symmetrize(sigma);
  sigma.diagonal().setConstant(alpha_sq);
  cov.sigma = std::move(sigma);
  fill_derived(cov);
  return cov;
}

CovarianceMatrix make_covariance(const AreaNetwork& net, const CovarianceSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case KernelKind::kNetworkSquaredExponential:
      return sq_exp_network_cov(shortest_paths(net), spec.alpha_sq, spec.length_scale);
    case KernelKind::kMatrixExponential:
      return matrix_exp_cov(adjacency_matrix(net), spec.alpha_sq);
  }
  throw ValidationError("unsupported covariance kind");
}

ConstrainedSampler::ConstrainedSampler(const Eigen::MatrixXd& sigma) {
  require_symmetric(sigma, "covariance");
  const Eigen::Index n = sigma.rows();
  if (n < 2) throw ValidationError("constrained sampling needs at least 2 areas");
  sigma_one_ = sigma.rowwise().sum();
  one_sigma_one_ = sigma_one_.sum();
  if (!(one_sigma_one_ > 1e-12 * std::max(1.0, sigma.trace())))
    throw ValidationError("sum-to-zero constraint is degenerate (1'Sigma1 <= 0)");

  const double mean_diag = sigma.diagonal().mean();
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  auto ok = [&]() {
    if (llt.info() != Eigen::Success) return false;
    Eigen::MatrixXd l = llt.matrixL();
    return l.allFinite();
  };
  if (!ok()) {
    // Jitter ladder: 1e-10 .. 1e-4 times the mean diagonal.
    bool factored = false;
    for (double rel = 1e-10; rel <= 1e-4 * (1.0 + 1e-9); rel *= 10.0) {
      jitter_ = rel * mean_diag;
      Eigen::MatrixXd jittered = sigma;
      jittered.diagonal().array() += jitter_;
      llt.compute(jittered);
      if (ok()) {
        factored = true;
        break;
      }
    }
    if (!factored) throw RuntimeFailure("Cholesky factorisation failed after jitter ladder");
  }
  factor_ = llt.matrixL();
}

Eigen::VectorXd ConstrainedSampler::project(const Eigen::VectorXd& z) const {
  return z - sigma_one_ * (z.sum() / one_sigma_one_);
}

Eigen::VectorXd ConstrainedSampler::draw(Rng& rng) const {
  Eigen::VectorXd z = standard_normal_vector(factor_.rows(), rng);
  return project(factor_.triangularView<Eigen::Lower>() * z);
}

Eigen::VectorXd sample_constrained_mvn(const CovarianceMatrix& cov, std::uint64_t seed) {
  Rng rng(seed);
  return ConstrainedSampler(cov.sigma).draw(rng);
}

ConstrainedQuadForm::ConstrainedQuadForm(const Eigen::MatrixXd& unit_constrained_sigma) {
  require_symmetric(unit_constrained_sigma, "constrained covariance");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(unit_constrained_sigma);
  if (eig.info() != Eigen::Success) throw RuntimeFailure("eigendecomposition failed");
  const Eigen::VectorXd& values = eig.eigenvalues();
  const double cutoff =
      1e-10 * std::max(1e-300, values.cwiseAbs().maxCoeff()) * static_cast<double>(values.size());
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(values.size());
  for (Eigen::Index i = 0; i < values.size(); ++i)
    if (values(i) > cutoff) inv(i) = 1.0 / values(i);
  pinv_ = symmetrize(eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose());
}

double ConstrainedQuadForm::operator()(const Eigen::VectorXd& v) const {
  if (v.size() != pinv_.rows()) throw ValidationError("vector length does not match covariance");
  const double scale = std::max(1.0, v.cwiseAbs().maxCoeff());
  if (std::abs(v.sum()) > kZeroSumTolerance * scale)
    throw ValidationError("vector violates the sum-to-zero constraint");
  return std::max(0.0, 0.5 * v.dot(pinv_ * v));
}

double constrained_quad_form(const Eigen::VectorXd& v,
                             const Eigen::MatrixXd& unit_constrained_sigma) {
  return ConstrainedQuadForm(unit_constrained_sigma)(v);
}

}  // namespace bsbt
