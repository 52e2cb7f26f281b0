#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bsbt/network.hpp"
#include "bsbt/random.hpp"

namespace bsbt {

enum class KernelKind { kNetworkSquaredExponential, kMatrixExponential };

std::string to_string(KernelKind kind);
KernelKind parse_kernel_kind(const std::string& text);

struct CovarianceSpec {
  KernelKind kind = KernelKind::kMatrixExponential;
  double alpha_sq = 1.0;
  double length_scale = 1.0;  // squared-exponential only

  void validate() const;
};

struct PsdRepairReport {
  std::vector<double> clipped_eigenvalues;  // the negative eigenvalues that were set to 0
  double frobenius_change = 0.0;
  bool repaired() const { return !clipped_eigenvalues.empty(); }
};

// Prior covariance over the area network, with the unconstrained matrix, its
// sum-to-zero conditioned version and the alpha^2 = 1 version used by the
// variance Gibbs step.
struct CovarianceMatrix {
  CovarianceSpec spec;
  Eigen::MatrixXd sigma;
  Eigen::MatrixXd constrained_sigma;
  Eigen::MatrixXd unit_sigma;              // sigma / alpha^2
  Eigen::MatrixXd unit_constrained_sigma;  // constrain(unit_sigma)
  PsdRepairReport repair;

  Eigen::Index size() const { return sigma.rows(); }
};

// Sigma_ij = alpha^2 exp(-d_ij^2 / l^2) on shortest-path distances, repaired
// to PSD by eigenvalue clipping when needed. Requires a connected network.
CovarianceMatrix sq_exp_network_cov(const DistanceMatrix& d, double alpha_sq, double length_scale);

// Sigma = alpha^2 D^{-1/2} e^A D^{-1/2}, D = diag(e^A). Works on disconnected
// graphs; the diagonal is exactly alpha^2.
CovarianceMatrix matrix_exp_cov(const Eigen::MatrixXd& adjacency, double alpha_sq);

CovarianceMatrix make_covariance(const AreaNetwork& net, const CovarianceSpec& spec);

// Sigma - Sigma 1 (1' Sigma 1)^{-1} 1' Sigma.
Eigen::MatrixXd constrain(const Eigen::MatrixXd& sigma);

std::pair<Eigen::MatrixXd, PsdRepairReport> psd_repair(const Eigen::MatrixXd& m);

// Draws from MVN(0, Sigma) conditioned on 1'x = 0: a Cholesky draw from the
// unconstrained Sigma followed by the conditioning projection
// z - Sigma 1 (1' Sigma 1)^{-1} 1' z. The factorisation is computed once.
class ConstrainedSampler {
 public:
  explicit ConstrainedSampler(const Eigen::MatrixXd& sigma);

  Eigen::VectorXd draw(Rng& rng) const;
  // Projects an arbitrary vector onto the constraint along Sigma 1.
  Eigen::VectorXd project(const Eigen::VectorXd& z) const;

  Eigen::Index size() const { return factor_.rows(); }
  double jitter() const { return jitter_; }

 private:
  Eigen::MatrixXd factor_;  // lower triangular
  Eigen::VectorXd sigma_one_;
  double one_sigma_one_ = 0.0;
  double jitter_ = 0.0;
};

Eigen::VectorXd sample_constrained_mvn(const CovarianceMatrix& cov, std::uint64_t seed);

// 1/2 v' Sigma^+ v for the constrained unit covariance, with the
// pseudo-inverse computed once.
class ConstrainedQuadForm {
 public:
  explicit ConstrainedQuadForm(const Eigen::MatrixXd& unit_constrained_sigma);
  double operator()(const Eigen::VectorXd& v) const;
  const Eigen::MatrixXd& pseudo_inverse() const { return pinv_; }

 private:
  Eigen::MatrixXd pinv_;
};

double constrained_quad_form(const Eigen::VectorXd& v, const Eigen::MatrixXd& unit_constrained_sigma);

}  // namespace bsbt
