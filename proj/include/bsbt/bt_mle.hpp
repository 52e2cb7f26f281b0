#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bsbt/comparisons.hpp"

namespace bsbt {

enum class Estimability {
  kEstimated,  // finite MLE
  kDivergent,  // won or lost every path out of its position; estimate is the
               // IRLS iterate at deviance convergence, not a true MLE
  kUndefined,  // never compared, or not connected to the main comparison component
};

std::string to_string(Estimability e);

struct QuasiVarianceFit {
  Eigen::VectorXd q;  // NaN for undefined areas
  double initial_objective = 0.0;
  double final_objective = 0.0;
  double worst_relative_error = 0.0;  // max |sqrt(q_i + q_j) - se_ij| / se_ij
  int iterations = 0;
};

struct BTFitResult {
  Eigen::VectorXd lambda_hat;  // mean zero over defined areas, NaN where undefined
  std::vector<Estimability> status;
  Eigen::MatrixXd covariance_hat;  // contrast covariance (information pseudo-inverse), NaN where undefined
  Eigen::VectorXd quasi_variances;  // NaN where undefined or when fewer than 3 areas are defined
  QuasiVarianceFit quasi_fit;
  std::string method;  // "newton", "mm" or "irls-stopped"
  int iterations = 0;
  double gradient_max_norm = 0.0;
  bool converged = false;

  bool defined(std::size_t i) const { return status.at(i) != Estimability::kUndefined; }
  std::size_t num_defined() const;
  // (lambda_i - lambda_j) +/- 1.96 sqrt(q_i + q_j)
  std::pair<double, double> contrast_interval(std::size_t i, std::size_t j) const;
};

// Maximum-likelihood Bradley-Terry fit on a single-group tie-treated tally.
BTFitResult fit_bt_mle(const ComparisonTally& tally);

// Fits q >= 0 minimising sum_{i<j} [log(q_i + q_j) - log V_ij]^2 over the
// defined areas of a fit, where V_ij is the contrast variance.
QuasiVarianceFit quasi_variances(const BTFitResult& result);
// Same fit from a matrix of contrast variances V (only off-diagonal entries are used).
QuasiVarianceFit fit_quasi_variances(const Eigen::MatrixXd& contrast_variance);
double quasi_variance_objective(const Eigen::VectorXd& q, const Eigen::MatrixXd& contrast_variance);

}  // namespace bsbt
