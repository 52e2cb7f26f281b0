#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bsbt/comparisons.hpp"

namespace bsbt {

// Judge-group design: row g of `x` holds the covariates of group g.
// Covariates listed together in a constraint block are the indicator columns
// of one categorical covariate; their effects must sum to zero per area.
struct GroupDesign {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(1, 0);
  std::vector<std::vector<std::size_t>> constraint_blocks;
  std::vector<std::string> group_labels;

  std::size_t groups() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t covariates() const { return static_cast<std::size_t>(x.cols()); }

  // G = 1, P = 0: the plain model.
  static GroupDesign single();
  // One group per level with indicator covariates and one sum-to-zero block.
  static GroupDesign categorical(std::vector<std::string> levels);

  void validate() const;
};

// Checks the per-area sum-to-zero constraint of every block and across areas.
void validate_effects(const GroupDesign& design, const Eigen::MatrixXd& beta, std::size_t num_areas,
                      double tolerance = 1e-6);

double win_probability(double lambda_i, double lambda_j);
// log(1 / (1 + exp(-d))) without overflow.
double log_sigmoid(double d);

// lambda^g = lambda + sum_p x[g][p] * beta.row(p)
Eigen::VectorXd group_field(const Eigen::VectorXd& lambda, const GroupDesign& design,
                            const Eigen::MatrixXd& beta, std::size_t g);

// Coefficient-free log-likelihood sum y log(pi) + (n - y) log(1 - pi) over
// cells. `beta` is P x N and may be empty when P = 0. Ties must be treated.
double log_likelihood(const ComparisonTally& tally, const Eigen::VectorXd& lambda,
                      const GroupDesign& design, const Eigen::MatrixXd& beta);
double log_likelihood(const ComparisonTally& tally, const Eigen::VectorXd& lambda);

struct LikelihoodGradient {
  Eigen::VectorXd lambda;
  Eigen::MatrixXd beta;  // P x N
};

LikelihoodGradient log_likelihood_gradient(const ComparisonTally& tally,
                                           const Eigen::VectorXd& lambda,
                                           const GroupDesign& design,
                                           const Eigen::MatrixXd& beta);

// Flattened cell arrays for repeated evaluation inside the sampler.
class TallyLikelihood {
 public:
  TallyLikelihood(const ComparisonTally& tally, const GroupDesign& design);
  double operator()(const Eigen::VectorXd& lambda, const Eigen::MatrixXd& beta) const;

 private:
  const GroupDesign* design_;
  std::size_t num_areas_;
  std::vector<int> group_, i_, j_;
  std::vector<double> n_, losses_;  // losses = n - y
  mutable Eigen::MatrixXd fields_;  // N x G scratch
};

}  // namespace bsbt
