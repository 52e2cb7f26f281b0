#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bsbt/comparisons.hpp"
#include "bsbt/covariance.hpp"
#include "bsbt/likelihood.hpp"
#include "bsbt/random.hpp"

namespace bsbt {

enum class StartPoint {
  kZero,           // lambda = 0, beta = 0, every alpha^2 = 1
  kPosteriorMode,  // see posterior_mode
};

std::string to_string(StartPoint s);
StartPoint parse_start_point(const std::string& text);

struct MCMCConfig {
  std::int64_t iterations = 50'000;
  std::int64_t burn_in = 10'000;
  std::int64_t thinning = 1;
  double delta = 0.01;  // underrelaxation
  // Underrelaxation for the covariate blocks; defaults to delta.
  std::optional<double> delta_beta;
  double chi = 0.1;     // inverse-Gamma shape
  double omega = 0.1;   // inverse-Gamma rate
  std::uint64_t seed = 1;
  // Store alpha^2 draws at every post-burn-in iteration instead of only at
  // thinned iterations.
  bool store_every_variance_draw = false;
  // Use shape chi + (N-1)/2 (the rank of the constrained prior) instead of
  // chi + N/2 in the variance Gibbs step.
  bool dof_adjust = false;
  StartPoint start = StartPoint::kPosteriorMode;

  void validate() const;
};

struct PosteriorSamples {
  MCMCConfig config;
  std::vector<std::int64_t> iterations;  // 1-based iteration of each stored draw
  Eigen::MatrixXd lambda;                // stored x N
  std::vector<Eigen::MatrixXd> beta;     // one stored x N matrix per covariate
  std::vector<std::int64_t> variance_iterations;
  std::vector<double> alpha_sq_lambda;
  std::vector<std::vector<double>> alpha_sq_beta;  // per covariate
  double lambda_acceptance = 0.0;
  std::vector<double> beta_acceptance;  // per proposal block

  std::size_t stored() const { return iterations.size(); }
};

// One draw from inv-Gamma(chi + N/2, omega + 1/2 v' Sigma^+ v), where the
// quadratic form uses the constrained unit covariance.
double gibbs_alpha_update(const Eigen::VectorXd& v, const ConstrainedQuadForm& quad_form, double chi,
                          double omega, Rng& rng, bool dof_adjust = false);
double gibbs_alpha_update(const Eigen::VectorXd& v, const Eigen::MatrixXd& unit_constrained_sigma,
                          double chi, double omega, Rng& rng, bool dof_adjust = false);

// sqrt(1 - delta^2) current + delta nu with nu ~ constrained prior scaled by
// alpha_sq. `unit_sampler` must be built from the alpha^2 = 1 covariance.
Eigen::VectorXd underrelaxed_propose(const Eigen::VectorXd& current, double delta, double alpha_sq,
                                     const ConstrainedSampler& unit_sampler, Rng& rng);

// Accept with probability min(1, exp(proposed - current)).
bool mh_accept(double loglik_proposed, double loglik_current, Rng& rng);

struct ChainState {
  Eigen::VectorXd lambda;
  Eigen::MatrixXd beta;  // P x N
  double alpha_sq_lambda = 1.0;
  std::vector<double> alpha_sq_beta;
};

// Starting point for a chain. Each alpha^2 is set at the mode, in log alpha^2,
// of its Laplace-approximated marginal posterior (golden-section search per
// block, a few coordinate passes); lambda and the free beta rows are then the
// conditional mode given those variances, found by damped Newton.
ChainState posterior_mode(const ComparisonTally& tally, const GroupDesign& design,
                          const CovarianceMatrix& covariance, const MCMCConfig& config);

using ProgressCallback = std::function<void(std::int64_t iteration)>;

// Block Metropolis-Hastings for lambda and each covariate block, then Gibbs
// steps for alpha^2_lambda and each alpha^2_p, repeated `iterations` times.
// Starting point per config.start.
PosteriorSamples run_chain(const ComparisonTally& tally, const GroupDesign& design,
                           const CovarianceMatrix& covariance, const MCMCConfig& config,
                           const ProgressCallback& progress = {});

}  // namespace bsbt
