#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bsbt/comparisons.hpp"
#include "bsbt/mcmc.hpp"

namespace bsbt {

// Mean absolute error; nullopt when any estimate is undefined (NaN).
std::optional<double> mae(const Eigen::VectorXd& truth, const Eigen::VectorXd& estimate);

// 1 - 6 sum d_i^2 / (N (N^2 - 1)) on average ranks.
double spearman(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Average ranks (1-based), ties share the mean of their positions.
Eigen::VectorXd average_ranks(const Eigen::VectorXd& v);

struct JudgeScore {
  std::string judge_id;
  std::size_t n_comparisons = 0;
  double x2 = 0.0;
};

// X^2_j = (1/N_j) sum (O - E)^2 / E with E = pi(lambda_i, lambda_j) for the
// record's area_i, clamped to [1e-6, 1 - 1e-6]. `observed` holds the
// resolved outcome of each record (see resolve_outcomes); nullopt entries are
// skipped. Judges are returned in order of first appearance.
std::vector<JudgeScore> judge_heuristic(const AreaNetwork& net,
                                        const std::vector<ComparisonRecord>& records,
                                        const std::vector<std::optional<double>>& observed,
                                        const Eigen::VectorXd& posterior_mean_lambda);

struct ParameterSummary {
  double mean = 0.0;
  double median = 0.0;
  double variance = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
};

ParameterSummary summarize_draws(const std::vector<double>& draws);

struct PosteriorSummary {
  std::vector<ParameterSummary> lambda;               // per area
  std::vector<std::vector<ParameterSummary>> beta;    // per covariate, per area
  ParameterSummary alpha_sq_lambda;
  std::vector<ParameterSummary> alpha_sq_beta;

  Eigen::VectorXd lambda_mean() const;
  Eigen::VectorXd lambda_median() const;
};

// Summaries over stored draws after discarding the first `burn_in` stored
// draws and keeping every `thinning`-th of the rest.
PosteriorSummary summarize(const PosteriorSamples& samples, std::size_t burn_in = 0,
                           std::size_t thinning = 1);

// Linear interpolation between order statistics (R type 7).
double quantile(std::vector<double> values, double p);

struct TraceRequest {
  enum class Kind { kLambda, kBeta, kAlphaSqLambda, kAlphaSqBeta } kind;
  std::size_t covariate = 0;  // for beta / alpha_sq_beta
  std::size_t area = 0;       // for lambda / beta

  std::string label() const;
  // "lambda_3", "beta_0_12", "alpha_sq_lambda", "alpha_sq_0"
  static TraceRequest parse(const std::string& text);
};

struct TraceRow {
  std::int64_t iteration;
  std::string parameter;
  double value;
};

// Long-format rows; the first row marks the end of burn-in
// (parameter "burn_in_end", value = burn-in length).
std::vector<TraceRow> export_traces(const PosteriorSamples& samples,
                                    const std::vector<TraceRequest>& requests);

}  // namespace bsbt
