#include "bsbt/likelihood.hpp"

#include <cmath>
#include <set>

#include "bsbt/errors.hpp"

namespace bsbt {

namespace {

void check_inputs(const ComparisonTally& tally, const Eigen::VectorXd& lambda,
                  const GroupDesign& design, const Eigen::MatrixXd& beta) {
  if (tally.num_groups != design.groups())
    throw ValidationError("tally has " + std::to_string(tally.num_groups) +
                          " groups but design has " + std::to_string(design.groups()));
  if (static_cast<std::size_t>(lambda.size()) != tally.num_areas)
    throw ValidationError("lambda length does not match the number of areas");
  if (design.covariates() > 0 &&
      (static_cast<std::size_t>(beta.rows()) != design.covariates() || beta.cols() != lambda.size()))
    throw ValidationError("beta must be P x N");
}

// N x G matrix of group-perceived fields.
Eigen::MatrixXd all_group_fields(const Eigen::VectorXd& lambda, const GroupDesign& design,
                                 const Eigen::MatrixXd& beta) {
  Eigen::MatrixXd fields = lambda.replicate(1, static_cast<Eigen::Index>(design.groups()));
  if (design.covariates() > 0) fields.noalias() += beta.transpose() * design.x.transpose();
  return fields;
}

}  // namespace

GroupDesign GroupDesign::single() {
  GroupDesign d;
  d.group_labels = {"all"};
  return d;
}

GroupDesign GroupDesign::categorical(std::vector<std::string> levels) {
  if (levels.size() < 2) throw ValidationError("a categorical covariate needs at least 2 levels");
  GroupDesign d;
  const auto q = static_cast<Eigen::Index>(levels.size());
  d.x = Eigen::MatrixXd::Identity(q, q);
  std::vector<std::size_t> block(levels.size());
  for (std::size_t p = 0; p < levels.size(); ++p) block[p] = p;
  d.constraint_blocks.push_back(std::move(block));
  d.group_labels = std::move(levels);
  return d;
}

void GroupDesign::validate() const {
  if (x.rows() < 1) throw ValidationError("design needs at least one group");
  if (!x.allFinite()) throw ValidationError("design covariates must be finite");
  std::set<std::size_t> used;
  for (const auto& block : constraint_blocks) {
    if (block.size() < 2) throw ValidationError("constraint block needs at least 2 covariates");
    for (auto p : block) {
      if (p >= covariates()) throw ValidationError("constraint block index out of range");
      if (!used.insert(p).second)
        throw ValidationError("covariate appears in more than one constraint block");
    }
  }
  if (!group_labels.empty() && group_labels.size() != groups())
    throw ValidationError("group label count does not match the design");
}

void validate_effects(const GroupDesign& design, const Eigen::MatrixXd& beta,
                      std::size_t num_areas, double tolerance) {
  if (design.covariates() == 0) return;
  if (static_cast<std::size_t>(beta.rows()) != design.covariates() ||
      static_cast<std::size_t>(beta.cols()) != num_areas)
    throw ValidationError("beta must be P x N");
  for (Eigen::Index p = 0; p < beta.rows(); ++p)
    if (std::abs(beta.row(p).sum()) > tolerance)
      throw ValidationError("beta row " + std::to_string(p) + " violates the sum-to-zero constraint");
  for (const auto& block : design.constraint_blocks) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_areas));
    for (auto p : block) sum += beta.row(static_cast<Eigen::Index>(p)).transpose();
    if (sum.cwiseAbs().maxCoeff() > tolerance)
      throw ValidationError("categorical effects do not sum to zero across levels");
  }
}

double log_sigmoid(double d) {
  return d < 0.0 ? d - std::log1p(std::exp(d)) : -std::log1p(std::exp(-d));
}

double win_probability(double lambda_i, double lambda_j) {
  const double d = lambda_i - lambda_j;
  if (d >= 0.0) return 1.0 / (1.0 + std::exp(-d));
  const double e = std::exp(d);
  return e / (1.0 + e);
}

Eigen::VectorXd group_field(const Eigen::VectorXd& lambda, const GroupDesign& design,
                            const Eigen::MatrixXd& beta, std::size_t g) {
  if (g >= design.groups()) throw ValidationError("group index out of range");
  Eigen::VectorXd out = lambda;
  for (std::size_t p = 0; p < design.covariates(); ++p) {
    const double xp = design.x(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(p));
    if (xp != 0.0) out += xp * beta.row(static_cast<Eigen::Index>(p)).transpose();
  }
  return out;
}

double log_likelihood(const ComparisonTally& tally, const Eigen::VectorXd& lambda,
                      const GroupDesign& design, const Eigen::MatrixXd& beta) {
  check_inputs(tally, lambda, design, beta);
  const Eigen::MatrixXd fields = all_group_fields(lambda, design, beta);
  double total = 0.0;
  for (const auto& c : tally.cells) {
    if (c.t != 0.0) throw ValidationError("tally still contains ties; apply a tie treatment first");
    const auto g = static_cast<Eigen::Index>(c.group);
    const double d = fields(static_cast<Eigen::Index>(c.i), g) - fields(static_cast<Eigen::Index>(c.j), g);
    // y log s(d) + (n - y) log s(-d) = n log s(d) - (n - y) d
    total += c.n * log_sigmoid(d) - (c.n - c.y) * d;
  }
  return total;
}

double log_likelihood(const ComparisonTally& tally, const Eigen::VectorXd& lambda) {
  return log_likelihood(tally, lambda, GroupDesign::single(), Eigen::MatrixXd());
}

LikelihoodGradient log_likelihood_gradient(const ComparisonTally& tally,
                                           const Eigen::VectorXd& lambda,
                                           const GroupDesign& design,
                                           const Eigen::MatrixXd& beta) {
  check_inputs(tally, lambda, design, beta);
  const Eigen::MatrixXd fields = all_group_fields(lambda, design, beta);
  // Per-group gradient w.r.t. the perceived field, then chain rule.
  Eigen::MatrixXd dfield = Eigen::MatrixXd::Zero(fields.rows(), fields.cols());
  for (const auto& c : tally.cells) {
    const auto g = static_cast<Eigen::Index>(c.group);
    const auto i = static_cast<Eigen::Index>(c.i);
    const auto j = static_cast<Eigen::Index>(c.j);
    const double r = c.y - c.n * win_probability(fields(i, g), fields(j, g));
    dfield(i, g) += r;
    dfield(j, g) -= r;
  }
  LikelihoodGradient grad;
  grad.lambda = dfield.rowwise().sum();
  grad.beta = design.x.transpose() * dfield.transpose();
  return grad;
}

TallyLikelihood::TallyLikelihood(const ComparisonTally& tally, const GroupDesign& design)
    : design_(&design), num_areas_(tally.num_areas) {
  if (tally.num_groups != design.groups())
    throw ValidationError("tally groups do not match the design");
  const std::size_t m = tally.cells.size();
  group_.reserve(m);
  i_.reserve(m);
  j_.reserve(m);
  n_.reserve(m);
  losses_.reserve(m);
  for (const auto& c : tally.cells) {
    if (c.t != 0.0) throw ValidationError("tally still contains ties; apply a tie treatment first");
    group_.push_back(static_cast<int>(c.group));
    i_.push_back(static_cast<int>(c.i));
    j_.push_back(static_cast<int>(c.j));
    n_.push_back(c.n);
    losses_.push_back(c.n - c.y);
  }
}

double TallyLikelihood::operator()(const Eigen::VectorXd& lambda, const Eigen::MatrixXd& beta) const {
  if (design_->covariates() == 0) {
    double total = 0.0;
    for (std::size_t k = 0; k < n_.size(); ++k) {
      const double d = lambda(i_[k]) - lambda(j_[k]);
      total += n_[k] * log_sigmoid(d) - losses_[k] * d;
    }
    return total;
  }
  fields_ = lambda.replicate(1, static_cast<Eigen::Index>(design_->groups()));
  fields_.noalias() += beta.transpose() * design_->x.transpose();
  double total = 0.0;
  for (std::size_t k = 0; k < n_.size(); ++k) {
    const double d = fields_(i_[k], group_[k]) - fields_(j_[k], group_[k]);
    total += n_[k] * log_sigmoid(d) - losses_[k] * d;
  }
  return total;
}

}  // namespace bsbt
