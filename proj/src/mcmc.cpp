#include "bsbt/mcmc.hpp"

#include <cmath>
#include <set>

#include "bsbt/errors.hpp"

namespace bsbt {

namespace {

// A group of covariates proposed together: the free rows get underrelaxed
// proposals, the dependent row (last level of a categorical block) is set to
// minus their sum.
struct ProposalBlock {
  std::vector<Eigen::Index> free;
  Eigen::Index dependent = -1;
};

std::vector<ProposalBlock> proposal_blocks(const GroupDesign& design) {
  std::vector<ProposalBlock> blocks;
  std::set<std::size_t> in_block;
  for (const auto& block : design.constraint_blocks) {
    ProposalBlock pb;
    for (std::size_t k = 0; k + 1 < block.size(); ++k) pb.free.push_back(static_cast<Eigen::Index>(block[k]));
    pb.dependent = static_cast<Eigen::Index>(block.back());
    blocks.push_back(std::move(pb));
    in_block.insert(block.begin(), block.end());
  }
  for (std::size_t p = 0; p < design.covariates(); ++p)
    if (!in_block.count(p)) blocks.push_back({{static_cast<Eigen::Index>(p)}, -1});
  return blocks;
}

// Field of group g as lambda + sum_k z(g, k) theta_k over the free rows.
Eigen::MatrixXd free_row_design(const GroupDesign& design, const std::vector<ProposalBlock>& blocks,
                                std::vector<Eigen::Index>& free_rows) {
  free_rows.clear();
  std::vector<Eigen::Index> dependent_of;
  for (const auto& b : blocks)
    for (auto p : b.free) {
      free_rows.push_back(p);
      dependent_of.push_back(b.dependent);
    }
  const auto g_count = static_cast<Eigen::Index>(design.groups());
  Eigen::MatrixXd z(g_count, static_cast<Eigen::Index>(free_rows.size()));
  for (Eigen::Index g = 0; g < g_count; ++g)
    for (std::size_t k = 0; k < free_rows.size(); ++k) {
      double v = design.x(g, free_rows[k]);
      if (dependent_of[k] >= 0) v -= design.x(g, dependent_of[k]);
      z(g, static_cast<Eigen::Index>(k)) = v;
    }
  return z;
}

}  // namespace

std::string to_string(StartPoint s) { return s == StartPoint::kZero ? "zero" : "mode"; }

StartPoint parse_start_point(const std::string& text) {
  if (text == "zero") return StartPoint::kZero;
  if (text == "mode") return StartPoint::kPosteriorMode;
  throw ValidationError("start point must be 'zero' or 'mode' (got '" + text + "')");
}

ChainState posterior_mode(const ComparisonTally& tally, const GroupDesign& design,
                          const CovarianceMatrix& covariance, const MCMCConfig& config) {
  design.validate();
  const Eigen::Index n = covariance.size();
  if (static_cast<std::size_t>(n) != tally.num_areas)
    throw ValidationError("covariance and tally sizes differ");
  const ConstrainedQuadForm quad_form(covariance.unit_constrained_sigma);
  const Eigen::MatrixXd& precision = quad_form.pseudo_inverse();
  const auto blocks = proposal_blocks(design);
  std::vector<Eigen::Index> free_rows;
  const Eigen::MatrixXd z = free_row_design(design, blocks, free_rows);
  const auto k_count = static_cast<Eigen::Index>(free_rows.size());
  const Eigen::Index dim = (1 + k_count) * n;
  const auto g_count = static_cast<Eigen::Index>(design.groups());

  // Coefficient rows of group g: c_g = (1, z_g1, ..., z_gK).
  Eigen::MatrixXd coef(g_count, 1 + k_count);
  coef.col(0).setOnes();
  if (k_count > 0) coef.rightCols(k_count) = z;

  auto fields_of = [&](const Eigen::VectorXd& u) {
    Eigen::MatrixXd f(n, g_count);
    for (Eigen::Index g = 0; g < g_count; ++g) {
      f.col(g) = u.head(n);
      for (Eigen::Index k = 0; k < k_count; ++k) f.col(g) += z(g, k) * u.segment((1 + k) * n, n);
    }
    return f;
  };
  Eigen::VectorXd prior_scale = Eigen::VectorXd::Ones(1 + k_count);  // alpha^2 per block
  auto objective = [&](const Eigen::VectorXd& u) {
    const Eigen::MatrixXd f = fields_of(u);
    double total = 0.0;
    for (const auto& c : tally.cells) {
      const auto g = static_cast<Eigen::Index>(c.group);
      const double d = f(static_cast<Eigen::Index>(c.i), g) - f(static_cast<Eigen::Index>(c.j), g);
      total += c.n * log_sigmoid(d) - (c.n - c.y) * d;
    }
    for (Eigen::Index b = 0; b <= k_count; ++b) {
      const Eigen::VectorXd v = u.segment(b * n, n);
      total -= 0.5 * v.dot(precision * v) / prior_scale(b);
    }
    return total;
  };

  // Gradient and negative Hessian of the log density at u. The 1 1'/n term
  // pins the sum direction, which neither the likelihood nor the prior
  // constrains, and leaves the restricted determinant unchanged.
  auto assemble = [&](const Eigen::VectorXd& u, Eigen::VectorXd& grad, Eigen::MatrixXd& hess) {
    const Eigen::MatrixXd f = fields_of(u);
    Eigen::MatrixXd resid = Eigen::MatrixXd::Zero(n, g_count);
    std::vector<Eigen::MatrixXd> laplacian(static_cast<std::size_t>(g_count), Eigen::MatrixXd::Zero(n, n));
    for (const auto& c : tally.cells) {
      const auto g = static_cast<Eigen::Index>(c.group);
      const auto i = static_cast<Eigen::Index>(c.i);
      const auto j = static_cast<Eigen::Index>(c.j);
      const double p = win_probability(f(i, g), f(j, g));
      const double r = c.y - c.n * p;
      resid(i, g) += r;
      resid(j, g) -= r;
      const double w = c.n * p * (1.0 - p);
      auto& lap = laplacian[static_cast<std::size_t>(g)];
      lap(i, i) += w;
      lap(j, j) += w;
      lap(i, j) -= w;
      lap(j, i) -= w;
    }
    grad.resize(dim);
    hess = Eigen::MatrixXd::Zero(dim, dim);
    for (Eigen::Index a = 0; a <= k_count; ++a) {
      Eigen::VectorXd ga = Eigen::VectorXd::Zero(n);
      for (Eigen::Index g = 0; g < g_count; ++g) ga += coef(g, a) * resid.col(g);
      grad.segment(a * n, n) = ga - precision * u.segment(a * n, n) / prior_scale(a);
      for (Eigen::Index b = 0; b <= k_count; ++b) {
        auto block = hess.block(a * n, b * n, n, n);
        for (Eigen::Index g = 0; g < g_count; ++g)
          if (coef(g, a) * coef(g, b) != 0.0) block += coef(g, a) * coef(g, b) * laplacian[static_cast<std::size_t>(g)];
      }
      hess.block(a * n, a * n, n, n) += precision / prior_scale(a);
      hess.block(a * n, a * n, n, n).array() += 1.0 / static_cast<double>(n);
    }
  };

  // Conditional mode of the fields given prior_scale, by damped Newton from u.
  auto conditional_mode = [&](Eigen::VectorXd u) {
    Eigen::VectorXd grad;
    Eigen::MatrixXd hess;
    for (int it = 0; it < 100; ++it) {
      assemble(u, grad, hess);
      if (grad.cwiseAbs().maxCoeff() < 1e-8) break;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
      Eigen::VectorXd step = ldlt.solve(grad);
      if (ldlt.info() != Eigen::Success || !step.allFinite()) break;
      for (Eigen::Index b = 0; b <= k_count; ++b) step.segment(b * n, n).array() -= step.segment(b * n, n).mean();
      const double current = objective(u);
      double scale = 1.0;
      Eigen::VectorXd next = u + step;
      while (objective(next) < current && scale > 1e-8) {
        scale *= 0.5;
        next = u + scale * step;
      }
      if ((next - u).cwiseAbs().maxCoeff() < 1e-12) break;
      u = next;
    }
    return u;
  };

  // The joint mode of fields and variances collapses towards zero, so the
  // variances are set at the mode of their Laplace-approximated marginal
  // posterior (in log alpha^2) and the fields at their conditional mode.
  const double rank = static_cast<double>(n - 1);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(dim);
  auto log_marginal = [&](Eigen::VectorXd& warm) {
    warm = conditional_mode(warm);
    Eigen::VectorXd grad;
    Eigen::MatrixXd hess;
    assemble(warm, grad, hess);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
    double logdet = ldlt.vectorD().array().abs().log().sum();
    double score = objective(warm) - 0.5 * logdet;
    for (Eigen::Index b = 0; b <= k_count; ++b) {
      const double s = std::log(prior_scale(b));
      score -= 0.5 * rank * s + config.chi * s + config.omega / prior_scale(b);
    }
    return score;
  };

  constexpr double kLo = -9.0;
  constexpr double kHi = 7.0;
  const double golden = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int pass = 0; pass < 3; ++pass) {
    const Eigen::VectorXd before = prior_scale;
    for (Eigen::Index b = 0; b <= k_count; ++b) {
      auto eval = [&](double s) {
        prior_scale(b) = std::exp(s);
        Eigen::VectorXd warm = u;
        return log_marginal(warm);
      };
      double lo = kLo, hi = kHi;
      double x1 = hi - golden * (hi - lo), x2 = lo + golden * (hi - lo);
      double f1 = eval(x1), f2 = eval(x2);
      while (hi - lo > 1e-3) {
        if (f1 < f2) {
          lo = x1;
          x1 = x2;
          f1 = f2;
          x2 = lo + golden * (hi - lo);
          f2 = eval(x2);
        } else {
          hi = x2;
          x2 = x1;
          f2 = f1;
          x1 = hi - golden * (hi - lo);
          f1 = eval(x1);
        }
      }
      prior_scale(b) = std::exp(0.5 * (lo + hi));
      u = conditional_mode(u);
    }
    if (k_count == 0 || ((prior_scale - before).array().abs() / before.array()).maxCoeff() < 1e-2) break;
  }

  ChainState state;
  state.alpha_sq_beta.assign(design.covariates(), 1.0);
  state.lambda = u.head(n);
  state.alpha_sq_lambda = prior_scale(0);
  state.beta = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(design.covariates()), n);
  for (Eigen::Index k = 0; k < k_count; ++k) {
    state.beta.row(free_rows[static_cast<std::size_t>(k)]) = u.segment((1 + k) * n, n).transpose();
    state.alpha_sq_beta[static_cast<std::size_t>(free_rows[static_cast<std::size_t>(k)])] = prior_scale(1 + k);
  }
  for (const auto& b : blocks) {
    if (b.dependent < 0) continue;
    state.beta.row(b.dependent).setZero();
    for (auto p : b.free) state.beta.row(b.dependent) -= state.beta.row(p);
    state.alpha_sq_beta[static_cast<std::size_t>(b.dependent)] =
        (config.omega + quad_form(state.beta.row(b.dependent).transpose())) / (config.chi + rank / 2.0 + 1.0);
  }
  return state;
}

void MCMCConfig::validate() const {
  if (iterations <= 0) throw ValidationError("iterations must be positive");
  if (burn_in < 0 || burn_in >= iterations)
    throw ValidationError("burn_in must be in [0, iterations)");
  if (thinning <= 0) throw ValidationError("thinning must be positive");
  if (!(delta > 0.0 && delta <= 1.0)) throw ValidationError("delta must lie in (0, 1]");
  if (delta_beta && !(*delta_beta > 0.0 && *delta_beta <= 1.0)) throw ValidationError("delta_beta must lie in (0, 1]");
  if (!(chi > 0.0) || !(omega > 0.0)) throw ValidationError("chi and omega must be positive");
}

double gibbs_alpha_update(const Eigen::VectorXd& v, const ConstrainedQuadForm& quad_form, double chi,
                          double omega, Rng& rng, bool dof_adjust) {
  const double n = static_cast<double>(v.size());
  const double shape = chi + (dof_adjust ? (n - 1.0) : n) / 2.0;
  const double rate = omega + quad_form(v);
  if (!std::isfinite(rate)) throw RuntimeFailure("non-finite quadratic form in variance update");
  std::gamma_distribution<double> gamma(shape, 1.0 / rate);
  return 1.0 / gamma(rng);
}

double gibbs_alpha_update(const Eigen::VectorXd& v, const Eigen::MatrixXd& unit_constrained_sigma,
                          double chi, double omega, Rng& rng, bool dof_adjust) {
  return gibbs_alpha_update(v, ConstrainedQuadForm(unit_constrained_sigma), chi, omega, rng,
                            dof_adjust);
}

Eigen::VectorXd underrelaxed_propose(const Eigen::VectorXd& current, double delta, double alpha_sq,
                                     const ConstrainedSampler& unit_sampler, Rng& rng) {
  if (current.size() != unit_sampler.size())
    throw ValidationError("proposal dimension does not match covariance");
  Eigen::VectorXd out =
      std::sqrt(1.0 - delta * delta) * current + (delta * std::sqrt(alpha_sq)) * unit_sampler.draw(rng);
  out.array() -= out.mean();  // rounding only; both terms are already zero-sum
  return out;
}

bool mh_accept(double loglik_proposed, double loglik_current, Rng& rng) {
  const double diff = loglik_proposed - loglik_current;
  if (diff >= 0.0) return true;
  if (!std::isfinite(diff)) return false;
  return std::log(uniform01(rng)) < diff;
}

PosteriorSamples run_chain(const ComparisonTally& tally, const GroupDesign& design,
                           const CovarianceMatrix& covariance, const MCMCConfig& config,
                           const ProgressCallback& progress) {
  config.validate();
  design.validate();
  const Eigen::Index n = covariance.size();
  if (static_cast<std::size_t>(n) != tally.num_areas)
    throw ValidationError("covariance is " + std::to_string(n) + "x" + std::to_string(n) +
                          " but the tally has " + std::to_string(tally.num_areas) + " areas");

  const ConstrainedSampler sampler(covariance.unit_sigma);
  const ConstrainedQuadForm quad_form(covariance.unit_constrained_sigma);
  const TallyLikelihood likelihood(tally, design);
  const auto p_count = static_cast<Eigen::Index>(design.covariates());
  const auto blocks = proposal_blocks(design);

  Rng rng(config.seed);
  ChainState start;
  if (config.start == StartPoint::kPosteriorMode) {
    start = posterior_mode(tally, design, covariance, config);
  } else {
    start.lambda = Eigen::VectorXd::Zero(n);
    start.beta = Eigen::MatrixXd::Zero(p_count, n);
    start.alpha_sq_beta.assign(static_cast<std::size_t>(p_count), 1.0);
  }
  Eigen::VectorXd lambda = std::move(start.lambda);
  Eigen::MatrixXd beta = std::move(start.beta);
  double alpha_lambda = start.alpha_sq_lambda;
  std::vector<double> alpha_beta = std::move(start.alpha_sq_beta);

  const std::int64_t kept = config.iterations - config.burn_in;
  const std::int64_t stored = kept / config.thinning;
  const std::int64_t variance_stored = config.store_every_variance_draw ? kept : stored;

  PosteriorSamples out;
  out.config = config;
  out.iterations.reserve(static_cast<std::size_t>(stored));
  out.lambda.resize(stored, n);
  out.beta.assign(static_cast<std::size_t>(p_count), Eigen::MatrixXd(stored, n));
  out.variance_iterations.reserve(static_cast<std::size_t>(variance_stored));
  out.alpha_sq_lambda.reserve(static_cast<std::size_t>(variance_stored));
  out.alpha_sq_beta.assign(static_cast<std::size_t>(p_count), {});
  for (auto& chain : out.alpha_sq_beta) chain.reserve(static_cast<std::size_t>(variance_stored));

  std::int64_t lambda_accepted = 0;
  std::vector<std::int64_t> block_accepted(blocks.size(), 0);
  double current = likelihood(lambda, beta);
  Eigen::Index row = 0;
  const double delta_beta = config.delta_beta.value_or(config.delta);

  for (std::int64_t it = 1; it <= config.iterations; ++it) {
    {
      Eigen::VectorXd proposal = underrelaxed_propose(lambda, config.delta, alpha_lambda, sampler, rng);
      const double ll = likelihood(proposal, beta);
      if (mh_accept(ll, current, rng)) {
        lambda = std::move(proposal);
        current = ll;
        ++lambda_accepted;
      }
    }
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const auto& block = blocks[b];
      Eigen::MatrixXd proposal = beta;
      for (auto p : block.free) {
        proposal.row(p) = underrelaxed_propose(beta.row(p).transpose(), delta_beta,
                                               alpha_beta[static_cast<std::size_t>(p)], sampler, rng)
                              .transpose();
      }
      if (block.dependent >= 0) {
        proposal.row(block.dependent).setZero();
        for (auto p : block.free) proposal.row(block.dependent) -= proposal.row(p);
      }
      const double ll = likelihood(lambda, proposal);
      if (mh_accept(ll, current, rng)) {
        beta = std::move(proposal);
        current = ll;
        ++block_accepted[b];
      }
    }
    alpha_lambda = gibbs_alpha_update(lambda, quad_form, config.chi, config.omega, rng, config.dof_adjust);
    for (Eigen::Index p = 0; p < p_count; ++p) {
      alpha_beta[static_cast<std::size_t>(p)] = gibbs_alpha_update(
          beta.row(p).transpose(), quad_form, config.chi, config.omega, rng, config.dof_adjust);
    }

    if (it > config.burn_in) {
      const std::int64_t since = it - config.burn_in;
      const bool thinned = since % config.thinning == 0;
      if (thinned && row < stored) {
        out.iterations.push_back(it);
        out.lambda.row(row) = lambda.transpose();
        for (Eigen::Index p = 0; p < p_count; ++p)
          out.beta[static_cast<std::size_t>(p)].row(row) = beta.row(p);
        ++row;
      }
      if (config.store_every_variance_draw || thinned) {
        if (static_cast<std::int64_t>(out.variance_iterations.size()) < variance_stored) {
          out.variance_iterations.push_back(it);
          out.alpha_sq_lambda.push_back(alpha_lambda);
          for (Eigen::Index p = 0; p < p_count; ++p)
            out.alpha_sq_beta[static_cast<std::size_t>(p)].push_back(alpha_beta[static_cast<std::size_t>(p)]);
        }
      }
    }
    if (progress && it % 1000 == 0) progress(it);
  }

  const double total = static_cast<double>(config.iterations);
  out.lambda_acceptance = static_cast<double>(lambda_accepted) / total;
  for (auto a : block_accepted) out.beta_acceptance.push_back(static_cast<double>(a) / total);
  return out;
}

}  // namespace bsbt
