#include "bsbt/bt_mle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "bsbt/errors.hpp"
#include "bsbt/likelihood.hpp"

namespace bsbt {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kGradientTolerance = 1e-10;

struct LocalCell {
  Eigen::Index i;
  Eigen::Index j;
  double n;
  double y;
};

// Cells restricted to one component, re-indexed locally.
struct Subproblem {
  std::vector<std::size_t> areas;  // local -> global
  std::vector<LocalCell> cells;

  Eigen::Index size() const { return static_cast<Eigen::Index>(areas.size()); }

  double loglik(const Eigen::VectorXd& theta) const {
    double total = 0.0;
    for (const auto& c : cells) {
      const double d = theta(c.i) - theta(c.j);
      total += c.n * log_sigmoid(d) - (c.n - c.y) * d;
    }
    return total;
  }

  double saturated_loglik() const {
    double total = 0.0;
    for (const auto& c : cells) {
      if (c.y > 0.0) total += c.y * std::log(c.y / c.n);
      if (c.n - c.y > 0.0) total += (c.n - c.y) * std::log((c.n - c.y) / c.n);
    }
    return total;
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& theta) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(size());
    for (const auto& c : cells) {
      const double r = c.y - c.n * win_probability(theta(c.i), theta(c.j));
      g(c.i) += r;
      g(c.j) -= r;
    }
    return g;
  }

  // Fisher information: weighted graph Laplacian with weights n pi (1 - pi).
  Eigen::MatrixXd information(const Eigen::VectorXd& theta) const {
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(size(), size());
    for (const auto& c : cells) {
      const double p = win_probability(theta(c.i), theta(c.j));
      const double w = c.n * p * (1.0 - p);
      info(c.i, c.i) += w;
      info(c.j, c.j) += w;
      info(c.i, c.j) -= w;
      info(c.j, c.i) -= w;
    }
    return info;
  }
};

// Connected components of the undirected comparison graph.
std::vector<int> comparison_components(const ComparisonTally& tally) {
  const std::size_t n = tally.num_areas;
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::vector<bool> compared(n, false);
  for (const auto& c : tally.cells) {
    compared[c.i] = compared[c.j] = true;
    parent[find(c.i)] = find(c.j);
  }
  std::vector<int> label(n, -1);
  std::vector<int> root_label(n, -1);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!compared[i]) continue;
    const auto r = find(i);
    if (root_label[r] < 0) root_label[r] = next++;
    label[i] = root_label[r];
  }
  return label;
}

// Strongly connected components of the "beat" digraph (edge a -> b when a
// won at least once against b), by mutual reachability.
std::vector<int> win_components(const Subproblem& sub) {
  const auto m = static_cast<std::size_t>(sub.size());
  std::vector<std::vector<std::size_t>> beats(m);
  for (const auto& c : sub.cells) {
    if (c.y > 0.0) beats[static_cast<std::size_t>(c.i)].push_back(static_cast<std::size_t>(c.j));
    if (c.n - c.y > 0.0) beats[static_cast<std::size_t>(c.j)].push_back(static_cast<std::size_t>(c.i));
  }
  std::vector<std::vector<bool>> reach(m, std::vector<bool>(m, false));
  for (std::size_t s = 0; s < m; ++s) {
    std::vector<std::size_t> stack{s};
    reach[s][s] = true;
    while (!stack.empty()) {
      const auto u = stack.back();
      stack.pop_back();
      for (auto v : beats[u])
        if (!reach[s][v]) {
          reach[s][v] = true;
          stack.push_back(v);
        }
    }
  }
  std::vector<int> label(m, -1);
  int next = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (label[i] >= 0) continue;
    for (std::size_t j = i; j < m; ++j)
      if (label[j] < 0 && reach[i][j] && reach[j][i]) label[j] = next;
    ++next;
  }
  return label;
}

struct NewtonOutcome {
  Eigen::VectorXd theta;
  int iterations = 0;
  bool ok = false;
};

// Newton iterations with the first area pinned at 0. In `glm_stopping` mode
// the loop ends on relative deviance change < 1e-8 (max 25 iterations), which
// leaves separated areas at large finite values; otherwise it runs to a
// gradient max-norm below kGradientTolerance.
NewtonOutcome newton(const Subproblem& sub, bool glm_stopping) {
  const Eigen::Index m = sub.size();
  NewtonOutcome out;
  out.theta = Eigen::VectorXd::Zero(m);
  const double saturated = sub.saturated_loglik();
  double ll = sub.loglik(out.theta);
  double deviance = -2.0 * (ll - saturated);
  const int max_iter = glm_stopping ? 25 : 200;
  for (int it = 1; it <= max_iter; ++it) {
    const Eigen::VectorXd g = sub.gradient(out.theta);
    if (!glm_stopping && g.cwiseAbs().maxCoeff() < kGradientTolerance) {
      out.ok = true;
      return out;
    }
    const Eigen::MatrixXd info = sub.information(out.theta);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info.bottomRightCorner(m - 1, m - 1));
    if (ldlt.info() != Eigen::Success) return out;
    Eigen::VectorXd step = Eigen::VectorXd::Zero(m);
    step.tail(m - 1) = ldlt.solve(g.tail(m - 1));
    if (!step.allFinite()) return out;

    double scale = 1.0;
    Eigen::VectorXd next = out.theta + step;
    double next_ll = sub.loglik(next);
    for (int halving = 0; halving < 40 && !(next_ll >= ll - 1e-12 * std::abs(ll)); ++halving) {
      scale *= 0.5;
      next = out.theta + scale * step;
      next_ll = sub.loglik(next);
    }
    out.theta = next;
    ll = next_ll;
    out.iterations = it;
    if (glm_stopping) {
      const double next_dev = -2.0 * (ll - saturated);
      const bool done = std::abs(next_dev - deviance) / (std::abs(next_dev) + 0.1) < 1e-8;
      deviance = next_dev;
      if (done) {
        out.ok = true;
        return out;
      }
    }
  }
  if (glm_stopping) {
    out.ok = true;
    return out;
  }
  out.ok = sub.gradient(out.theta).cwiseAbs().maxCoeff() < kGradientTolerance;
  return out;
}

// Minorisation-maximisation updates (Hunter 2004) on gamma = exp(theta).
NewtonOutcome mm_updates(const Subproblem& sub) {
  const Eigen::Index m = sub.size();
  Eigen::VectorXd wins = Eigen::VectorXd::Zero(m);
  for (const auto& c : sub.cells) {
    wins(c.i) += c.y;
    wins(c.j) += c.n - c.y;
  }
  NewtonOutcome out;
  Eigen::VectorXd gamma = Eigen::VectorXd::Ones(m);
  for (int it = 1; it <= 200000; ++it) {
    Eigen::VectorXd denom = Eigen::VectorXd::Zero(m);
    for (const auto& c : sub.cells) {
      const double s = c.n / (gamma(c.i) + gamma(c.j));
      denom(c.i) += s;
      denom(c.j) += s;
    }
    gamma = wins.cwiseQuotient(denom);
    gamma /= std::exp(gamma.array().log().mean());
    out.iterations = it;
    if (it % 50 == 0) {
      out.theta = gamma.array().log().matrix();
      out.theta.array() -= out.theta(0);
      if (sub.gradient(out.theta).cwiseAbs().maxCoeff() < kGradientTolerance) {
        out.ok = true;
        return out;
      }
    }
  }
  out.theta = gamma.array().log().matrix();
  out.theta.array() -= out.theta(0);
  return out;
}

Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  const Eigen::VectorXd& values = eig.eigenvalues();
  const double cutoff = 1e-13 * std::max(1e-300, values.cwiseAbs().maxCoeff());
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(values.size());
  for (Eigen::Index i = 0; i < values.size(); ++i)
    if (values(i) > cutoff) inv(i) = 1.0 / values(i);
  Eigen::MatrixXd out = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

}  // namespace

std::string to_string(Estimability e) {
  switch (e) {
    case Estimability::kEstimated:
      return "estimated";
    case Estimability::kDivergent:
      return "divergent";
    case Estimability::kUndefined:
      return "undefined";
  }
  return "unknown";
}

std::size_t BTFitResult::num_defined() const {
  return static_cast<std::size_t>(
      std::count_if(status.begin(), status.end(), [](Estimability e) { return e != Estimability::kUndefined; }));
}

std::pair<double, double> BTFitResult::contrast_interval(std::size_t i, std::size_t j) const {
  const auto a = static_cast<Eigen::Index>(i);
  const auto b = static_cast<Eigen::Index>(j);
  const double diff = lambda_hat(a) - lambda_hat(b);
  const double half = 1.96 * std::sqrt(quasi_variances(a) + quasi_variances(b));
  return {diff - half, diff + half};
}

BTFitResult fit_bt_mle(const ComparisonTally& tally) {
  if (tally.num_groups != 1) throw ValidationError("the BT baseline needs a single-group tally");
  if (tally.cells.empty()) throw ValidationError("cannot fit the BT model to an empty tally");
  for (const auto& c : tally.cells)
    if (c.t != 0.0) throw ValidationError("tally still contains ties; apply a tie treatment first");

  const auto n = static_cast<Eigen::Index>(tally.num_areas);
  BTFitResult result;
  result.lambda_hat = Eigen::VectorXd::Constant(n, kNaN);
  result.status.assign(tally.num_areas, Estimability::kUndefined);
  result.covariance_hat = Eigen::MatrixXd::Constant(n, n, kNaN);
  result.quasi_variances = Eigen::VectorXd::Constant(n, kNaN);

  // Main component: the largest connected set of compared areas.
  const auto component = comparison_components(tally);
  std::vector<std::size_t> counts;
  for (int c : component)
    if (c >= 0) {
      if (static_cast<std::size_t>(c) >= counts.size()) counts.resize(static_cast<std::size_t>(c) + 1, 0);
      ++counts[static_cast<std::size_t>(c)];
    }
  const int main = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());

  Subproblem sub;
  std::vector<Eigen::Index> local(tally.num_areas, -1);
  for (std::size_t i = 0; i < tally.num_areas; ++i) {
    if (component[i] == main) {
      local[i] = static_cast<Eigen::Index>(sub.areas.size());
      sub.areas.push_back(i);
    }
  }
  for (const auto& c : tally.cells)
    if (local[c.i] >= 0) sub.cells.push_back({local[c.i], local[c.j], c.n, c.y});

  const auto scc = win_components(sub);
  const int scc_count = *std::max_element(scc.begin(), scc.end()) + 1;
  NewtonOutcome fit;
  std::vector<Estimability> local_status(sub.areas.size(), Estimability::kEstimated);
  if (scc_count == 1) {
    fit = newton(sub, false);
    result.method = "newton";
    if (!fit.ok) {
      fit = mm_updates(sub);
      result.method = "mm";
    }
    result.converged = fit.ok;
  } else {
    std::vector<std::size_t> sizes(static_cast<std::size_t>(scc_count), 0);
    for (int s : scc) ++sizes[static_cast<std::size_t>(s)];
    const int core = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
    for (std::size_t k = 0; k < scc.size(); ++k)
      if (scc[k] != core) local_status[k] = Estimability::kDivergent;
    fit = newton(sub, true);
    result.method = "irls-stopped";
    result.converged = false;
  }
  result.iterations = fit.iterations;
  result.gradient_max_norm = sub.gradient(fit.theta).cwiseAbs().maxCoeff();

  Eigen::VectorXd theta = fit.theta;
  theta.array() -= theta.mean();
  const Eigen::MatrixXd cov = pseudo_inverse(sub.information(theta));
  for (Eigen::Index a = 0; a < sub.size(); ++a) {
    const auto ga = static_cast<Eigen::Index>(sub.areas[static_cast<std::size_t>(a)]);
    result.lambda_hat(ga) = theta(a);
    result.status[static_cast<std::size_t>(ga)] = local_status[static_cast<std::size_t>(a)];
    for (Eigen::Index b = 0; b < sub.size(); ++b)
      result.covariance_hat(ga, static_cast<Eigen::Index>(sub.areas[static_cast<std::size_t>(b)])) = cov(a, b);
  }

  if (result.num_defined() >= 3) {
    result.quasi_fit = quasi_variances(result);
    result.quasi_variances = result.quasi_fit.q;
  }
  return result;
}

double quasi_variance_objective(const Eigen::VectorXd& q, const Eigen::MatrixXd& contrast_variance) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < q.size(); ++i)
    for (Eigen::Index j = i + 1; j < q.size(); ++j) {
      const double r = std::log(q(i) + q(j)) - std::log(contrast_variance(i, j));
      total += r * r;
    }
  return total;
}

QuasiVarianceFit fit_quasi_variances(const Eigen::MatrixXd& v) {
  const Eigen::Index m = v.rows();
  if (m < 3) throw ValidationError("quasi-variances need at least 3 defined areas");
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i + 1; j < m; ++j)
      if (!(v(i, j) > 0.0) || !std::isfinite(v(i, j)))
        throw ValidationError("contrast variances must be positive and finite");

  // Start: q_i = mean_j V_ij - mean(V) / 2, the linear-scale least squares
  // solution, floored to stay positive.
  double overall = 0.0;
  Eigen::VectorXd row_mean = Eigen::VectorXd::Zero(m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      if (i != j) {
        row_mean(i) += v(i, j) / static_cast<double>(m - 1);
        overall += v(i, j);
      }
  overall /= static_cast<double>(m * (m - 1));
  Eigen::VectorXd theta(m);
  for (Eigen::Index i = 0; i < m; ++i) theta(i) = std::log(std::max(row_mean(i) - overall / 2.0, 1e-3 * overall));

  auto residuals = [&](const Eigen::VectorXd& th, Eigen::MatrixXd* jac) {
    const Eigen::VectorXd q = th.array().exp().matrix();
    const Eigen::Index pairs = m * (m - 1) / 2;
    Eigen::VectorXd r(pairs);
    if (jac) jac->setZero(pairs, m);
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = i + 1; j < m; ++j, ++k) {
        const double s = q(i) + q(j);
        r(k) = std::log(s) - std::log(v(i, j));
        if (jac) {
          (*jac)(k, i) = q(i) / s;
          (*jac)(k, j) = q(j) / s;
        }
      }
    return r;
  };

  QuasiVarianceFit fit;
  Eigen::MatrixXd jac;
  Eigen::VectorXd r = residuals(theta, &jac);
  double objective = r.squaredNorm();
  fit.initial_objective = objective;
  double mu = 1e-3;
  for (int it = 1; it <= 500; ++it) {
    fit.iterations = it;
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd jtr = jac.transpose() * r;
    if (jtr.cwiseAbs().maxCoeff() < 1e-14) break;
    bool improved = false;
    for (int tries = 0; tries < 30; ++tries) {
      Eigen::MatrixXd lhs = jtj;
      lhs.diagonal() += mu * (jtj.diagonal().array() + 1e-12).matrix();
      const Eigen::VectorXd step = lhs.ldlt().solve(-jtr);
      const Eigen::VectorXd candidate = theta + step;
      const Eigen::VectorXd rc = residuals(candidate, nullptr);
      const double obj = rc.squaredNorm();
      if (std::isfinite(obj) && obj < objective) {
        const double gain = objective - obj;
        theta = candidate;
        r = residuals(theta, &jac);
        objective = obj;
        mu = std::max(mu / 3.0, 1e-12);
        improved = gain > 1e-16 * std::max(1.0, objective);
        break;
      }
      mu *= 4.0;
    }
    if (!improved) break;
  }
  fit.q = theta.array().exp().matrix();
  fit.final_objective = objective;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i + 1; j < m; ++j) {
      const double se = std::sqrt(v(i, j));
      fit.worst_relative_error =
          std::max(fit.worst_relative_error, std::abs(std::sqrt(fit.q(i) + fit.q(j)) - se) / se);
    }
  return fit;
}

QuasiVarianceFit quasi_variances(const BTFitResult& result) {
  std::vector<Eigen::Index> defined;
  for (std::size_t i = 0; i < result.status.size(); ++i)
    if (result.defined(i)) defined.push_back(static_cast<Eigen::Index>(i));
  const auto m = static_cast<Eigen::Index>(defined.size());
  if (m < 3) throw ValidationError("quasi-variances need at least 3 defined areas");
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(m, m);
  const auto& c = result.covariance_hat;
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = 0; b < m; ++b)
      if (a != b) {
        const auto i = defined[static_cast<std::size_t>(a)];
        const auto j = defined[static_cast<std::size_t>(b)];
        v(a, b) = c(i, i) + c(j, j) - 2.0 * c(i, j);
      }
  QuasiVarianceFit local = fit_quasi_variances(v);
  QuasiVarianceFit out = local;
  out.q = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(result.status.size()), kNaN);
  for (Eigen::Index a = 0; a < m; ++a) out.q(defined[static_cast<std::size_t>(a)]) = local.q(a);
  return out;
}

}  // namespace bsbt
