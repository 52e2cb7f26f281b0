#include "bsbt/diagnostics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "bsbt/errors.hpp"
#include "bsbt/likelihood.hpp"

namespace bsbt {

std::optional<double> mae(const Eigen::VectorXd& truth, const Eigen::VectorXd& estimate) {
  if (truth.size() != estimate.size()) throw ValidationError("MAE inputs differ in length");
  if (truth.size() == 0) throw ValidationError("MAE of empty vectors");
  if (!estimate.allFinite() || !truth.allFinite()) return std::nullopt;
  return (truth - estimate).cwiseAbs().mean();
}

Eigen::VectorXd average_ranks(const Eigen::VectorXd& v) {
  const auto n = static_cast<std::size_t>(v.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v(static_cast<Eigen::Index>(a)) < v(static_cast<Eigen::Index>(b)); });
  Eigen::VectorXd ranks(v.size());
  std::size_t start = 0;
  while (start < n) {
    std::size_t end = start + 1;
    while (end < n && v(static_cast<Eigen::Index>(order[end])) == v(static_cast<Eigen::Index>(order[start]))) ++end;
    const double avg = 0.5 * static_cast<double>(start + end - 1) + 1.0;
    for (std::size_t k = start; k < end; ++k) ranks(static_cast<Eigen::Index>(order[k])) = avg;
    start = end;
  }
  return ranks;
}

double spearman(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw ValidationError("Spearman inputs differ in length");
  if (a.size() < 2) throw ValidationError("Spearman needs at least 2 values");
  if (!a.allFinite() || !b.allFinite()) throw ValidationError("Spearman inputs must be finite");
  if (a.minCoeff() == a.maxCoeff() || b.minCoeff() == b.maxCoeff())
    throw ValidationError("Spearman correlation is undefined for a constant vector");
  const Eigen::VectorXd d = average_ranks(a) - average_ranks(b);
  const double n = static_cast<double>(a.size());
  return 1.0 - 6.0 * d.squaredNorm() / (n * (n * n - 1.0));
}

std::vector<JudgeScore> judge_heuristic(const AreaNetwork& net,
                                        const std::vector<ComparisonRecord>& records,
                                        const std::vector<std::optional<double>>& observed,
                                        const Eigen::VectorXd& lambda) {
  if (observed.size() != records.size())
    throw ValidationError("observed outcomes do not match the records");
  if (static_cast<std::size_t>(lambda.size()) != net.size())
    throw ValidationError("lambda length does not match the network");
  std::vector<JudgeScore> scores;
  std::unordered_map<std::string, std::size_t> slot;
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto& rec = records[r];
    auto [it, inserted] = slot.emplace(rec.judge_id, scores.size());
    if (inserted) scores.push_back({rec.judge_id, 0, 0.0});
    if (!observed[r]) continue;
    const auto i = static_cast<Eigen::Index>(net.require_index(rec.area_i));
    const auto j = static_cast<Eigen::Index>(net.require_index(rec.area_j));
    const double e = std::clamp(win_probability(lambda(i), lambda(j)), 1e-6, 1.0 - 1e-6);
    const double o = *observed[r];
    auto& s = scores[it->second];
    s.x2 += (o - e) * (o - e) / e;
    ++s.n_comparisons;
  }
  for (auto& s : scores) {
    if (s.n_comparisons == 0) throw ValidationError("judge '" + s.judge_id + "' has no usable comparisons");
    s.x2 /= static_cast<double>(s.n_comparisons);
  }
  return scores;
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw ValidationError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

ParameterSummary summarize_draws(const std::vector<double>& draws) {
  if (draws.empty()) throw ValidationError("no draws to summarise");
  ParameterSummary s;
  const double n = static_cast<double>(draws.size());
  s.mean = std::accumulate(draws.begin(), draws.end(), 0.0) / n;
  double ss = 0.0;
  for (double d : draws) ss += (d - s.mean) * (d - s.mean);
  s.variance = draws.size() > 1 ? ss / (n - 1.0) : 0.0;
  std::vector<double> sorted = draws;
  std::sort(sorted.begin(), sorted.end());
  s.median = quantile(sorted, 0.5);
  s.q025 = quantile(sorted, 0.025);
  s.q975 = quantile(sorted, 0.975);
  // Exact constants can produce a mean differing from the order statistics in
  // the last bit; keep the documented ordering.
  s.q025 = std::min(s.q025, s.median);
  s.q975 = std::max(s.q975, s.median);
  return s;
}

Eigen::VectorXd PosteriorSummary::lambda_mean() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(lambda.size()));
  for (std::size_t i = 0; i < lambda.size(); ++i) out(static_cast<Eigen::Index>(i)) = lambda[i].mean;
  return out;
}

Eigen::VectorXd PosteriorSummary::lambda_median() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(lambda.size()));
  for (std::size_t i = 0; i < lambda.size(); ++i) out(static_cast<Eigen::Index>(i)) = lambda[i].median;
  return out;
}

namespace {

std::vector<std::size_t> kept_rows(std::size_t stored, std::size_t burn_in, std::size_t thinning) {
  if (thinning == 0) throw ValidationError("thinning must be positive");
  if (burn_in >= stored) throw ValidationError("burn-in leaves no draws to summarise");
  std::vector<std::size_t> rows;
  for (std::size_t r = burn_in; r < stored; r += thinning) rows.push_back(r);
  return rows;
}

std::vector<double> column(const Eigen::MatrixXd& m, Eigen::Index col, const std::vector<std::size_t>& rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(m(static_cast<Eigen::Index>(r), col));
  return out;
}

std::vector<double> pick(const std::vector<double>& v, const std::vector<std::size_t>& rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(v[r]);
  return out;
}

}  // namespace

PosteriorSummary summarize(const PosteriorSamples& samples, std::size_t burn_in, std::size_t thinning) {
  const auto rows = kept_rows(samples.stored(), burn_in, thinning);
  PosteriorSummary out;
  for (Eigen::Index i = 0; i < samples.lambda.cols(); ++i)
    out.lambda.push_back(summarize_draws(column(samples.lambda, i, rows)));
  for (const auto& b : samples.beta) {
    std::vector<ParameterSummary> per_area;
    for (Eigen::Index i = 0; i < b.cols(); ++i) per_area.push_back(summarize_draws(column(b, i, rows)));
    out.beta.push_back(std::move(per_area));
  }
  // Variance chains may be stored more densely; burn-in is applied by
  // iteration number so both windows cover the same part of the run.
  const std::int64_t first_iteration = samples.iterations[burn_in];
  std::vector<std::size_t> var_rows;
  for (std::size_t r = 0; r < samples.variance_iterations.size(); ++r)
    if (samples.variance_iterations[r] >= first_iteration) var_rows.push_back(r);
  if (var_rows.empty()) throw ValidationError("no variance draws after burn-in");
  out.alpha_sq_lambda = summarize_draws(pick(samples.alpha_sq_lambda, var_rows));
  for (const auto& chain : samples.alpha_sq_beta) out.alpha_sq_beta.push_back(summarize_draws(pick(chain, var_rows)));
  return out;
}

std::string TraceRequest::label() const {
  switch (kind) {
    case Kind::kLambda:
      return "lambda_" + std::to_string(area);
    case Kind::kBeta:
      return "beta_" + std::to_string(covariate) + "_" + std::to_string(area);
    case Kind::kAlphaSqLambda:
      return "alpha_sq_lambda";
    case Kind::kAlphaSqBeta:
      return "alpha_sq_" + std::to_string(covariate);
  }
  return "unknown";
}

TraceRequest TraceRequest::parse(const std::string& text) {
  auto number = [&](const std::string& s) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
      throw ValidationError("bad trace parameter '" + text + "'");
    return v;
  };
  if (text == "alpha_sq_lambda") return {Kind::kAlphaSqLambda, 0, 0};
  if (text.rfind("lambda_", 0) == 0) return {Kind::kLambda, 0, number(text.substr(7))};
  if (text.rfind("alpha_sq_", 0) == 0) return {Kind::kAlphaSqBeta, number(text.substr(9)), 0};
  if (text.rfind("beta_", 0) == 0) {
    const auto rest = text.substr(5);
    const auto us = rest.find('_');
    if (us == std::string::npos) throw ValidationError("bad trace parameter '" + text + "'");
    return {Kind::kBeta, number(rest.substr(0, us)), number(rest.substr(us + 1))};
  }
  throw ValidationError("bad trace parameter '" + text + "'");
}

std::vector<TraceRow> export_traces(const PosteriorSamples& samples, const std::vector<TraceRequest>& requests) {
  std::vector<TraceRow> rows;
  if (requests.empty()) return rows;
  rows.push_back({samples.config.burn_in, "burn_in_end", static_cast<double>(samples.config.burn_in)});
  for (const auto& req : requests) {
    const std::string name = req.label();
    switch (req.kind) {
      case TraceRequest::Kind::kLambda:
        if (req.area >= static_cast<std::size_t>(samples.lambda.cols()))
          throw ValidationError("trace index out of range: " + name);
        for (std::size_t r = 0; r < samples.stored(); ++r)
          rows.push_back({samples.iterations[r], name, samples.lambda(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(req.area))});
        break;
      case TraceRequest::Kind::kBeta:
        if (req.covariate >= samples.beta.size() ||
            req.area >= static_cast<std::size_t>(samples.beta[req.covariate].cols()))
          throw ValidationError("trace index out of range: " + name);
        for (std::size_t r = 0; r < samples.stored(); ++r)
          rows.push_back({samples.iterations[r], name,
                          samples.beta[req.covariate](static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(req.area))});
        break;
      case TraceRequest::Kind::kAlphaSqLambda:
        for (std::size_t r = 0; r < samples.variance_iterations.size(); ++r)
          rows.push_back({samples.variance_iterations[r], name, samples.alpha_sq_lambda[r]});
        break;
      case TraceRequest::Kind::kAlphaSqBeta:
        if (req.covariate >= samples.alpha_sq_beta.size())
          throw ValidationError("trace index out of range: " + name);
        for (std::size_t r = 0; r < samples.variance_iterations.size(); ++r)
          rows.push_back({samples.variance_iterations[r], name, samples.alpha_sq_beta[req.covariate][r]});
        break;
    }
  }
  return rows;
}

}  // namespace bsbt
