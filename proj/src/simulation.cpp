#include "bsbt/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numbers>
#include <thread>

#include "bsbt/bt_mle.hpp"
#include "bsbt/diagnostics.hpp"
#include "bsbt/errors.hpp"

namespace bsbt {

double city_deprivation(double x) {
  constexpr double pi = std::numbers::pi;
  if (x < -pi) return std::sin(x) + x + pi;
  if (x <= pi) return std::sin(4.0 * x);
  return std::sin(x) - x + pi;
}

Eigen::VectorXd SyntheticCity1D::centered_truth() const {
  Eigen::VectorXd out = truth;
  out.array() -= out.mean();
  return out;
}

SyntheticCity1D gen_city_1d(std::size_t n_areas, std::uint64_t seed) {
  if (n_areas < 2) throw ValidationError("the 1-d city needs at least 2 areas");
  constexpr double kScale = 2.0;  // Laplace variance 2 b^2 = 8
  Rng rng(seed);
  std::exponential_distribution<double> magnitude(1.0 / kScale);
  SyntheticCity1D city;
  city.locations.resize(n_areas);
  for (auto& x : city.locations) {
    const double m = magnitude(rng);
    x = (rng() >> 63) ? m : -m;
  }
  std::sort(city.locations.begin(), city.locations.end());
  city.truth.resize(static_cast<Eigen::Index>(n_areas));

  std::vector<Area> areas;
  std::vector<EdgeSpec> edges;
  for (std::size_t i = 0; i < n_areas; ++i) {
    city.truth(static_cast<Eigen::Index>(i)) = city_deprivation(city.locations[i]);
    char id[16];
    std::snprintf(id, sizeof id, "a%03zu", i);
    areas.push_back({id, id, city.locations[i], 0.0, {}});
    if (i > 0) edges.push_back({areas[i - 1].id, areas[i].id, 1.0});
  }
  city.network = build_network(std::move(areas), edges);
  return city;
}

Eigen::VectorXd gen_field_from_prior(const CovarianceMatrix& covariance, std::uint64_t seed) {
  return sample_constrained_mvn(covariance, seed);
}

namespace {

std::pair<std::size_t, std::size_t> uniform_pair(std::size_t n, Rng& rng) {
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  std::uniform_int_distribution<std::size_t> second(0, n - 2);
  const std::size_t a = first(rng);
  std::size_t b = second(rng);
  if (b >= a) ++b;
  return {a, b};
}

}  // namespace

SimulatedDataset simulate_comparisons(const AreaNetwork& net, const Eigen::VectorXd& truth,
                                      std::size_t k, std::uint64_t seed) {
  const std::size_t hours = std::max<std::size_t>(1, (k + kComparisonsPerJudgeHour - 1) / kComparisonsPerJudgeHour);
  std::vector<SimulatedJudge> judges;
  for (std::size_t h = 0; h < hours; ++h) judges.push_back({"judge_" + std::to_string(h), 0, false});
  // Block assignment: judge h makes comparisons [180 h, 180 (h + 1)).
  if (k < 1) throw ValidationError("simulate at least one comparison");
  if (net.size() < 2) throw ValidationError("simulation needs at least 2 areas");
  if (static_cast<std::size_t>(truth.size()) != net.size())
    throw ValidationError("truth length does not match the network");
  Rng rng(seed);
  SimulatedDataset out;
  out.truth = truth;
  out.seed = seed;
  out.size = k;
  out.records.reserve(k);
  for (std::size_t r = 0; r < k; ++r) {
    const auto [a, b] = uniform_pair(net.size(), rng);
    const double p = win_probability(truth(static_cast<Eigen::Index>(a)), truth(static_cast<Eigen::Index>(b)));
    const bool a_wins = uniform01(rng) < p;
    out.records.push_back({judges[r / kComparisonsPerJudgeHour].id, net.area(a).id, net.area(b).id,
                           a_wins ? Outcome::kIWins : Outcome::kJWins, {}});
  }
  return out;
}

SimulatedDataset simulate_judged_comparisons(const AreaNetwork& net, const Eigen::VectorXd& lambda,
                                             const GroupDesign& design, const Eigen::MatrixXd& beta,
                                             const std::vector<SimulatedJudge>& judges,
                                             std::size_t k, std::uint64_t seed) {
  if (judges.empty()) throw ValidationError("need at least one simulated judge");
  if (k < 1) throw ValidationError("simulate at least one comparison");
  if (static_cast<std::size_t>(lambda.size()) != net.size())
    throw ValidationError("lambda length does not match the network");
  design.validate();
  std::vector<Eigen::VectorXd> fields;
  for (std::size_t g = 0; g < design.groups(); ++g) fields.push_back(group_field(lambda, design, beta, g));
  for (const auto& j : judges)
    if (j.group >= design.groups()) throw ValidationError("judge '" + j.id + "' has an out-of-range group");

  Rng rng(seed);
  SimulatedDataset out;
  out.truth = lambda;
  out.seed = seed;
  out.size = k;
  out.records.reserve(k);
  for (std::size_t r = 0; r < k; ++r) {
    const auto& judge = judges[r % judges.size()];
    const auto [a, b] = uniform_pair(net.size(), rng);
    const auto& f = fields[judge.group];
    const double p = win_probability(f(static_cast<Eigen::Index>(a)), f(static_cast<Eigen::Index>(b)));
    bool a_wins = uniform01(rng) < p;
    if (judge.inverted) a_wins = !a_wins;
    out.records.push_back({judge.id, net.area(a).id, net.area(b).id, a_wins ? Outcome::kIWins : Outcome::kJWins, {}});
  }
  return out;
}

void inject_ties(std::vector<ComparisonRecord>& records, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ValidationError("tie fraction must lie in [0, 1]");
  Rng rng(seed);
  for (auto& r : records)
    if (uniform01(rng) < fraction) r.outcome = Outcome::kTie;
}

std::string to_string(Scenario s) { return s == Scenario::kOneD ? "one_d" : "network_2d"; }
std::string to_string(ModelKind m) { return m == ModelKind::kBtMle ? "bt_mle" : "bsbt"; }

Scenario parse_scenario(const std::string& text) {
  if (text == "one_d" || text == "ONE_D") return Scenario::kOneD;
  if (text == "network_2d" || text == "NETWORK_2D") return Scenario::kNetwork2D;
  throw ValidationError("unknown scenario '" + text + "'");
}

ModelKind parse_model(const std::string& text) {
  if (text == "bt_mle" || text == "BT_MLE" || text == "bt") return ModelKind::kBtMle;
  if (text == "bsbt" || text == "BSBT") return ModelKind::kBsbt;
  throw ValidationError("unknown model '" + text + "'");
}

void StudyConfig::validate() const {
  if (sizes.empty()) throw ValidationError("study needs at least one size");
  for (auto s : sizes)
    if (s == 0) throw ValidationError("study sizes must be positive");
  if (n_seeds == 0) throw ValidationError("study needs at least one seed");
  if (models.empty()) throw ValidationError("study needs at least one model");
  if (!(truth_alpha_sq > 0.0)) throw ValidationError("truth_alpha_sq must be positive");
  if (scenario == Scenario::kOneD && n_areas_1d < 2) throw ValidationError("1-d city needs at least 2 areas");
  if (scenario == Scenario::kNetwork2D && grid_rows * grid_cols < 2)
    throw ValidationError("grid needs at least 2 areas");
  mcmc.validate();
}

std::uint64_t study_cell_seed(const StudyConfig& config, std::size_t seed_index, std::size_t size,
                              std::uint64_t salt) {
  return derive_seed(config.base_seed, {static_cast<std::uint64_t>(config.scenario), seed_index, size, salt});
}

StudyWorld study_world(const StudyConfig& config, std::size_t seed_index) {
  const std::uint64_t seed = study_cell_seed(config, seed_index, 0, 0);
  if (config.scenario == Scenario::kOneD) {
    auto city = gen_city_1d(config.n_areas_1d, seed);
    return {std::move(city.network), city.centered_truth()};
  }
  AreaNetwork net = grid_network(config.grid_rows, config.grid_cols);
  const auto cov = make_covariance(net, {config.kernel, config.truth_alpha_sq, config.length_scale});
  Eigen::VectorXd truth = gen_field_from_prior(cov, seed);
  truth.array() -= truth.mean();
  return {std::move(net), std::move(truth)};
}

StudyReport run_study(const StudyConfig& config) {
  config.validate();
  struct Cell {
    std::size_t size;
    std::size_t seed_index;
  };
  std::vector<Cell> cells;
  for (auto size : config.sizes)
    for (std::size_t s = 0; s < config.n_seeds; ++s) cells.push_back({size, s});

  const std::size_t per_cell = config.models.size();
  std::vector<StudyRow> rows(cells.size() * per_cell);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto work = [&]() {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= cells.size()) return;
      try {
        const auto& cell = cells[c];
        const StudyWorld world = study_world(config, cell.seed_index);
        const auto data = simulate_comparisons(world.network, world.truth, cell.size,
                                               study_cell_seed(config, cell.seed_index, cell.size, 1));
        const auto counts = tally(world.network, data.records);
        for (std::size_t m = 0; m < per_cell; ++m) {
          const auto start = std::chrono::steady_clock::now();
          StudyRow row{config.scenario, cell.size, cell.seed_index, config.models[m], std::nullopt, 0.0};
          if (config.models[m] == ModelKind::kBtMle) {
            const auto fit = fit_bt_mle(counts);
            row.mae = mae(world.truth, fit.lambda_hat);
          } else {
            MCMCConfig mc = config.mcmc;
            mc.seed = study_cell_seed(config, cell.seed_index, cell.size, 2);
            const auto cov = make_covariance(world.network, {config.kernel, 1.0, config.length_scale});
            const auto samples = run_chain(counts, GroupDesign::single(), cov, mc);
            const auto summary = summarize(samples);
            const Eigen::VectorXd estimate =
                config.scenario == Scenario::kOneD ? summary.lambda_median() : summary.lambda_mean();
            row.mae = mae(world.truth, estimate);
          }
          row.runtime_seconds =
              std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
          rows[c * per_cell + m] = row;
        }
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  const std::size_t jobs = std::max<std::size_t>(1, std::min(config.jobs, cells.size()));
  if (jobs == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  StudyReport report;
  report.rows = std::move(rows);
  for (auto size : config.sizes)
    for (auto model : config.models) {
      StudySizeMean mean{size, model, std::nullopt, 0};
      double total = 0.0;
      std::size_t defined = 0;
      for (const auto& r : report.rows) {
        if (r.size != size || r.model != model) continue;
        if (r.mae) {
          total += *r.mae;
          ++defined;
        } else {
          ++mean.undefined;
        }
      }
      if (defined > 0) mean.mean_mae = total / static_cast<double>(defined);
      report.means.push_back(mean);
    }
  return report;
}

}  // namespace bsbt
