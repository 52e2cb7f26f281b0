#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bsbt/comparisons.hpp"
#include "bsbt/covariance.hpp"
#include "bsbt/likelihood.hpp"
#include "bsbt/mcmc.hpp"
#include "bsbt/network.hpp"

namespace bsbt {

inline constexpr std::size_t kComparisonsPerJudgeHour = 180;

// Piecewise deprivation of the 1-d city: sin(x) + x + pi left of -pi,
// sin(4x) on [-pi, pi], sin(x) - x + pi right of pi.
double city_deprivation(double x);

struct SyntheticCity1D {
  std::vector<double> locations;  // ascending
  Eigen::VectorXd truth;          // city_deprivation(location), uncentred
  AreaNetwork network;            // path in location order

  Eigen::VectorXd centered_truth() const;
};

// Locations i.i.d. Laplace(0, b = 2) (variance 8).
SyntheticCity1D gen_city_1d(std::size_t n_areas, std::uint64_t seed);

Eigen::VectorXd gen_field_from_prior(const CovarianceMatrix& covariance, std::uint64_t seed);

struct SimulatedJudge {
  std::string id;
  std::size_t group = 0;
  bool inverted = false;  // reports the opposite of what the model predicts
};

struct SimulatedDataset {
  Eigen::VectorXd truth;
  std::vector<ComparisonRecord> records;
  std::uint64_t seed = 0;
  std::size_t size = 0;

  double judge_hours() const { return static_cast<double>(size) / kComparisonsPerJudgeHour; }
};

// k comparisons over pairs drawn uniformly from all N(N-1)/2 unordered pairs,
// winners drawn from the Bradley-Terry probabilities. Judges are
// "judge_<h>", one per judge hour of 180 comparisons.
SimulatedDataset simulate_comparisons(const AreaNetwork& net, const Eigen::VectorXd& truth,
                                      std::size_t k, std::uint64_t seed);

// Round-robin over the given judges; each judge perceives its group field
// lambda + sum_p x[g][p] beta_p (and flips the outcome when inverted).
SimulatedDataset simulate_judged_comparisons(const AreaNetwork& net, const Eigen::VectorXd& lambda,
                                             const GroupDesign& design, const Eigen::MatrixXd& beta,
                                             const std::vector<SimulatedJudge>& judges,
                                             std::size_t k, std::uint64_t seed);

// Replaces each record's outcome with TIE independently with probability `fraction`.
void inject_ties(std::vector<ComparisonRecord>& records, double fraction, std::uint64_t seed);

enum class Scenario { kOneD, kNetwork2D };
enum class ModelKind { kBtMle, kBsbt };

std::string to_string(Scenario s);
std::string to_string(ModelKind m);
Scenario parse_scenario(const std::string& text);
ModelKind parse_model(const std::string& text);

struct StudyConfig {
  Scenario scenario = Scenario::kOneD;
  std::vector<std::size_t> sizes{180, 360, 900, 1800, 4500, 9000};
  std::size_t n_seeds = 5;
  std::uint64_t base_seed = 2024;
  std::vector<ModelKind> models{ModelKind::kBtMle, ModelKind::kBsbt};
  // Covariance used to fit BSBT (its alpha^2 is irrelevant there) and, for
  // the 2-d scenario, to draw the true field with `truth_alpha_sq`.
  KernelKind kernel = KernelKind::kMatrixExponential;
  double length_scale = 2.0;
  double truth_alpha_sq = 3.0;
  std::size_t n_areas_1d = 100;
  std::size_t grid_rows = 10;
  std::size_t grid_cols = 10;
  MCMCConfig mcmc;  // seed is replaced per cell
  std::size_t jobs = 1;

  void validate() const;
};

struct StudyRow {
  Scenario scenario;
  std::size_t size;
  std::size_t seed_index;
  ModelKind model;
  std::optional<double> mae;
  double runtime_seconds = 0.0;
};

struct StudySizeMean {
  std::size_t size;
  ModelKind model;
  std::optional<double> mean_mae;  // over defined rows; nullopt when none
  std::size_t undefined = 0;
};

struct StudyReport {
  std::vector<StudyRow> rows;  // size-major, then seed, then model order
  std::vector<StudySizeMean> means;
};

// Point estimates: posterior median for the 1-d city, posterior mean on
// the network; truth is centred before computing MAE.
StudyReport run_study(const StudyConfig& config);

// The network and truth that run_study uses for a seed index.
struct StudyWorld {
  AreaNetwork network;
  Eigen::VectorXd truth;  // centred
};
StudyWorld study_world(const StudyConfig& config, std::size_t seed_index);
std::uint64_t study_cell_seed(const StudyConfig& config, std::size_t seed_index, std::size_t size,
                              std::uint64_t salt);

}  // namespace bsbt
