#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "bsbt/bt_mle.hpp"
#include "bsbt/comparisons.hpp"
#include "bsbt/diagnostics.hpp"
#include "bsbt/mcmc.hpp"
#include "bsbt/network.hpp"
#include "bsbt/simulation.hpp"

namespace bsbt {

namespace fs = std::filesystem;

inline constexpr int kFormatVersion = 1;
inline constexpr const char* kToolVersion = "1.0.0";

// Shortest decimal string that parses back to the same double. NaN is "NA".
std::string format_double(double v);
// Accepts anything format_double writes, plus "nan"/"inf" spellings.
double parse_double(const std::string& text);

// ---- CSV ----------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a header column, or throws naming `source`.
  std::size_t column(const std::string& name, const std::string& source) const;
  std::optional<std::size_t> find_column(const std::string& name) const;
};

// RFC 4180 quoting; every row must have the header's width. Row numbers in
// errors count the header as row 1.
CsvTable parse_csv(const std::string& text, const std::string& source);
CsvTable read_csv(const fs::path& path);
std::string csv_field(const std::string& field);
void write_csv_row(std::ostream& out, const std::vector<std::string>& fields);
std::string to_csv(const CsvTable& table);

std::string read_file(const fs::path& path);

// ---- datasets -----------------------------------------------------------

struct JudgeProfile {
  std::string judge_id;
  std::map<std::string, std::string> covariates;  // e.g. gender, occupation
  std::set<std::string> familiarity;
  std::set<std::pair<std::string, std::string>> exclusion_pairs;  // (a, b) with a < b

  bool operator==(const JudgeProfile&) const = default;
};

struct Dataset {
  AreaNetwork network;
  std::vector<EdgeSpec> edges;  // as loaded, for saving back
  std::vector<ComparisonRecord> records;
  std::vector<JudgeProfile> judges;  // empty when judges.csv is absent
};

AreaNetwork load_network(const fs::path& areas_csv, const fs::path& edges_csv, std::vector<EdgeSpec>* edges_out = nullptr);
std::vector<ComparisonRecord> parse_comparisons(const CsvTable& table, const AreaNetwork& net, const std::string& source);
std::vector<JudgeProfile> parse_judges(const CsvTable& table, const AreaNetwork& net, const std::string& source);

// Reads areas.csv, edges.csv, comparisons.csv and the optional judges.csv.
Dataset load_dataset(const fs::path& dir);

std::string areas_csv(const AreaNetwork& net);
std::string edges_csv(const AreaNetwork& net);
std::string comparisons_csv(const std::vector<ComparisonRecord>& records);
void write_comparisons_header(std::ostream& out);
void write_comparison_row(std::ostream& out, const ComparisonRecord& record);
std::string judges_csv(const std::vector<JudgeProfile>& judges);

// Atomic: writes into a sibling temporary directory, then renames.
void save_dataset(const Dataset& dataset, const fs::path& dir);

// Groups judges by the value of one covariate (values sorted). Records from
// judges missing from the roster are a validation error.
struct CovariateGrouping {
  JudgeGrouping grouping;
  std::vector<std::string> labels;
};
CovariateGrouping group_by_covariate(const std::vector<JudgeProfile>& judges, const std::string& covariate);

// ---- results ------------------------------------------------------------

std::string matrix_csv(const Eigen::MatrixXd& m, const std::vector<std::string>& header);
Eigen::MatrixXd parse_matrix_csv(const CsvTable& table, std::size_t skip_columns = 0);

// chain directory payloads
struct ChainFiles {
  std::map<std::string, std::string> files;  // relative name -> content
};
ChainFiles chain_files(const PosteriorSamples& samples, const AreaNetwork& net,
                       const std::vector<std::string>& covariate_labels, const nlohmann::json& extra_meta = {});
PosteriorSamples load_chain(const fs::path& dir);

std::string summary_csv(const AreaNetwork& net, const std::vector<ParameterSummary>& lambda);
// Reads area_id and one numeric column of a summary CSV.
std::vector<std::pair<std::string, double>> read_summary_column(const fs::path& path, const std::string& column);
std::string bt_fit_csv(const AreaNetwork& net, const BTFitResult& fit);
std::string traces_csv(const std::vector<TraceRow>& rows);
std::string judge_scores_csv(const std::vector<JudgeScore>& scores);
std::string study_report_csv(const StudyReport& report);

nlohmann::json mcmc_config_json(const MCMCConfig& config);
MCMCConfig mcmc_config_from_json(const nlohmann::json& j, MCMCConfig base = {});
nlohmann::json study_config_json(const StudyConfig& config);
StudyConfig study_config_from_json(const nlohmann::json& j);

std::string sha256_hex(const std::string& bytes);

// Collects files in memory and publishes them with a manifest in one rename.
class ResultBundle {
 public:
  void add(const std::string& relative_path, std::string content);
  void set_seeds(nlohmann::json seeds) { seeds_ = std::move(seeds); }
  void set_config(nlohmann::json config) { config_ = std::move(config); }
  bool empty() const { return files_.empty(); }

  nlohmann::json manifest() const;
  // Replaces `dir` if it exists. Returns the manifest written.
  nlohmann::json publish(const fs::path& dir) const;

 private:
  std::map<std::string, std::string> files_;
  nlohmann::json seeds_ = nlohmann::json::object();
  nlohmann::json config_ = nlohmann::json::object();
};

}  // namespace bsbt
