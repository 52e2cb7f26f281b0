#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "bsbt/network.hpp"

namespace bsbt {

enum class Outcome { kIWins, kJWins, kTie, kUnfamiliar };

std::string to_string(Outcome outcome);
Outcome parse_outcome(const std::string& text);

struct ComparisonRecord {
  std::string judge_id;
  std::string area_i;
  std::string area_j;
  Outcome outcome = Outcome::kIWins;
  std::string timestamp;  // ISO-8601 UTC, may be empty

  bool operator==(const ComparisonRecord&) const = default;
};

void validate_record(const AreaNetwork& net, const ComparisonRecord& record);

// Maps judges to groups. With `fallback_group` set, unmapped judges go there;
// otherwise an unknown judge is a validation error.
struct JudgeGrouping {
  std::size_t num_groups = 1;
  std::unordered_map<std::string, std::size_t> group_of;
  std::optional<std::size_t> fallback_group = 0;

  static JudgeGrouping single_group() { return {}; }
  std::size_t group(const std::string& judge_id) const;
};

// Aggregated counts for one unordered area pair within one judge group.
// Indices follow network order with i < j; y counts wins for i.
struct PairCell {
  std::size_t group = 0;
  std::size_t i = 0;
  std::size_t j = 0;
  double n = 0.0;
  double y = 0.0;
  double t = 0.0;

  bool operator==(const PairCell&) const = default;
};

struct ComparisonTally {
  std::size_t num_areas = 0;
  std::size_t num_groups = 1;
  std::vector<PairCell> cells;  // sorted by (group, i, j), only cells with n > 0

  double total_comparisons() const;
  double total_ties() const;
  // Collapses all groups into group 0.
  ComparisonTally merged() const;
  bool operator==(const ComparisonTally&) const = default;
};

// UNFAMILIAR records are skipped. Throws ValidationError for unknown areas,
// unknown judges (when the grouping has no fallback) or i == j.
ComparisonTally tally(const AreaNetwork& net, const std::vector<ComparisonRecord>& records,
                      const JudgeGrouping& grouping = JudgeGrouping::single_group());

enum class TieMode { kRandomAllocate, kHalfWin, kDiscard };

struct TieTreatment {
  TieMode mode = TieMode::kRandomAllocate;
  std::uint64_t seed = 0;

  std::string describe() const;  // "random:SEED" | "halfwin" | "discard"
  static TieTreatment parse(const std::string& text);
};

// Output always has t == 0. Random allocation draws one fair coin per tied
// comparison from a stream keyed by (seed, group, i, j), so the allocation of a
// given cell does not depend on the rest of the tally.
ComparisonTally treat_ties(const ComparisonTally& input, const TieTreatment& treatment);

// Observed outcome for area_i of every record after the same tie treatment as
// treat_ties: 1, 0, 0.5 (half win) or nullopt (unfamiliar or discarded tie).
// The k-th tie of a cell, in record order, receives the k-th coin of that cell.
std::vector<std::optional<double>> resolve_outcomes(const AreaNetwork& net,
                                                    const std::vector<ComparisonRecord>& records,
                                                    const JudgeGrouping& grouping,
                                                    const TieTreatment& treatment);

}  // namespace bsbt
