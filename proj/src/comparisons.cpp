#include "bsbt/comparisons.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <tuple>

#include "bsbt/errors.hpp"
#include "bsbt/random.hpp"

namespace bsbt {

namespace {

// Fair coin for the k-th tie of a cell; true means the lower-index area wins.
class CellCoins {
 public:
  CellCoins(std::uint64_t seed, const PairCell& cell)
      : rng_(derive_seed(seed, {cell.group, cell.i, cell.j})) {}
  bool next() { return (rng_() >> 63) != 0; }

 private:
  Rng rng_;
};

}  // namespace

std::string to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::kIWins:
      return "I_WINS";
    case Outcome::kJWins:
      return "J_WINS";
    case Outcome::kTie:
      return "TIE";
    case Outcome::kUnfamiliar:
      return "UNFAMILIAR";
  }
  return "UNKNOWN";
}

Outcome parse_outcome(const std::string& text) {
  if (text == "I_WINS") return Outcome::kIWins;
  if (text == "J_WINS") return Outcome::kJWins;
  if (text == "TIE") return Outcome::kTie;
  if (text == "UNFAMILIAR") return Outcome::kUnfamiliar;
  throw ValidationError("unknown outcome '" + text + "'");
}

void validate_record(const AreaNetwork& net, const ComparisonRecord& record) {
  if (record.judge_id.empty()) throw ValidationError("comparison with an empty judge_id");
  if (record.area_i == record.area_j)
    throw ValidationError("comparison of area '" + record.area_i + "' with itself");
  net.require_index(record.area_i);
  net.require_index(record.area_j);
}

std::size_t JudgeGrouping::group(const std::string& judge_id) const {
  auto it = group_of.find(judge_id);
  if (it != group_of.end()) return it->second;
  if (fallback_group) return *fallback_group;
  throw ValidationError("judge '" + judge_id + "' has no group");
}

double ComparisonTally::total_comparisons() const {
  double total = 0.0;
  for (const auto& c : cells) total += c.n;
  return total;
}

double ComparisonTally::total_ties() const {
  double total = 0.0;
  for (const auto& c : cells) total += c.t;
  return total;
}

ComparisonTally ComparisonTally::merged() const {
  std::map<std::pair<std::size_t, std::size_t>, PairCell> acc;
  for (const auto& c : cells) {
    auto& m = acc[{c.i, c.j}];
    m.i = c.i;
    m.j = c.j;
    m.n += c.n;
    m.y += c.y;
    m.t += c.t;
  }
  ComparisonTally out{num_areas, 1, {}};
  for (auto& [key, cell] : acc) out.cells.push_back(cell);
  return out;
}

ComparisonTally tally(const AreaNetwork& net, const std::vector<ComparisonRecord>& records,
                      const JudgeGrouping& grouping) {
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, PairCell> acc;
  for (std::size_t row = 0; row < records.size(); ++row) {
    const auto& r = records[row];
    try {
      validate_record(net, r);
    } catch (const ValidationError& e) {
      throw ValidationError("comparison " + std::to_string(row + 1) + ": " + e.what());
    }
    if (r.outcome == Outcome::kUnfamiliar) continue;
    const std::size_t g = grouping.group(r.judge_id);
    if (g >= grouping.num_groups)
      throw ValidationError("judge '" + r.judge_id + "' mapped to out-of-range group");
    std::size_t a = net.require_index(r.area_i);
    std::size_t b = net.require_index(r.area_j);
    bool a_wins = r.outcome == Outcome::kIWins;
    if (a > b) {
      std::swap(a, b);
      a_wins = r.outcome == Outcome::kJWins;
    }
    auto& cell = acc[{g, a, b}];
    cell.group = g;
    cell.i = a;
    cell.j = b;
    cell.n += 1.0;
    if (r.outcome == Outcome::kTie)
      cell.t += 1.0;
    else if (a_wins)
      cell.y += 1.0;
  }
  ComparisonTally out{net.size(), grouping.num_groups, {}};
  out.cells.reserve(acc.size());
  for (auto& [key, cell] : acc) out.cells.push_back(cell);
  return out;
}

std::string TieTreatment::describe() const {
  switch (mode) {
    case TieMode::kRandomAllocate:
      return "random:" + std::to_string(seed);
    case TieMode::kHalfWin:
      return "halfwin";
    case TieMode::kDiscard:
      return "discard";
  }
  return "unknown";
}

TieTreatment TieTreatment::parse(const std::string& text) {
  if (text == "halfwin") return {TieMode::kHalfWin, 0};
  if (text == "discard") return {TieMode::kDiscard, 0};
  const std::string prefix = "random:";
  if (text.rfind(prefix, 0) == 0) {
    std::uint64_t seed = 0;
    const char* first = text.data() + prefix.size();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, seed);
    if (ec == std::errc() && ptr == last && first != last) return {TieMode::kRandomAllocate, seed};
  }
  throw ValidationError("tie treatment must be random:SEED, halfwin or discard (got '" + text + "')");
}

ComparisonTally treat_ties(const ComparisonTally& input, const TieTreatment& treatment) {
  ComparisonTally out = input;
  out.cells.clear();
  for (const auto& c : input.cells) {
    PairCell cell = c;
    switch (treatment.mode) {
      case TieMode::kRandomAllocate: {
        CellCoins coins(treatment.seed, c);
        const auto ties = static_cast<long>(c.t);
        for (long k = 0; k < ties; ++k)
          if (coins.next()) cell.y += 1.0;
        break;
      }
      case TieMode::kHalfWin:
        cell.y += 0.5 * c.t;
        break;
      case TieMode::kDiscard:
        cell.n -= c.t;
        break;
    }
    cell.t = 0.0;
    if (cell.n > 0.0) out.cells.push_back(cell);
  }
  return out;
}

std::vector<std::optional<double>> resolve_outcomes(const AreaNetwork& net,
                                                    const std::vector<ComparisonRecord>& records,
                                                    const JudgeGrouping& grouping,
                                                    const TieTreatment& treatment) {
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, CellCoins> coins;
  std::vector<std::optional<double>> out(records.size());
  for (std::size_t row = 0; row < records.size(); ++row) {
    const auto& r = records[row];
    validate_record(net, r);
    switch (r.outcome) {
      case Outcome::kIWins:
        out[row] = 1.0;
        break;
      case Outcome::kJWins:
        out[row] = 0.0;
        break;
      case Outcome::kUnfamiliar:
        break;
      case Outcome::kTie: {
        if (treatment.mode == TieMode::kDiscard) break;
        if (treatment.mode == TieMode::kHalfWin) {
          out[row] = 0.5;
          break;
        }
        const std::size_t a = net.require_index(r.area_i);
        const std::size_t b = net.require_index(r.area_j);
        PairCell key;
        key.group = grouping.group(r.judge_id);
        key.i = std::min(a, b);
        key.j = std::max(a, b);
        auto it = coins.find({key.group, key.i, key.j});
        if (it == coins.end())
          it = coins.emplace(std::make_tuple(key.group, key.i, key.j), CellCoins(treatment.seed, key))
                   .first;
        const bool lower_wins = it->second.next();
        const bool record_i_wins = (a < b) == lower_wins;
        out[row] = record_i_wins ? 1.0 : 0.0;
        break;
      }
    }
  }
  return out;
}

}  // namespace bsbt
