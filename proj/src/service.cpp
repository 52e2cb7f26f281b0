#include "bsbt/service.hpp"

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <fcntl.h>
#include <unistd.h>

#include "bsbt/errors.hpp"

namespace bsbt {

using nlohmann::json;

std::string to_string(Judgement j) {
  switch (j) {
    case Judgement::kLeftMoreAffluent:
      return "LEFT_MORE_AFFLUENT";
    case Judgement::kRightMoreAffluent:
      return "RIGHT_MORE_AFFLUENT";
    case Judgement::kTie:
      return "TIE";
    case Judgement::kUnfamiliar:
      return "UNFAMILIAR";
  }
  return "UNKNOWN";
}

Judgement parse_judgement(const std::string& text) {
  if (text == "LEFT_MORE_AFFLUENT") return Judgement::kLeftMoreAffluent;
  if (text == "RIGHT_MORE_AFFLUENT") return Judgement::kRightMoreAffluent;
  if (text == "TIE") return Judgement::kTie;
  if (text == "UNFAMILIAR") return Judgement::kUnfamiliar;
  throw ServiceError(400, "bad_outcome", "unknown outcome '" + text + "'");
}

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[40];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

// FNV-1a, so a judge's scheduling stream does not depend on the platform's std::hash.
std::uint64_t stable_hash(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

SessionState::SessionState(AreaNetwork network, SessionOptions options)
    : network_(std::move(network)), options_(std::move(options)) {
  if (!options_.clock) options_.clock = utc_now;
  if (options_.log_path) {
    if (std::filesystem::exists(*options_.log_path)) replay(*options_.log_path);
    log_fd_ = ::open(options_.log_path->c_str(), O_WRONLY | O_APPEND | O_CREAT, 0644);
    if (log_fd_ < 0)
      throw RuntimeFailure("cannot open judgement log " + options_.log_path->string() + ": " + std::strerror(errno));
  }
}

SessionState::~SessionState() {
  if (log_fd_ >= 0) ::close(log_fd_);
}

std::pair<std::string, std::string> SessionState::canonical(const std::string& x, const std::string& y) const {
  return network_.require_index(x) < network_.require_index(y) ? std::pair{x, y} : std::pair{y, x};
}

void SessionState::append(const json& event, const ComparisonRecord* record) {
  std::lock_guard lock(log_mutex_);
  if (log_fd_ >= 0) {
    const std::string line = event.dump() + "\n";
    std::size_t written = 0;
    while (written < line.size()) {
      const ssize_t n = ::write(log_fd_, line.data() + written, line.size() - written);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ServiceError(500, "log_write_failed", std::string("judgement log write failed: ") + std::strerror(errno));
      }
      written += static_cast<std::size_t>(n);
    }
    if (::fsync(log_fd_) != 0)
      throw ServiceError(500, "log_write_failed", std::string("judgement log fsync failed: ") + std::strerror(errno));
  }
  if (record) log_.push_back(*record);
}

void SessionState::apply_register(const std::string& judge_id, const std::map<std::string, std::string>& covariates,
                                  const std::vector<std::string>& familiarity) {
  if (judge_id.empty()) throw ServiceError(400, "bad_request", "judge_id must not be empty");
  if (judges_.count(judge_id)) throw ServiceError(409, "duplicate_judge", "judge '" + judge_id + "' is already registered");
  auto state = std::make_shared<JudgeState>();
  state->profile.judge_id = judge_id;
  state->profile.covariates = covariates;
  for (const auto& id : familiarity) {
    if (!network_.index_of(id)) throw ServiceError(400, "unknown_area", "unknown area '" + id + "'");
    state->profile.familiarity.insert(id);
  }
  if (state->profile.familiarity.size() < 2)
    throw ServiceError(400, "too_few_areas", "familiarity must list at least 2 distinct areas");
  state->rng.seed(derive_seed(options_.seed, {stable_hash(judge_id)}));
  judges_.emplace(judge_id, std::move(state));
}

JudgeProfile SessionState::register_judge(const std::string& judge_id, const std::map<std::string, std::string>& covariates,
                                          const std::vector<std::string>& familiarity) {
  std::unique_lock lock(roster_mutex_);
  apply_register(judge_id, covariates, familiarity);
  try {
    append(json{{"type", "register"}, {"judge_id", judge_id}, {"covariates", covariates}, {"familiarity", familiarity}},
           nullptr);
  } catch (...) {
    judges_.erase(judge_id);
    throw;
  }
  return judges_.at(judge_id)->profile;
}

std::shared_ptr<SessionState::JudgeState> SessionState::find(const std::string& judge_id) const {
  std::shared_lock lock(roster_mutex_);
  auto it = judges_.find(judge_id);
  if (it == judges_.end()) throw ServiceError(404, "unknown_judge", "judge '" + judge_id + "' is not registered");
  return it->second;
}

std::optional<JudgeProfile> SessionState::judge(const std::string& judge_id) const {
  std::shared_ptr<JudgeState> state;
  {
    std::shared_lock lock(roster_mutex_);
    auto it = judges_.find(judge_id);
    if (it == judges_.end()) return std::nullopt;
    state = it->second;
  }
  std::lock_guard lock(state->mutex);
  return state->profile;
}

std::vector<JudgeProfile> SessionState::roster() const {
  std::vector<std::shared_ptr<JudgeState>> states;
  {
    std::shared_lock lock(roster_mutex_);
    for (const auto& [id, s] : judges_) states.push_back(s);
  }
  std::vector<JudgeProfile> out;
  for (const auto& s : states) {
    std::lock_guard lock(s->mutex);
    out.push_back(s->profile);
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> SessionState::open_pairs(const JudgeState& state) const {
  std::vector<std::string> fam(state.profile.familiarity.begin(), state.profile.familiarity.end());
  std::sort(fam.begin(), fam.end(), [&](const std::string& x, const std::string& y) {
    return network_.require_index(x) < network_.require_index(y);
  });
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < fam.size(); ++i)
    for (std::size_t j = i + 1; j < fam.size(); ++j) {
      std::pair<std::string, std::string> p{fam[i], fam[j]};
      if (state.answered.count(p) || state.profile.exclusion_pairs.count(p)) continue;
      out.push_back(std::move(p));
    }
  return out;
}

std::size_t SessionState::remaining_pairs(const std::string& judge_id) const {
  auto state = find(judge_id);
  std::lock_guard lock(state->mutex);
  return open_pairs(*state).size();
}

PairOffer SessionState::next_pair(const std::string& judge_id) {
  auto state = find(judge_id);
  std::lock_guard lock(state->mutex);
  if (!state->pending) {
    const auto open = open_pairs(*state);
    if (open.empty()) return PairOffer{true, {}, {}, {}};
    std::uniform_int_distribution<std::size_t> pick(0, open.size() - 1);
    const auto& p = open[pick(state->rng)];
    const bool a_on_left = (state->rng() >> 63) != 0;
    state->pending = Pending{judge_id + ":" + std::to_string(++state->issued), p.first, p.second, a_on_left};
  }
  const auto& pd = *state->pending;
  return PairOffer{false, pd.pair_id, pd.a_on_left ? pd.a : pd.b, pd.a_on_left ? pd.b : pd.a};
}

ComparisonRecord SessionState::submit_judgement(const std::string& judge_id, const std::string& pair_id,
                                                Judgement judgement) {
  auto state = find(judge_id);
  std::lock_guard lock(state->mutex);
  if (!state->pending) throw ServiceError(409, "no_pending_pair", "judge '" + judge_id + "' has no pending pair");
  const Pending pd = *state->pending;
  if (pd.pair_id != pair_id)
    throw ServiceError(409, "stale_pair", "pair '" + pair_id + "' is not the pending pair for judge '" + judge_id + "'");

  Outcome outcome = Outcome::kTie;
  switch (judgement) {
    case Judgement::kLeftMoreAffluent:
      outcome = pd.a_on_left ? Outcome::kIWins : Outcome::kJWins;
      break;
    case Judgement::kRightMoreAffluent:
      outcome = pd.a_on_left ? Outcome::kJWins : Outcome::kIWins;
      break;
    case Judgement::kTie:
      outcome = Outcome::kTie;
      break;
    case Judgement::kUnfamiliar:
      outcome = Outcome::kUnfamiliar;
      break;
  }
  ComparisonRecord record{judge_id, pd.a, pd.b, outcome, options_.clock()};
  append(json{{"type", "judgement"},
              {"judge_id", record.judge_id},
              {"area_i", record.area_i},
              {"area_j", record.area_j},
              {"outcome", to_string(record.outcome)},
              {"timestamp", record.timestamp}},
         &record);
  // State changes only after the record is durable.
  state->answered.insert({pd.a, pd.b});
  if (outcome == Outcome::kUnfamiliar) state->profile.exclusion_pairs.insert({pd.a, pd.b});
  state->pending.reset();
  return record;
}

std::vector<ComparisonRecord> SessionState::log_snapshot() const {
  std::lock_guard lock(log_mutex_);
  return log_;
}

std::string SessionState::export_log() const { return comparisons_csv(log_snapshot()); }

void SessionState::replay(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::size_t end = nl == std::string::npos ? text.size() : nl;
    const std::string line = text.substr(pos, end - pos);
    const std::size_t line_start = pos;
    pos = nl == std::string::npos ? text.size() : nl + 1;
    ++line_no;
    if (line.empty()) continue;
    json event;
    try {
      event = json::parse(line);
    } catch (const json::exception&) {
      // A crash can leave a torn final line; drop it so new appends start
      // on a fresh line. Anything earlier is corruption.
      if (pos >= text.size()) {
        std::filesystem::resize_file(path, line_start);
        break;
      }
      throw RuntimeFailure(path.string() + " line " + std::to_string(line_no) + ": unparsable event");
    }
    try {
      const std::string type = event.at("type").get<std::string>();
      if (type == "register") {
        apply_register(event.at("judge_id").get<std::string>(),
                       event.at("covariates").get<std::map<std::string, std::string>>(),
                       event.at("familiarity").get<std::vector<std::string>>());
      } else if (type == "judgement") {
        ComparisonRecord r{event.at("judge_id").get<std::string>(), event.at("area_i").get<std::string>(),
                           event.at("area_j").get<std::string>(), parse_outcome(event.at("outcome").get<std::string>()),
                           event.value("timestamp", "")};
        validate_record(network_, r);
        auto it = judges_.find(r.judge_id);
        if (it == judges_.end()) throw ValidationError("judgement for unregistered judge '" + r.judge_id + "'");
        const auto p = canonical(r.area_i, r.area_j);
        it->second->answered.insert(p);
        if (r.outcome == Outcome::kUnfamiliar) it->second->profile.exclusion_pairs.insert(p);
        log_.push_back(std::move(r));
      } else {
        throw ValidationError("unknown event type '" + type + "'");
      }
    } catch (const std::exception& e) {
      throw RuntimeFailure(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

}  // namespace bsbt
