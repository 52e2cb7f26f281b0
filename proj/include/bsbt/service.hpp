#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "bsbt/comparisons.hpp"
#include "bsbt/io.hpp"
#include "bsbt/network.hpp"
#include "bsbt/random.hpp"

namespace httplib {
class Server;
}

namespace bsbt {

enum class Judgement { kLeftMoreAffluent, kRightMoreAffluent, kTie, kUnfamiliar };

std::string to_string(Judgement j);
Judgement parse_judgement(const std::string& text);

// Carries the HTTP status the service layer should answer with.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, std::string code, const std::string& message)
      : std::runtime_error(message), status_(status), code_(std::move(code)) {}
  int status() const { return status_; }
  const std::string& code() const { return code_; }

 private:
  int status_;
  std::string code_;
};

struct PairOffer {
  bool done = false;
  std::string pair_id;
  std::string left;  // area ids in presentation order
  std::string right;
};

struct SessionOptions {
  std::optional<std::filesystem::path> log_path;  // JSON lines, replayed on start
  std::uint64_t seed = 1;
  std::function<std::string()> clock;  // ISO-8601 UTC; defaults to the system clock
};

// Judge roster, pending pairs and the append-only judgement log. Operations on
// different judges run concurrently; operations on one judge are serialised.
class SessionState {
 public:
  SessionState(AreaNetwork network, SessionOptions options = {});
  ~SessionState();
  SessionState(const SessionState&) = delete;
  SessionState& operator=(const SessionState&) = delete;

  const AreaNetwork& network() const { return network_; }

  JudgeProfile register_judge(const std::string& judge_id, const std::map<std::string, std::string>& covariates,
                              const std::vector<std::string>& familiarity);
  std::optional<JudgeProfile> judge(const std::string& judge_id) const;
  std::vector<JudgeProfile> roster() const;

  // Uniform over familiar pairs not yet answered and not excluded. Returns the
  // pending pair unchanged until it is answered.
  PairOffer next_pair(const std::string& judge_id);
  ComparisonRecord submit_judgement(const std::string& judge_id, const std::string& pair_id, Judgement judgement);
  std::size_t remaining_pairs(const std::string& judge_id) const;

  std::vector<ComparisonRecord> log_snapshot() const;
  std::string export_log() const;

 private:
  struct Pending {
    std::string pair_id;
    std::string a;  // canonical: network order, a before b
    std::string b;
    bool a_on_left = true;
  };
  struct JudgeState {
    mutable std::mutex mutex;
    JudgeProfile profile;
    std::set<std::pair<std::string, std::string>> answered;
    std::optional<Pending> pending;
    Rng rng;
    std::uint64_t issued = 0;
  };

  std::shared_ptr<JudgeState> find(const std::string& judge_id) const;
  std::pair<std::string, std::string> canonical(const std::string& x, const std::string& y) const;
  std::vector<std::pair<std::string, std::string>> open_pairs(const JudgeState& state) const;
  void append(const nlohmann::json& event, const ComparisonRecord* record);
  void replay(const std::filesystem::path& path);
  void apply_register(const std::string& judge_id, const std::map<std::string, std::string>& covariates,
                      const std::vector<std::string>& familiarity);

  AreaNetwork network_;
  SessionOptions options_;
  mutable std::shared_mutex roster_mutex_;
  std::map<std::string, std::shared_ptr<JudgeState>> judges_;
  mutable std::mutex log_mutex_;
  std::vector<ComparisonRecord> log_;
  int log_fd_ = -1;
};

// Routes: POST /judges, GET /judges/{id}/next-pair, POST /judges/{id}/judgements,
// GET /export/comparisons.csv, GET /areas. `geojson` is passed through on /areas.
void install_routes(httplib::Server& server, SessionState& session, nlohmann::json geojson = nullptr);

}  // namespace bsbt
