#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "becsim/channel.hpp"
#include "becsim/coding.hpp"
#include "becsim/core.hpp"
#include "becsim/movement.hpp"
#include "becsim/scheduler.hpp"

namespace becsim::sim {

struct Monitors {
  bool audit = true;
  bool decodability = true;
  bool overhead = true;
  bool progress = true;

  bool any() const { return audit || decodability || overhead || progress; }
};

enum class SchedulerKind { kMaxWeight, kRandom };
enum class RetransmitMode { kSticky, kReselect };

struct SimConfig {
  int n_users = 2;
  std::uint64_t horizon = 1000;
  channel::ErasureModel erasure = channel::ErasureModel::iid(2, 0.5);
  channel::ArrivalModel arrivals = channel::ArrivalModel::bernoulli({0.3, 0.3});
  coding::Restriction restriction = coding::Restriction::kFull;
  std::uint64_t seed = 1;
  Monitors monitors{};
  bool flush_on_empty = true;
  SchedulerKind scheduler = SchedulerKind::kMaxWeight;
  RetransmitMode retransmit = RetransmitMode::kSticky;
  // Keep every `decimate`-th slot in the trace; 0 keeps none.
  std::uint32_t decimate = 1;
  // Window for the Q̂ window means in the summary; 0 disables them.
  std::uint64_t window = 0;
  // Records the movement plan of every slot as JSON.
  bool trace_log = false;

  void validate() const;
};

struct SlotMetrics {
  std::uint64_t t = 0;
  std::uint64_t q_hat = 0;
  std::uint64_t v_hat = 0;
  std::vector<std::uint64_t> delivered{};  // cumulative per user
  std::string control{};                   // empty on idle slots
  std::string rpm_case{};
  bool retransmit = false;
  bool idle = false;
  bool flush = false;
  std::size_t overhead = 0;
};

struct RunSummary {
  std::uint64_t slots = 0;
  std::uint64_t arrivals = 0;
  std::uint64_t decodings = 0;
  std::uint64_t final_q_hat = 0;
  std::uint64_t final_v_hat = 0;
  std::uint64_t max_q_hat = 0;
  double mean_q_hat = 0.0;
  std::uint64_t idle_slots = 0;
  std::uint64_t flushes = 0;
  std::uint64_t erased_slots = 0;
  std::uint64_t sticky_retransmissions = 0;
  std::uint64_t decode_checks = 0;
  std::uint64_t audits = 0;
  std::vector<std::uint64_t> delivered{};
  // Transmitted composites by number of constituents.
  std::map<std::size_t, std::uint64_t> overhead_histogram{};
  // Index = level; largest constituent count seen.
  std::vector<std::size_t> max_stored_by_level{};
  std::vector<std::size_t> max_transmitted_by_level{};
  std::map<std::string, std::uint64_t> rpm_cases{};
  std::vector<double> window_means{};
};

struct RunResult {
  RunSummary summary{};
  std::vector<SlotMetrics> trace{};
  std::vector<nlohmann::json> log{};
};

// Shared, immutable per-model context so repeated runs skip catalog and
// table derivation.
struct Context {
  coding::ControlCatalog catalog{};
  scheduler::TransitionTable table{};
};
std::shared_ptr<const Context> make_context(const SimConfig& config);

// Throws Error(kMonitor) naming the slot on the first invariant violation.
RunResult run(const SimConfig& config, const Context* context = nullptr);

enum class Verdict { kBounded, kGrowing, kInconclusive };
std::string to_string(Verdict v);

struct ProbeConfig {
  SimConfig base{};
  std::vector<double> ray{};
  std::vector<double> scales{};
  int seeds = 5;
  std::uint64_t window = 100000;
  double slope_threshold = 1e-3;
  // 0: BECSIM_THREADS or hardware concurrency.
  unsigned threads = 0;
};

struct ScaleVerdict {
  double scale = 0.0;
  std::vector<double> rates{};
  std::vector<double> slopes{};
  std::vector<double> final_means{};
  int bounded_votes = 0;
  int growing_votes = 0;
  Verdict verdict = Verdict::kInconclusive;
};

// Rates are scale·ray/outer_margin(ray). Each seed runs 3 windows; the first
// is warmup and the slope compares the means of the last two.
std::vector<ScaleVerdict> stability_probe(const ProbeConfig& config);

unsigned worker_count(unsigned requested);

// Re-executes a slot log from `run` with trace_log set on a fresh network,
// comparing every plan and auditing every slot.
struct ReplayReport {
  std::uint64_t slots = 0;
  std::vector<std::string> mismatches{};
  std::vector<std::string> violations{};
  bool ok() const { return mismatches.empty() && violations.empty(); }
};
ReplayReport replay_log(const nlohmann::json& log, int n_users);
nlohmann::json to_json(const ReplayReport& report);

SimConfig config_from_json(const nlohmann::json& j);
ProbeConfig probe_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SimConfig& config);
nlohmann::json to_json(const RunSummary& summary);
nlohmann::json to_json(const std::vector<ScaleVerdict>& verdicts);
std::string trace_csv(const RunResult& result);

}  // namespace becsim::sim
