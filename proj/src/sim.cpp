#include "becsim/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <sstream>
#include <thread>

#include "becsim/regions.hpp"

namespace becsim::sim {

using core::UserSet;

namespace {

[[noreturn]] void monitor_failure(std::uint64_t t, const std::string& what) {
  throw Error(Error::Code::kMonitor, "slot " + std::to_string(t) + ": " + what);
}

int max_level(const coding::ControlSpec& spec) {
  int k = 0;
  for (const auto& q : spec.pairs()) k = std::max(k, q.level());
  return k;
}

void grow_to(std::vector<std::size_t>& v, std::size_t index) {
  if (v.size() <= index) v.resize(index + 1, 0);
}

void track_stored(const core::NetworkState& state, RunSummary& s) {
  for (const auto& [index, packets] : state.real_queues()) {
    const auto level = static_cast<std::size_t>(index.level());
    for (const auto& p : packets) {
      grow_to(s.max_stored_by_level, level);
      s.max_stored_by_level[level] = std::max(s.max_stored_by_level[level], p.constituents.size());
    }
  }
}

}  // namespace

void SimConfig::validate() const {
  if (n_users < 1 || n_users > core::kMaxUsers) {
    throw Error(Error::Code::kConfig, "n_users must lie in [1, 16]");
  }
  if (horizon < 1) throw Error(Error::Code::kConfig, "horizon must be >= 1");
  if (erasure.n_users() != n_users) {
    throw Error(Error::Code::kConfig, "erasure model has the wrong user count");
  }
  if (arrivals.n_users() != n_users) {
    throw Error(Error::Code::kConfig, "arrival model has the wrong user count");
  }
  if (restriction == coding::Restriction::kTable8 && n_users != 4) {
    throw Error(Error::Code::kConfig, "the table8 catalog is defined for 4 users only");
  }
}

std::shared_ptr<const Context> make_context(const SimConfig& config) {
  auto ctx = std::make_shared<Context>();
  ctx->catalog = coding::enumerate_controls(config.n_users, config.restriction);
  ctx->table = scheduler::derive_table(ctx->catalog, config.erasure);
  return ctx;
}

RunResult run(const SimConfig& config, const Context* context) {
  config.validate();
  std::shared_ptr<const Context> owned;
  std::optional<scheduler::MaxWeightScheduler> max_weight;
  if (config.scheduler == SchedulerKind::kMaxWeight) {
    if (context == nullptr) {
      owned = make_context(config);
      context = owned.get();
    }
    max_weight.emplace(context->catalog, context->table);
  }

  const int n = config.n_users;
  const Monitors& mon = config.monitors;
  core::NetworkState state(n, mon.decodability);
  auto arrival_rng = channel::make_rng(config.seed, channel::Stream::kArrivals);
  auto erasure_rng = channel::make_rng(config.seed, channel::Stream::kErasures);
  auto policy_rng = channel::make_rng(config.seed, channel::Stream::kPolicy);

  RunResult result;
  RunSummary& s = result.summary;
  std::optional<coding::ControlSpec> pending;
  std::vector<core::NativePacketId> pending_composite;
  bool dirty_receivers = false;
  std::vector<std::uint32_t> batch;
  long double q_total = 0.0L;
  long double window_total = 0.0L;
  std::uint64_t window_fill = 0;

  for (std::uint64_t t = 0; t < config.horizon; ++t) {
    SlotMetrics m;
    m.t = t;
    nlohmann::json rec;
    std::optional<coding::ControlSpec> spec;
    bool sticky = false;
    if (!state.empty()) {
      if (pending && config.retransmit == RetransmitMode::kSticky) {
        spec = pending;
        sticky = true;
      } else if (max_weight) {
        if (auto idx = max_weight->select(state)) spec = context->catalog.controls[*idx];
      } else {
        spec = scheduler::random_control(state, policy_rng);
      }
    }

    if (!spec) {
      m.idle = true;
      ++s.idle_slots;
      if (state.empty() && config.flush_on_empty && dirty_receivers) {
        state.flush_receivers();
        dirty_receivers = false;
        m.flush = true;
        ++s.flushes;
      }
    } else {
      const UserSet received = config.erasure.sample(erasure_rng);
      const UserSet destinations = coding::destinations_of(*spec);
      auto tx = movement::transmit(state, *spec, received);
      dirty_receivers = true;
      m.control = spec->label();
      m.rpm_case = movement::to_string(tx.plan.rpm_case);
      m.retransmit = tx.plan.retransmit;
      m.overhead = tx.composite.size();
      ++s.rpm_cases[m.rpm_case];
      ++s.overhead_histogram[m.overhead];
      const auto level = static_cast<std::size_t>(max_level(*spec));
      grow_to(s.max_transmitted_by_level, level);
      s.max_transmitted_by_level[level] = std::max(s.max_transmitted_by_level[level], m.overhead);

      if (sticky) {
        ++s.sticky_retransmissions;
        if (tx.composite != pending_composite) {
          monitor_failure(t, "retransmitted composite differs from the erased one");
        }
      }
      if (mon.decodability) {
        s.decode_checks += static_cast<std::uint64_t>((received & destinations).size());
        if (!tx.violations.empty()) monitor_failure(t, tx.violations.front());
      }
      if (mon.overhead && m.overhead > movement::factorial(static_cast<int>(level))) {
        monitor_failure(t, "composite of " + m.control + " carries " + std::to_string(m.overhead) +
                               " ids");
      }
      if (mon.progress) {
        const auto issues = movement::check_progress(tx.plan);
        if (!issues.empty()) monitor_failure(t, issues.front());
      }
      if (tx.plan.retransmit) {
        ++s.erased_slots;
        pending = spec;
        pending_composite = std::move(tx.composite);
      } else {
        pending.reset();
      }
      if (config.trace_log) {
        rec = movement::to_json(tx.plan);
        rec["control"] = coding::to_json(*spec);
      }
    }

    // Arrivals enter after the transmission.
    config.arrivals.sample(arrival_rng, batch);
    for (int u = 0; u < n; ++u) {
      for (std::uint32_t a = 0; a < batch[static_cast<std::size_t>(u)]; ++a) state.admit(u);
    }
    if (config.trace_log) {
      rec["t"] = t;
      if (m.idle) {
        rec["idle"] = true;
        rec["flush"] = m.flush;
      }
      rec["arrivals"] = batch;
      result.log.push_back(std::move(rec));
    }

    if (mon.audit) {
      ++s.audits;
      const auto violations = core::audit_state(state);
      if (!violations.empty()) {
        monitor_failure(t, core::to_string(violations.front().kind) + " at " +
                               violations.front().where);
      }
    }
    if (mon.overhead) {
      const auto issues = movement::check_stored_overhead(state);
      if (!issues.empty()) monitor_failure(t, issues.front());
      track_stored(state, s);
    }

    m.q_hat = state.q_hat();
    m.v_hat = state.v_hat();
    m.delivered = state.delivered();
    s.max_q_hat = std::max(s.max_q_hat, m.q_hat);
    q_total += static_cast<long double>(m.q_hat);
    if (config.window > 0) {
      window_total += static_cast<long double>(m.q_hat);
      if (++window_fill == config.window) {
        s.window_means.push_back(static_cast<double>(window_total / config.window));
        window_total = 0.0L;
        window_fill = 0;
      }
    }
    if (config.decimate > 0 && t % config.decimate == 0) result.trace.push_back(std::move(m));
  }

  s.slots = config.horizon;
  s.arrivals = state.arrivals();
  s.decodings = state.decodings();
  s.final_q_hat = state.q_hat();
  s.final_v_hat = state.v_hat();
  s.mean_q_hat = static_cast<double>(q_total / config.horizon);
  s.delivered = state.delivered();
  if (mon.overhead) track_stored(state, s);
  return result;
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::kBounded: return "bounded";
    case Verdict::kGrowing: return "growing";
    case Verdict::kInconclusive: return "inconclusive";
  }
  return "?";
}

unsigned worker_count(unsigned requested) {
  unsigned n = requested > 0 ? requested : std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("BECSIM_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap > 0) n = std::min(n, static_cast<unsigned>(cap));
  }
  return std::max(1u, n);
}

std::vector<ScaleVerdict> stability_probe(const ProbeConfig& config) {
  const SimConfig& base = config.base;
  base.validate();
  if (static_cast<int>(config.ray.size()) != base.n_users) {
    throw Error(Error::Code::kConfig, "probe ray needs one component per user");
  }
  if (config.seeds < 1) throw Error(Error::Code::kConfig, "probe needs at least one seed");
  if (config.window < 1) throw Error(Error::Code::kConfig, "probe window must be >= 1");
  const std::string mode = base.arrivals.mode();
  if (mode != "bernoulli" && mode != "poisson") {
    throw Error(Error::Code::kConfig, "probe needs bernoulli or poisson arrivals");
  }
  const double outer = regions::outer_bound_margin(config.ray, base.erasure).margin;
  if (!(outer > 0.0)) throw Error(Error::Code::kConfig, "probe ray must be nonzero");

  std::vector<ScaleVerdict> out(config.scales.size());
  std::vector<SimConfig> jobs;
  for (std::size_t k = 0; k < config.scales.size(); ++k) {
    out[k].scale = config.scales[k];
    for (double r : config.ray) out[k].rates.push_back(config.scales[k] * r / outer);
    for (int seed = 0; seed < config.seeds; ++seed) {
      SimConfig c = base;
      c.arrivals = mode == "bernoulli" ? channel::ArrivalModel::bernoulli(out[k].rates)
                                       : channel::ArrivalModel::poisson(out[k].rates);
      c.seed = base.seed + static_cast<std::uint64_t>(seed);
      c.horizon = 3 * config.window;
      c.window = config.window;
      c.monitors = Monitors{false, false, false, false};
      c.decimate = 0;
      c.trace_log = false;
      jobs.push_back(std::move(c));
    }
  }

  std::shared_ptr<const Context> ctx;
  if (base.scheduler == SchedulerKind::kMaxWeight) ctx = make_context(base);
  std::vector<std::vector<double>> means(jobs.size());
  std::vector<std::string> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      try {
        means[j] = run(jobs[j], ctx.get()).summary.window_means;
      } catch (const std::exception& e) {
        errors[j] = e.what();
      }
    }
  };
  const unsigned threads = std::min<unsigned>(worker_count(config.threads),
                                              static_cast<unsigned>(std::max<std::size_t>(1, jobs.size())));
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < threads; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (const auto& e : errors) {
    if (!e.empty()) throw Error(Error::Code::kInternal, "probe run failed: " + e);
  }

  for (std::size_t k = 0; k < out.size(); ++k) {
    for (int seed = 0; seed < config.seeds; ++seed) {
      const auto& w = means[k * static_cast<std::size_t>(config.seeds) + static_cast<std::size_t>(seed)];
      const double slope = (w[2] - w[1]) / static_cast<double>(config.window);
      out[k].slopes.push_back(slope);
      out[k].final_means.push_back(w[2]);
      if (slope < config.slope_threshold) {
        ++out[k].bounded_votes;
      } else {
        ++out[k].growing_votes;
      }
    }
    if (2 * out[k].bounded_votes > config.seeds) {
      out[k].verdict = Verdict::kBounded;
    } else if (2 * out[k].growing_votes > config.seeds) {
      out[k].verdict = Verdict::kGrowing;
    }
  }
  return out;
}

namespace {

SchedulerKind scheduler_from_string(const std::string& s) {
  if (s == "max-weight") return SchedulerKind::kMaxWeight;
  if (s == "random") return SchedulerKind::kRandom;
  throw Error(Error::Code::kConfig, "unknown scheduler '" + s + "'");
}

RetransmitMode retransmit_from_string(const std::string& s) {
  if (s == "sticky") return RetransmitMode::kSticky;
  if (s == "reselect") return RetransmitMode::kReselect;
  throw Error(Error::Code::kConfig, "unknown retransmit mode '" + s + "'");
}

}  // namespace

SimConfig config_from_json(const nlohmann::json& j) {
  try {
    SimConfig c;
    c.n_users = j.value("n_users", 2);
    if (c.n_users < 1 || c.n_users > core::kMaxUsers) {
      throw Error(Error::Code::kConfig, "n_users must lie in [1, 16]");
    }
    c.horizon = j.value("horizon", std::uint64_t{1000});
    c.seed = j.value("seed", std::uint64_t{1});
    c.erasure = j.contains("erasure") ? channel::erasure_from_json(j.at("erasure"), c.n_users)
                                      : channel::ErasureModel::iid(c.n_users, 0.5);
    c.arrivals = j.contains("arrivals")
                     ? channel::arrivals_from_json(j.at("arrivals"), c.n_users)
                     : channel::ArrivalModel::bernoulli(
                           std::vector<double>(static_cast<std::size_t>(c.n_users), 0.0));
    c.restriction = coding::restriction_from_string(j.value("restriction", std::string("full")));
    c.scheduler = scheduler_from_string(j.value("scheduler", std::string("max-weight")));
    c.retransmit = retransmit_from_string(j.value("retransmit", std::string("sticky")));
    c.flush_on_empty = j.value("flush_on_empty", true);
    c.decimate = j.value("decimate", std::uint32_t{1});
    c.window = j.value("window", std::uint64_t{0});
    c.trace_log = j.value("trace_log", false);
    if (j.contains("monitors")) {
      const auto& m = j.at("monitors");
      c.monitors.audit = m.value("audit", true);
      c.monitors.decodability = m.value("decodability", true);
      c.monitors.overhead = m.value("overhead", true);
      c.monitors.progress = m.value("progress", true);
    }
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Error::Code::kConfig, std::string("bad config: ") + e.what());
  }
}

ProbeConfig probe_from_json(const nlohmann::json& j) {
  ProbeConfig p;
  p.base = config_from_json(j);
  try {
    const nlohmann::json probe = j.value("probe", nlohmann::json::object());
    p.ray = probe.value("ray", std::vector<double>(static_cast<std::size_t>(p.base.n_users), 1.0));
    p.scales = probe.value("scales", std::vector<double>{0.5, 0.9, 1.1, 1.5});
    p.seeds = probe.value("seeds", 5);
    p.window = probe.value("window", std::uint64_t{100000});
    p.slope_threshold = probe.value("slope_threshold", 1e-3);
    p.threads = probe.value("threads", 0u);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Error::Code::kConfig, std::string("bad probe config: ") + e.what());
  }
  return p;
}

nlohmann::json to_json(const SimConfig& c) {
  return {{"n_users", c.n_users},
          {"horizon", c.horizon},
          {"seed", c.seed},
          {"erasure", channel::to_json(c.erasure)},
          {"arrivals", channel::to_json(c.arrivals)},
          {"restriction", coding::to_string(c.restriction)},
          {"scheduler", c.scheduler == SchedulerKind::kMaxWeight ? "max-weight" : "random"},
          {"retransmit", c.retransmit == RetransmitMode::kSticky ? "sticky" : "reselect"},
          {"flush_on_empty", c.flush_on_empty},
          {"decimate", c.decimate},
          {"window", c.window},
          {"monitors",
           {{"audit", c.monitors.audit},
            {"decodability", c.monitors.decodability},
            {"overhead", c.monitors.overhead},
            {"progress", c.monitors.progress}}}};
}

nlohmann::json to_json(const RunSummary& s) {
  nlohmann::json hist = nlohmann::json::object();
  for (const auto& [k, v] : s.overhead_histogram) hist[std::to_string(k)] = v;
  return {{"slots", s.slots},
          {"arrivals", s.arrivals},
          {"decodings", s.decodings},
          {"final_q_hat", s.final_q_hat},
          {"final_v_hat", s.final_v_hat},
          {"max_q_hat", s.max_q_hat},
          {"mean_q_hat", s.mean_q_hat},
          {"idle_slots", s.idle_slots},
          {"flushes", s.flushes},
          {"erased_slots", s.erased_slots},
          {"sticky_retransmissions", s.sticky_retransmissions},
          {"decode_checks", s.decode_checks},
          {"audits", s.audits},
          {"delivered", s.delivered},
          {"overhead_histogram", hist},
          {"max_stored_by_level", s.max_stored_by_level},
          {"max_transmitted_by_level", s.max_transmitted_by_level},
          {"rpm_cases", s.rpm_cases},
          {"window_means", s.window_means}};
}

nlohmann::json to_json(const std::vector<ScaleVerdict>& verdicts) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& v : verdicts) {
    out.push_back({{"scale", v.scale},
                   {"rates", v.rates},
                   {"slopes", v.slopes},
                   {"final_means", v.final_means},
                   {"bounded_votes", v.bounded_votes},
                   {"growing_votes", v.growing_votes},
                   {"verdict", to_string(v.verdict)}});
  }
  return out;
}

std::string trace_csv(const RunResult& result) {
  std::ostringstream os;
  const std::size_t users = result.summary.delivered.size();
  os << "t,q_hat,v_hat";
  for (std::size_t u = 0; u < users; ++u) os << ",delivered_" << u + 1;
  os << ",control,rpm_case,retransmit,idle,flush,overhead\n";
  for (const auto& m : result.trace) {
    os << m.t << ',' << m.q_hat << ',' << m.v_hat;
    for (std::size_t u = 0; u < users; ++u) os << ',' << (u < m.delivered.size() ? m.delivered[u] : 0);
    os << ",\"" << m.control << "\"," << m.rpm_case << ',' << m.retransmit << ',' << m.idle << ','
       << m.flush << ',' << m.overhead << '\n';
  }
  return os.str();
}

}  // namespace becsim::sim

namespace becsim::sim {

ReplayReport replay_log(const nlohmann::json& log, int n_users) {
  if (!log.is_array()) throw Error(Error::Code::kConfig, "slot log must be a JSON array");
  if (n_users < 1 || n_users > core::kMaxUsers) {
    throw Error(Error::Code::kConfig, "n_users must lie in [1, 16]");
  }
  ReplayReport report;
  core::NetworkState state(n_users, true);
  try {
    for (const auto& rec : log) {
      const std::string at = "slot " + std::to_string(rec.value("t", report.slots)) + ": ";
      if (rec.contains("control")) {
        const auto spec = coding::control_from_json(rec.at("control"));
        UserSet received;
        for (int u : rec.at("S").get<std::vector<int>>()) {
          if (u < 1 || u > n_users) throw Error(Error::Code::kConfig, at + "user out of range");
          received.insert(u - 1);
        }
        const auto tx = movement::transmit(state, spec, received);
        for (const auto& v : tx.violations) report.violations.push_back(at + v);
        const auto replayed = movement::to_json(tx.plan);
        for (const auto& [key, value] : replayed.items()) {
          if (!rec.contains(key) || rec.at(key) != value) {
            report.mismatches.push_back(at + key + " differs");
          }
        }
      } else if (rec.value("flush", false)) {
        if (!state.empty()) {
          report.mismatches.push_back(at + "flush recorded with packets queued");
        } else {
          state.flush_receivers();
        }
      }
      const auto batch = rec.value("arrivals", std::vector<std::uint32_t>{});
      for (std::size_t u = 0; u < batch.size() && u < static_cast<std::size_t>(n_users); ++u) {
        for (std::uint32_t a = 0; a < batch[u]; ++a) state.admit(static_cast<int>(u));
      }
      for (const auto& v : core::audit_state(state)) {
        report.violations.push_back(at + core::to_string(v.kind) + " at " + v.where);
      }
      ++report.slots;
    }
  } catch (const Error& e) {
    if (e.code() == Error::Code::kConfig) throw;
    report.violations.push_back(e.what());
  } catch (const nlohmann::json::exception& e) {
    throw Error(Error::Code::kConfig, std::string("bad slot log: ") + e.what());
  }
  return report;
}

nlohmann::json to_json(const ReplayReport& report) {
  return {{"slots", report.slots},
          {"ok", report.ok()},
          {"mismatches", report.mismatches},
          {"violations", report.violations}};
}

}  // namespace becsim::sim
