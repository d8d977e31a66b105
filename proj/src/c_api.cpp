#include "becsim/becsim.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>

#include <json.hpp>

#include "becsim/coding.hpp"
#include "becsim/regions.hpp"
#include "becsim/scheduler.hpp"
#include "becsim/sim.hpp"

struct becsim_config {
  nlohmann::json document;
  becsim::sim::SimConfig config;
};

struct becsim_result {
  becsim::sim::RunResult run;
};

namespace {

thread_local std::string g_last_error;

becsim_status fail(becsim_status status, const std::string& what) {
  g_last_error = what;
  return status;
}

template <class F>
becsim_status guarded(F&& body) {
  try {
    g_last_error.clear();
    return body();
  } catch (const becsim::Error& e) {
    return fail(static_cast<becsim_status>(static_cast<int>(e.code())), e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(BECSIM_ERR_CONFIG, e.what());
  } catch (const std::exception& e) {
    return fail(BECSIM_ERR_INTERNAL, e.what());
  }
}

char* copy_out(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* becsim_version(void) { return "0.1.0"; }

const char* becsim_last_error(void) { return g_last_error.c_str(); }

void becsim_string_free(char* s) { std::free(s); }

becsim_status becsim_config_from_json(const char* json, becsim_config** out) {
  if (json == nullptr || out == nullptr) return fail(BECSIM_ERR_ARGUMENT, "null argument");
  *out = nullptr;
  return guarded([&] {
    auto doc = nlohmann::json::parse(json);
    auto config = becsim::sim::config_from_json(doc);
    *out = new becsim_config{std::move(doc), std::move(config)};
    return BECSIM_OK;
  });
}

becsim_status becsim_config_to_json(const becsim_config* config, char** out) {
  if (config == nullptr || out == nullptr) return fail(BECSIM_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    *out = copy_out(becsim::sim::to_json(config->config).dump(2));
    return BECSIM_OK;
  });
}

void becsim_config_free(becsim_config* config) { delete config; }

becsim_status becsim_simulate(const becsim_config* config, becsim_result** out) {
  if (config == nullptr || out == nullptr) return fail(BECSIM_ERR_ARGUMENT, "null argument");
  *out = nullptr;
  return guarded([&] {
    auto result = std::make_unique<becsim_result>();
    result->run = becsim::sim::run(config->config);
    *out = result.release();
    return BECSIM_OK;
  });
}

becsim_status becsim_result_summary_json(const becsim_result* result, char** out) {
  if (result == nullptr || out == nullptr) return fail(BECSIM_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    *out = copy_out(becsim::sim::to_json(result->run.summary).dump(2));
    return BECSIM_OK;
  });
}

becsim_status becsim_result_trace_csv(const becsim_result* result, char** out) {
  if (result == nullptr || out == nullptr) return fail(BECSIM_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    *out = copy_out(becsim::sim::trace_csv(result->run));
    return BECSIM_OK;
  });
}

becsim_status becsim_result_trace_json(const becsim_result* result, char** out) {
  if (result == nullptr || out == nullptr) return fail(BECSIM_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& m : result->run.trace) {
      rows.push_back({{"t", m.t},
                      {"q_hat", m.q_hat},
                      {"v_hat", m.v_hat},
                      {"delivered", m.delivered},
                      {"control", m.control},
                      {"rpm_case", m.rpm_case},
                      {"retransmit", m.retransmit},
                      {"idle", m.idle},
                      {"flush", m.flush},
                      {"overhead", m.overhead}});
    }
    *out = copy_out(rows.dump());
    return BECSIM_OK;
  });
}

becsim_status becsim_result_log_json(const becsim_result* result, char** out) {
  if (result == nullptr || out == nullptr) return fail(BECSIM_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    *out = copy_out(nlohmann::json(result->run.log).dump());
    return BECSIM_OK;
  });
}

uint64_t becsim_result_slots(const becsim_result* result) {
  return result == nullptr ? 0 : result->run.summary.slots;
}

void becsim_result_free(becsim_result* result) { delete result; }

becsim_status becsim_probe(const becsim_config* config, char** out) {
  if (config == nullptr || out == nullptr) return fail(BECSIM_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    const auto probe = becsim::sim::probe_from_json(config->document);
    const auto verdicts = becsim::sim::stability_probe(probe);
    nlohmann::json reply = {{"config", becsim::sim::to_json(probe.base)},
                            {"ray", probe.ray},
                            {"window", probe.window},
                            {"slope_threshold", probe.slope_threshold},
                            {"seeds", probe.seeds},
                            {"verdicts", becsim::sim::to_json(verdicts)}};
    *out = copy_out(reply.dump(2));
    return BECSIM_OK;
  });
}

becsim_status becsim_derive_table(const becsim_config* config, char** out) {
  if (config == nullptr || out == nullptr) return fail(BECSIM_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    const auto& c = config->config;
    const auto catalog = becsim::coding::enumerate_controls(c.n_users, c.restriction);
    const auto table = becsim::scheduler::derive_table(catalog, c.erasure);
    *out = copy_out(becsim::scheduler::to_json(table).dump(2));
    return BECSIM_OK;
  });
}

becsim_status becsim_catalog(const becsim_config* config, char** out) {
  if (config == nullptr || out == nullptr) return fail(BECSIM_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    const auto& c = config->config;
    const auto catalog = becsim::coding::enumerate_controls(c.n_users, c.restriction);
    *out = copy_out(becsim::coding::to_json(catalog).dump(2));
    return BECSIM_OK;
  });
}

becsim_status becsim_regions(const char* request_json, char** out) {
  if (request_json == nullptr || out == nullptr) return fail(BECSIM_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    const auto reply = becsim::regions::region_sweep(nlohmann::json::parse(request_json));
    *out = copy_out(reply.dump(2));
    return BECSIM_OK;
  });
}

becsim_status becsim_rpm_replay(const char* log_json, int n_users, char** out) {
  if (log_json == nullptr || out == nullptr) return fail(BECSIM_ERR_ARGUMENT, "null argument");
  return guarded([&] {
    const auto report = becsim::sim::replay_log(nlohmann::json::parse(log_json), n_users);
    *out = copy_out(becsim::sim::to_json(report).dump(2));
    if (!report.ok()) {
      return fail(BECSIM_ERR_MONITOR, "replay found " + std::to_string(report.mismatches.size()) +
                                          " mismatches and " +
                                          std::to_string(report.violations.size()) + " violations");
    }
    return BECSIM_OK;
  });
}

}  // extern "C"
