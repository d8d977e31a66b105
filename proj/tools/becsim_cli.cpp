// Command-line front end. Talks to the library only through becsim.h.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "becsim/becsim.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitMonitor = 2;

struct Failure {
  int exit_code;
  std::string message;
};

int exit_code_for(becsim_status s) {
  switch (s) {
    case BECSIM_OK: return kExitOk;
    case BECSIM_ERR_MONITOR:
    case BECSIM_ERR_PRECONDITION: return kExitMonitor;
    default: return kExitConfig;
  }
}

void check(becsim_status s) {
  if (s != BECSIM_OK) throw Failure{exit_code_for(s), becsim_last_error()};
}

// Owns a char* handed out by the library.
std::string take(char* s) {
  std::string out = s == nullptr ? "" : s;
  becsim_string_free(s);
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Failure{kExitConfig, "cannot read " + path};
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<double> parse_csv_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw Failure{kExitConfig, "bad number '" + item + "' in list"};
    }
  }
  return out;
}

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> horizon;
  std::optional<int> n_users;
  std::optional<double> iid_eps;
  std::string lambda;
  std::string restriction;
  std::string out_dir;
  std::string format = "json";
  std::optional<std::uint32_t> decimate;
  bool check_cert = false;
  std::string log_path;
};

json load_config(const Options& o) {
  json j = json::object();
  if (!o.config_path.empty()) {
    try {
      j = json::parse(read_file(o.config_path));
    } catch (const json::exception& e) {
      throw Failure{kExitConfig, o.config_path + ": " + e.what()};
    }
  }
  if (o.n_users) j["n_users"] = *o.n_users;
  if (o.seed) j["seed"] = *o.seed;
  if (o.horizon) j["horizon"] = *o.horizon;
  if (o.iid_eps) j["erasure"] = {{"mode", "iid"}, {"eps", *o.iid_eps}};
  if (!o.lambda.empty()) {
    if (!j.contains("arrivals")) j["arrivals"] = {{"mode", "bernoulli"}};
    j["arrivals"]["lambda"] = parse_csv_list(o.lambda);
  }
  if (!o.restriction.empty()) j["restriction"] = o.restriction;
  if (o.decimate) j["decimate"] = *o.decimate;
  return j;
}

struct Config {
  becsim_config* handle = nullptr;
  explicit Config(const json& j) { check(becsim_config_from_json(j.dump().c_str(), &handle)); }
  ~Config() { becsim_config_free(handle); }
  Config(const Config&) = delete;
  Config& operator=(const Config&) = delete;
};

void emit(const Options& o, const std::string& name, const std::string& body) {
  if (o.out_dir.empty()) {
    std::cout << body;
    if (!body.empty() && body.back() != '\n') std::cout << '\n';
    return;
  }
  std::error_code ec;
  fs::create_directories(o.out_dir, ec);
  const fs::path path = fs::path(o.out_dir) / name;
  std::ofstream out(path);
  if (!out) throw Failure{kExitConfig, "cannot write " + path.string()};
  out << body;
  if (!body.empty() && body.back() != '\n') out << '\n';
}

std::string csv_field(const std::string& text) {
  std::string out = "\"";
  for (char c : text) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

std::string csv_number(const json& v) {
  if (v.is_number()) {
    std::ostringstream os;
    os.precision(17);
    os << v.get<double>();
    return os.str();
  }
  if (v.is_boolean()) return v.get<bool>() ? "1" : "0";
  if (v.is_string()) return csv_field(v.get<std::string>());
  return csv_field(v.dump());
}

int cmd_simulate(const Options& o) {
  Config cfg(load_config(o));
  becsim_result* result = nullptr;
  check(becsim_simulate(cfg.handle, &result));
  std::unique_ptr<becsim_result, void (*)(becsim_result*)> guard(result, becsim_result_free);
  char* s = nullptr;
  check(becsim_result_summary_json(result, &s));
  const std::string summary = take(s);
  if (o.out_dir.empty()) {
    // Without an output directory: summary for json, trace for csv.
    if (o.format == "csv") {
      check(becsim_result_trace_csv(result, &s));
      emit(o, "", take(s));
    } else {
      emit(o, "", summary);
    }
    return kExitOk;
  }
  emit(o, "summary.json", summary);
  if (o.format == "csv") {
    check(becsim_result_trace_csv(result, &s));
    emit(o, "trace.csv", take(s));
  } else {
    check(becsim_result_trace_json(result, &s));
    emit(o, "trace.json", take(s));
  }
  check(becsim_result_log_json(result, &s));
  const std::string log = take(s);
  if (log != "[]") emit(o, "log.json", log);
  return kExitOk;
}

int cmd_probe(const Options& o) {
  Config cfg(load_config(o));
  char* s = nullptr;
  check(becsim_probe(cfg.handle, &s));
  const std::string reply = take(s);
  if (o.format != "csv") {
    emit(o, "probe.json", reply);
    return kExitOk;
  }
  const json j = json::parse(reply);
  std::ostringstream os;
  os << "scale,verdict,bounded_votes,growing_votes,mean_slope\n";
  for (const auto& v : j.at("verdicts")) {
    double mean = 0.0;
    for (const auto& x : v.at("slopes")) mean += x.get<double>();
    if (!v.at("slopes").empty()) mean /= static_cast<double>(v.at("slopes").size());
    os << csv_number(v.at("scale")) << ',' << v.at("verdict").get<std::string>() << ','
       << v.at("bounded_votes") << ',' << v.at("growing_votes") << ',' << csv_number(mean) << '\n';
  }
  emit(o, "probe.csv", os.str());
  return kExitOk;
}

int cmd_regions(const Options& o) {
  json base = o.config_path.empty() ? json::object() : json::parse(read_file(o.config_path));
  json req = base.value("regions", json::object());
  if (base.contains("n_users")) req["n_users"] = base["n_users"];
  if (o.n_users) req["n_users"] = *o.n_users;
  if (o.iid_eps) req["eps"] = *o.iid_eps;
  if (!o.lambda.empty()) req["rays"] = json::array({parse_csv_list(o.lambda)});
  if (o.check_cert) req["check_cert"] = true;
  if (o.seed) req["seed"] = *o.seed;
  char* s = nullptr;
  check(becsim_regions(req.dump().c_str(), &s));
  const std::string reply = take(s);
  if (o.format != "csv") {
    emit(o, "regions.json", reply);
    return kExitOk;
  }
  const json j = json::parse(reply);
  const int n = j.at("n_users");
  std::ostringstream os;
  os << "eps,ray,scale";
  for (int i = 1; i <= n; ++i) os << ",lambda_" << i;
  os << ",outer_margin,inside,capacity_margin,feasible,worst_slack,phi_sum\n";
  for (const auto& row : j.at("rows")) {
    os << csv_number(row.at("eps")) << ',' << row.at("ray") << ',' << csv_number(row.at("scale"));
    for (const auto& x : row.at("lambda")) os << ',' << csv_number(x);
    os << ',' << csv_number(row.at("outer_margin")) << ',' << csv_number(row.at("inside")) << ',';
    if (row.contains("capacity_margin")) os << csv_number(row.at("capacity_margin"));
    os << ',';
    if (row.contains("certificate")) {
      const auto& c = row.at("certificate");
      os << (c.at("feasible").get<bool>() ? "feasible" : "infeasible") << ',';
      if (c.contains("worst_slack")) os << csv_number(c.at("worst_slack"));
      os << ',';
      if (c.contains("phi_sum")) os << csv_number(c.at("phi_sum"));
    } else {
      os << ",,";
    }
    os << '\n';
  }
  emit(o, "regions.csv", os.str());
  return kExitOk;
}

int cmd_derive_table(const Options& o) {
  Config cfg(load_config(o));
  char* s = nullptr;
  check(becsim_derive_table(cfg.handle, &s));
  const std::string reply = take(s);
  if (o.format != "csv") {
    emit(o, "table.json", reply);
    return kExitOk;
  }
  const json j = json::parse(reply);
  std::ostringstream os;
  os << "control,node,to,p,symbolic\n";
  for (const auto& [label, entry] : j.items()) {
    for (const auto& node : entry.at("nodes")) {
      for (const auto& e : node.at("edges")) {
        const std::string to = e.at("to").is_string() ? e.at("to").get<std::string>() : e.at("to").dump();
        os << csv_field(label) << ',' << csv_field(node.at("node").dump()) << ',' << csv_field(to) << ','
           << csv_number(e.at("p")) << ',' << csv_field(e.value("symbolic", "")) << '\n';
      }
    }
  }
  emit(o, "table.csv", os.str());
  return kExitOk;
}

int cmd_rpm_replay(const Options& o) {
  if (o.log_path.empty()) throw Failure{kExitConfig, "rpm-replay needs --log"};
  const json cfg = load_config(o);
  const int n = cfg.value("n_users", 2);
  char* s = nullptr;
  const becsim_status status = becsim_rpm_replay(read_file(o.log_path).c_str(), n, &s);
  if (status != BECSIM_OK && status != BECSIM_ERR_MONITOR) check(status);
  emit(o, "replay.json", take(s));
  if (status != BECSIM_OK) throw Failure{kExitMonitor, becsim_last_error()};
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulator and analysis tools for XOR coding over broadcast erasure channels"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "Run configuration JSON");
    sub->add_option("--seed", o.seed, "Master seed");
    sub->add_option("--horizon", o.horizon, "Slots to simulate");
    sub->add_option("--n", o.n_users, "Number of users")->check(CLI::Range(1, 16));
    sub->add_option("--iid-eps", o.iid_eps, "Common erasure probability")->check(CLI::Range(0.0, 1.0));
    sub->add_option("--lambda", o.lambda, "Arrival rates, comma separated");
    sub->add_option("--restriction", o.restriction, "Control catalog")
        ->check(CLI::IsMember({"full", "table8"}));
    sub->add_option("--out", o.out_dir, "Output directory (stdout when omitted)");
    sub->add_option("--format", o.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--decimate", o.decimate, "Keep every k-th slot in the trace");
  };
  auto* simulate = app.add_subcommand("simulate", "Run the simulator");
  auto* probe = app.add_subcommand("probe", "Stability probe over scaled rate rays");
  auto* regions = app.add_subcommand("regions", "Sweep rate points through the region bounds");
  auto* table = app.add_subcommand("derive-table", "Dump token transition tables");
  auto* replay = app.add_subcommand("rpm-replay", "Replay a slot log and re-audit it");
  for (auto* sub : {simulate, probe, regions, table, replay}) add_common(sub);
  regions->add_flag("--check-cert", o.check_cert, "Build and check four-user flow certificates");
  replay->add_option("--log", o.log_path, "Slot log written by simulate")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*simulate) return cmd_simulate(o);
    if (*probe) return cmd_probe(o);
    if (*regions) return cmd_regions(o);
    if (*table) return cmd_derive_table(o);
    if (*replay) return cmd_rpm_replay(o);
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << '\n';
    return f.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitOk;
}
