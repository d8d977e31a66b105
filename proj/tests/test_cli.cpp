#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "support/golden.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::path(BECSIM_CLI_WORK_DIR);

int run_cli(const std::string& args, const std::string& stdout_file = "") {
  std::string cmd = std::string("\"") + BECSIM_CLI_PATH + "\" " + args;
  cmd += stdout_file.empty() ? " >/dev/null" : " >\"" + (kWork / stdout_file).string() + "\"";
  cmd += " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write(const fs::path& p, const std::string& body) {
  std::ofstream out(p, std::ios::binary);
  out << body;
}

struct WorkDir {
  WorkDir() { fs::create_directories(kWork); }
};
const WorkDir work_dir;

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("") == 1);
  CHECK(run_cli("simulate --no-such-flag") == 1);
  CHECK(run_cli("simulate --n 40") == 1);
  CHECK(run_cli("simulate --restriction everything") == 1);
}

TEST_CASE("config errors exit with code 1") {
  write(kWork / "broken.json", "{\"n_users\": ");
  CHECK(run_cli("simulate --config \"" + (kWork / "broken.json").string() + "\"") == 1);
  CHECK(run_cli("simulate --config \"" + (kWork / "missing.json").string() + "\"") == 1);
  write(kWork / "wrong_rates.json",
        R"({"n_users": 3, "arrivals": {"mode": "bernoulli", "lambda": [0.1]}})");
  CHECK(run_cli("simulate --config \"" + (kWork / "wrong_rates.json").string() + "\"") == 1);
  CHECK(run_cli("simulate --n 3 --restriction table8") == 1);
  CHECK(run_cli("regions --n 4 --iid-eps 0.5 --lambda 1,2") == 1);
}

TEST_CASE("same seed writes byte-identical outputs") {
  const auto a = kWork / "det_a", b = kWork / "det_b", c = kWork / "det_c";
  const std::string common = " --n 3 --iid-eps 0.4 --lambda 0.1,0.1,0.1 --horizon 2000 --format csv";
  REQUIRE(run_cli("simulate --seed 11 --out \"" + a.string() + "\"" + common) == 0);
  REQUIRE(run_cli("simulate --seed 11 --out \"" + b.string() + "\"" + common) == 0);
  REQUIRE(run_cli("simulate --seed 12 --out \"" + c.string() + "\"" + common) == 0);
  for (const char* name : {"summary.json", "trace.csv"}) {
    CAPTURE(name);
    const auto first = slurp(a / name);
    CHECK_FALSE(first.empty());
    CHECK(first == slurp(b / name));
  }
  CHECK(slurp(a / "trace.csv") != slurp(c / "trace.csv"));
}

TEST_CASE("stdout formats") {
  REQUIRE(run_cli("simulate --n 2 --lambda 0.2,0.2 --horizon 100", "sim.json") == 0);
  const auto summary = nlohmann::json::parse(slurp(kWork / "sim.json"));
  CHECK(summary.at("slots") == 100);
  REQUIRE(run_cli("simulate --n 2 --lambda 0.2,0.2 --horizon 100 --format csv", "sim.csv") == 0);
  CHECK(slurp(kWork / "sim.csv").rfind("t,q_hat,v_hat", 0) == 0);
}

TEST_CASE("derived two-user table matches the golden file") {
  REQUIRE(run_cli("derive-table --n 2 --iid-eps 0.5", "table.json") == 0);
  const auto table = nlohmann::json::parse(slurp(kWork / "table.json"));
  CHECK(golden::flatten_table(table) ==
        golden::load_golden(BECSIM_GOLDEN_DIR "/two_user_transitions.json"));
  REQUIRE(run_cli("derive-table --n 2 --iid-eps 0.5 --format csv", "table.csv") == 0);
  CHECK(slurp(kWork / "table.csv").rfind("control,node,to,p,symbolic", 0) == 0);
}

TEST_CASE("slot logs replay and tampering exits with code 2") {
  const auto dir = kWork / "replay";
  write(kWork / "logged.json",
        R"({"n_users": 3, "horizon": 1500, "seed": 4, "trace_log": true,
            "erasure": {"mode": "iid", "eps": 0.5},
            "arrivals": {"mode": "bernoulli", "lambda": [0.1, 0.1, 0.1]}})");
  REQUIRE(run_cli("simulate --config \"" + (kWork / "logged.json").string() + "\" --out \"" +
                  dir.string() + "\"") == 0);
  const auto log_path = dir / "log.json";
  REQUIRE(fs::exists(log_path));
  CHECK(run_cli("rpm-replay --n 3 --log \"" + log_path.string() + "\"", "replay.json") == 0);
  CHECK(nlohmann::json::parse(slurp(kWork / "replay.json")).at("ok") == true);

  auto log = nlohmann::json::parse(slurp(log_path));
  bool changed = false;
  for (auto& rec : log) {
    if (rec.contains("control") && rec.at("S").empty()) {
      rec["S"] = {1, 2, 3};
      changed = true;
      break;
    }
  }
  REQUIRE(changed);
  write(kWork / "tampered.json", log.dump());
  CHECK(run_cli("rpm-replay --n 3 --log \"" + (kWork / "tampered.json").string() + "\"") == 2);
  CHECK(run_cli("rpm-replay --n 3 --log \"" + (kWork / "missing.json").string() + "\"") == 1);
}

TEST_CASE("four-user certificates are feasible") {
  REQUIRE(run_cli("regions --n 4 --iid-eps 0.5 --check-cert", "regions.json") == 0);
  const auto reply = nlohmann::json::parse(slurp(kWork / "regions.json"));
  REQUIRE_FALSE(reply.at("rows").empty());
  int checked = 0;
  for (const auto& row : reply.at("rows")) {
    if (!row.at("inside").get<bool>()) continue;
    REQUIRE(row.contains("certificate"));
    CHECK(row.at("certificate").at("feasible") == true);
    ++checked;
  }
  CHECK(checked > 0);
  REQUIRE(run_cli("regions --n 4 --iid-eps 0.5 --check-cert --format csv", "regions.csv") == 0);
  CHECK(slurp(kWork / "regions.csv").find("feasible") != std::string::npos);
}

TEST_CASE("probe through the command line") {
  write(kWork / "probe.json",
        R"({"n_users": 2, "erasure": {"mode": "iid", "eps": 0.5},
            "probe": {"ray": [1, 1], "scales": [0.5], "seeds": 1, "window": 2000}})");
  REQUIRE(run_cli("probe --config \"" + (kWork / "probe.json").string() + "\" --format csv",
                  "probe.csv") == 0);
  CHECK(slurp(kWork / "probe.csv").find("0.5,bounded") != std::string::npos);
}
