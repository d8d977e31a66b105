#pragma once

// Flattens transition-table JSON into comparable edge tuples.

#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <tuple>

#include <json.hpp>

namespace golden {

using EdgeKey = std::tuple<std::string, std::string, std::string, std::string>;

inline std::string compact(const nlohmann::json& users) {
  if (users.empty()) return "-";
  std::string out;
  for (const auto& u : users) out += std::to_string(u.get<int>());
  return out;
}

inline std::string node_label(const nlohmann::json& node) {
  return "V[" + compact(node.at("L")) + "|" + compact(node.at("D")) + "](" +
         std::to_string(node.at("user").get<int>()) + ")";
}

// (control, node, target, symbolic probability) for every edge of a table dump.
inline std::set<EdgeKey> flatten_table(const nlohmann::json& table) {
  std::set<EdgeKey> out;
  for (const auto& [label, entry] : table.items()) {
    for (const auto& node : entry.at("nodes")) {
      for (const auto& e : node.at("edges")) {
        const std::string to = e.at("to").is_string() ? e.at("to").get<std::string>()
                                                      : node_label(e.at("to"));
        out.insert({label, node_label(node.at("node")), to, e.value("symbolic", std::string("?"))});
      }
    }
  }
  return out;
}

inline std::set<EdgeKey> load_golden(const std::string& path) {
  std::ifstream in(path);
  const auto j = nlohmann::json::parse(in);
  std::set<EdgeKey> out;
  for (const auto& e : j.at("edges")) {
    out.insert({e.at("control").get<std::string>(), e.at("node").get<std::string>(),
                e.at("to").get<std::string>(), e.at("p").get<std::string>()});
  }
  return out;
}

}  // namespace golden
