#include "becsim/coding.hpp"

#include <algorithm>
#include <map>

namespace becsim::coding {

namespace {

bool queue_order(const QueueIndex& a, const QueueIndex& b) {
  if (a.level() != b.level()) return a.level() < b.level();
  if (a.listeners != b.listeners) return a.listeners < b.listeners;
  return a.destinations < b.destinations;
}

bool control_order(const ControlSpec& a, const ControlSpec& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  return std::lexicographical_compare(a.pairs().begin(), a.pairs().end(), b.pairs().begin(),
                                      b.pairs().end(), queue_order);
}

}  // namespace

ControlSpec::ControlSpec(std::vector<QueueIndex> pairs) : pairs_(std::move(pairs)) {
  std::sort(pairs_.begin(), pairs_.end(), queue_order);
}

std::string ControlSpec::label() const {
  std::string out = "I[";
  for (std::size_t k = 0; k < pairs_.size(); ++k) {
    if (k != 0) out += " + ";
    out += pairs_[k].listeners.compact() + "|" + pairs_[k].destinations.compact();
  }
  return out + "]";
}

bool compatible(const QueueIndex& a, const QueueIndex& b) {
  return a.destinations.is_subset_of(b.listeners) && b.destinations.is_subset_of(a.listeners);
}

bool validate_bcr(const ControlSpec& spec, int n_users) {
  if (spec.size() == 0) return false;
  for (const auto& q : spec.pairs()) {
    if (!core::validate_cc(q, n_users)) return false;
  }
  for (std::size_t a = 0; a < spec.pairs().size(); ++a) {
    for (std::size_t b = a + 1; b < spec.pairs().size(); ++b) {
      if (!compatible(spec[a], spec[b])) return false;
    }
  }
  return true;
}

UserSet destinations_of(const ControlSpec& spec) {
  UserSet out;
  for (const auto& q : spec.pairs()) out = out | q.destinations;
  return out;
}

UserSet listeners_intersection(const ControlSpec& spec) {
  if (spec.size() == 0) return UserSet{};
  UserSet out = spec[0].listeners;
  for (const auto& q : spec.pairs()) out = out & q.listeners;
  return out;
}

UserSet involved_users(const ControlSpec& spec) {
  UserSet out;
  for (const auto& q : spec.pairs()) out = out | q.listeners | q.destinations;
  return out;
}

int max_destinations_bound(const ControlSpec& spec) {
  if (!validate_bcr(spec)) {
    throw Error(Error::Code::kPrecondition, "max_destinations_bound: " + spec.label() +
                                                " violates the coding rule");
  }
  int sum = 0;
  int min_level = core::kMaxUsers + 1;
  for (const auto& q : spec.pairs()) {
    sum += q.destinations.size();
    min_level = std::min(min_level, q.level());
  }
  const int union_size = destinations_of(spec).size();
  if (!(spec.size() <= sum && sum == union_size && union_size <= min_level)) {
    throw Error(Error::Code::kInternal, "destination bound fails for " + spec.label());
  }
  return sum;
}

std::string to_string(Restriction r) { return r == Restriction::kFull ? "full" : "table8"; }

Restriction restriction_from_string(std::string_view text) {
  if (text == "full") return Restriction::kFull;
  if (text == "table8") return Restriction::kTable8;
  throw Error(Error::Code::kConfig, "unknown restriction '" + std::string(text) + "'");
}

std::optional<std::size_t> ControlCatalog::index_of(const ControlSpec& spec) const {
  for (std::size_t k = 0; k < controls.size(); ++k) {
    if (controls[k] == spec) return k;
  }
  return std::nullopt;
}

std::vector<QueueIndex> all_queue_indices(int n_users) {
  std::vector<QueueIndex> out;
  const std::uint32_t limit = 1u << n_users;
  for (std::uint32_t d = 1; d < limit; ++d) {
    for (std::uint32_t l = 0; l < limit; ++l) {
      const QueueIndex q{UserSet::from_bits(l), UserSet::from_bits(d)};
      if (core::validate_cc(q, n_users)) out.push_back(q);
    }
  }
  std::sort(out.begin(), out.end(), queue_order);
  return out;
}

namespace {

void extend_cliques(const std::vector<QueueIndex>& queues, std::vector<std::size_t>& current,
                    const std::vector<std::size_t>& candidates, std::vector<ControlSpec>& out,
                    std::size_t cap) {
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const std::size_t pick = candidates[c];
    current.push_back(pick);
    std::vector<QueueIndex> pairs;
    pairs.reserve(current.size());
    for (std::size_t idx : current) pairs.push_back(queues[idx]);
    out.emplace_back(std::move(pairs));
    if (out.size() > cap) {
      throw Error(Error::Code::kConfig,
                  "control catalog exceeds cap of " + std::to_string(cap) + " entries");
    }
    std::vector<std::size_t> next;
    for (std::size_t d = c + 1; d < candidates.size(); ++d) {
      if (compatible(queues[pick], queues[candidates[d]])) next.push_back(candidates[d]);
    }
    extend_cliques(queues, current, next, out, cap);
    current.pop_back();
  }
}

// Accepted multisets of destination-set sizes per level, sorted ascending.
const std::map<int, std::vector<std::vector<int>>>& table8_shapes() {
  static const std::map<int, std::vector<std::vector<int>>> shapes = {
      {1, {{1}}},
      {2, {{1}, {1, 1}}},
      {3, {{1}, {2}, {1, 1}, {1, 1, 1}, {1, 2}}},
      {4, {{1}, {2}, {3}, {1, 1}, {1, 1, 1}, {1, 1, 1, 1}, {1, 3}, {2, 2}, {1, 1, 2}}},
  };
  return shapes;
}

// Collections of pairwise-disjoint nonempty subsets of `pool`, each containing
// its lowest remaining member first so every collection is produced once.
void disjoint_collections(std::uint32_t pool, std::vector<std::uint32_t>& current,
                          std::vector<std::vector<std::uint32_t>>& out) {
  if (!current.empty()) out.push_back(current);
  if (pool == 0) return;
  const std::uint32_t floor = current.empty() ? 0u : current.back();
  // Enumerate nonempty subsets of pool whose value exceeds the last one picked.
  for (std::uint32_t sub = pool; sub != 0; sub = (sub - 1) & pool) {
    if (sub <= floor) continue;
    current.push_back(sub);
    disjoint_collections(pool & ~sub, current, out);
    current.pop_back();
  }
}

std::vector<ControlSpec> table8_controls(int n_users) {
  std::vector<ControlSpec> out;
  const std::uint32_t limit = 1u << n_users;
  for (std::uint32_t w = 1; w < limit; ++w) {
    const int level = std::popcount(w);
    auto shape_it = table8_shapes().find(level);
    if (shape_it == table8_shapes().end()) continue;
    std::vector<std::vector<std::uint32_t>> collections;
    std::vector<std::uint32_t> current;
    disjoint_collections(w, current, collections);
    for (const auto& dests : collections) {
      std::vector<int> sizes;
      for (std::uint32_t d : dests) sizes.push_back(std::popcount(d));
      std::sort(sizes.begin(), sizes.end());
      const auto& accepted = shape_it->second;
      if (std::find(accepted.begin(), accepted.end(), sizes) == accepted.end()) continue;
      std::vector<QueueIndex> pairs;
      bool ok = true;
      for (std::uint32_t d : dests) {
        const QueueIndex q{UserSet::from_bits(w & ~d), UserSet::from_bits(d)};
        if (!core::validate_cc(q, n_users)) ok = false;
        pairs.push_back(q);
      }
      if (ok) out.emplace_back(std::move(pairs));
    }
  }
  return out;
}

}  // namespace

ControlCatalog enumerate_controls(int n_users, Restriction restriction, std::size_t cap) {
  if (n_users < 1 || n_users > core::kMaxUsers) {
    throw Error(Error::Code::kConfig, "n_users must be in 1..16");
  }
  ControlCatalog catalog{n_users, restriction, {}};
  if (restriction == Restriction::kFull) {
    if (n_users > 5) {
      throw Error(Error::Code::kConfig, "full control enumeration is limited to 5 users");
    }
    const auto queues = all_queue_indices(n_users);
    std::vector<std::size_t> all(queues.size());
    for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
    std::vector<std::size_t> current;
    extend_cliques(queues, current, all, catalog.controls, cap);
  } else {
    if (n_users != 4) {
      throw Error(Error::Code::kConfig, "the table8 restriction is defined for 4 users only");
    }
    catalog.controls = table8_controls(n_users);
    if (catalog.controls.size() > cap) {
      throw Error(Error::Code::kConfig, "control catalog exceeds cap");
    }
  }
  std::sort(catalog.controls.begin(), catalog.controls.end(), control_order);
  return catalog;
}

nlohmann::json to_json(const QueueIndex& q) {
  nlohmann::json l = nlohmann::json::array();
  nlohmann::json d = nlohmann::json::array();
  for (int u : q.listeners.members()) l.push_back(u + 1);
  for (int u : q.destinations.members()) d.push_back(u + 1);
  return {{"L", l}, {"D", d}};
}

QueueIndex queue_from_json(const nlohmann::json& j) {
  QueueIndex q;
  for (int u : j.at("L").get<std::vector<int>>()) q.listeners.insert(u - 1);
  for (int u : j.at("D").get<std::vector<int>>()) q.destinations.insert(u - 1);
  return q;
}

nlohmann::json to_json(const ControlSpec& spec) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& q : spec.pairs()) out.push_back(to_json(q));
  return out;
}

ControlSpec control_from_json(const nlohmann::json& j) {
  std::vector<QueueIndex> pairs;
  for (const auto& item : j) pairs.push_back(queue_from_json(item));
  return ControlSpec(std::move(pairs));
}

nlohmann::json to_json(const ControlCatalog& catalog) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& c : catalog.controls) out.push_back(to_json(c));
  return out;
}

}  // namespace becsim::coding
