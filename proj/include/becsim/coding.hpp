#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "becsim/core.hpp"

namespace becsim::coding {

using core::QueueIndex;
using core::UserSet;

// A control: the set of (L_k, D_k) pairs whose head packets are XORed.
// Pairs are kept sorted so equality ignores the order they were given in.
class ControlSpec {
 public:
  ControlSpec() = default;
  explicit ControlSpec(std::vector<QueueIndex> pairs);

  const std::vector<QueueIndex>& pairs() const { return pairs_; }
  int size() const { return static_cast<int>(pairs_.size()); }
  const QueueIndex& operator[](std::size_t k) const { return pairs_[k]; }

  // "I[23|1 + 13|2]": listeners|destinations per pair, users 1-based.
  std::string label() const;

  friend bool operator==(const ControlSpec&, const ControlSpec&) = default;
  friend auto operator<=>(const ControlSpec&, const ControlSpec&) = default;

 private:
  std::vector<QueueIndex> pairs_;
};

// CC on every pair plus D_n ⊆ L_r for all r != n.
bool validate_bcr(const ControlSpec& spec, int n_users = core::kMaxUsers);
bool compatible(const QueueIndex& a, const QueueIndex& b);

UserSet destinations_of(const ControlSpec& spec);
UserSet listeners_intersection(const ControlSpec& spec);
UserSet involved_users(const ControlSpec& spec);

// Σ|D_r|, after checking ν <= Σ|D_r| = |∪D_r| <= min level. Throws on failure.
int max_destinations_bound(const ControlSpec& spec);

enum class Restriction { kFull, kTable8 };

std::string to_string(Restriction r);
Restriction restriction_from_string(std::string_view text);

struct ControlCatalog {
  int n_users = 0;
  Restriction restriction = Restriction::kFull;
  std::vector<ControlSpec> controls{};

  std::optional<std::size_t> index_of(const ControlSpec& spec) const;
};

inline constexpr std::size_t kDefaultCatalogCap = 1'000'000;

// Every CC-valid queue index for n_users, sorted by (level, L, D).
std::vector<QueueIndex> all_queue_indices(int n_users);

ControlCatalog enumerate_controls(int n_users, Restriction restriction,
                                  std::size_t cap = kDefaultCatalogCap);

nlohmann::json to_json(const QueueIndex& q);
QueueIndex queue_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ControlSpec& spec);
ControlSpec control_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ControlCatalog& catalog);

}  // namespace becsim::coding
