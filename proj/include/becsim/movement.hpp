#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "becsim/coding.hpp"
#include "becsim/core.hpp"

namespace becsim::movement {

using coding::ControlSpec;
using core::NativePacketId;
using core::NetworkState;
using core::QueueIndex;
using core::RealPacket;
using core::UserSet;
using core::VirtualAddress;

enum class RpmCase {
  kErased,           // nobody received: retransmit
  kAllDelivered,     // every destination received
  kListenerShift,    // receivers all inside the control's users
  kMergeUp,          // outsiders received and the merged queue is larger
  kIgnored,          // only outsiders received, merge rejected
  kShrunkShift,      // outsiders dropped from S, then a listener shift
};

std::string to_string(RpmCase c);

// L̃: users in at least ν-1 of the listener sets; every user when ν = 1.
UserSet tilde_l(const ControlSpec& spec, int n_users);

// Where each pair's packet goes for a given reception set. Depends only on
// (spec, S), never on packet contents.
struct PairFate {
  enum class Kind { kStay, kExit, kMove, kMerged };
  Kind kind = Kind::kStay;
  QueueIndex target{};
  UserSet decoders{};
};

struct Route {
  RpmCase rpm_case = RpmCase::kErased;
  UserSet received{};
  UserSet effective{};
  bool retransmit = false;
  std::vector<PairFate> pairs{};
  std::optional<QueueIndex> merged_target{};
};

Route route(const ControlSpec& spec, UserSet received, int n_users);

struct Decoding {
  int user = 0;
  NativePacketId native{};
};

struct RealMove {
  enum class Kind { kExit, kMove, kMerged };
  std::uint64_t packet_id = 0;
  QueueIndex from{};
  Kind kind = Kind::kExit;
  QueueIndex to{};  // valid for kMove
};

struct MergedPacket {
  QueueIndex to{};
  std::vector<NativePacketId> constituents{};
  std::vector<std::uint64_t> sources{};
};

struct TokenMove {
  NativePacketId native{};
  VirtualAddress from{};
  std::optional<VirtualAddress> to{};  // nullopt: decoded
};

struct MovementPlan {
  RpmCase rpm_case = RpmCase::kErased;
  UserSet received{};
  UserSet effective{};
  bool retransmit = false;
  std::vector<Decoding> decoded{};
  std::vector<RealMove> real_moves{};
  std::optional<MergedPacket> merged{};
  std::vector<TokenMove> token_moves{};
};

// Computes the rewrite for transmitting the XOR of `chosen` (one packet per
// pair, in spec order). Throws kPrecondition when the inputs are not a
// consistent view of `state`.
MovementPlan apply_rpm(const NetworkState& state, const ControlSpec& spec,
                       const std::vector<const RealPacket*>& chosen, UserSet received);

void commit(NetworkState& state, const MovementPlan& plan);

// Head-of-line packet of every queue in the control; empty if any is empty.
std::vector<const RealPacket*> head_packets(const NetworkState& state, const ControlSpec& spec);

struct Transmission {
  MovementPlan plan{};
  std::vector<NativePacketId> composite{};
  std::vector<std::uint64_t> packet_ids{};
  std::vector<std::string> violations{};
};

// One slot of transmission: XOR the heads, deliver the composite to the
// receivers in `received` (decode-checked when receivers are tracked), then
// rewrite the queues.
Transmission transmit(NetworkState& state, const ControlSpec& spec, UserSet received);

// A state holding exactly one fresh packet in each queue of the control.
// `filler` adds that many unrelated packets ahead of them to vary ids and
// queue contents.
NetworkState canonical_state(const ControlSpec& spec, int n_users, bool track_receivers = false,
                             int filler = 0);

std::uint64_t factorial(int k);
inline std::size_t overhead_of(const RealPacket& packet) { return packet.constituents.size(); }
// Stored packets at level k >= 2 must carry at most (k-1)! ids.
std::vector<std::string> check_stored_overhead(const NetworkState& state);
// Strict progress of listener shifts and of merged packets.
std::vector<std::string> check_progress(const MovementPlan& plan);

nlohmann::json to_json(const MovementPlan& plan);

}  // namespace becsim::movement
