#pragma once

#include <bit>
#include <compare>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace becsim {

// Base for every error the library throws. The C API maps `code()` onto
// its status enum.
class Error : public std::runtime_error {
 public:
  enum class Code { kConfig = 1, kMonitor = 2, kPrecondition = 3, kInternal = 4 };

  Error(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

}  // namespace becsim

namespace becsim::core {

inline constexpr int kMaxUsers = 16;

// Users are 0-based internally; to_string prints them 1-based.
class UserSet {
 public:
  constexpr UserSet() = default;

  static constexpr UserSet from_bits(std::uint32_t bits) {
    UserSet s;
    s.bits_ = static_cast<std::uint16_t>(bits);
    return s;
  }
  static UserSet of(std::initializer_list<int> users);
  static UserSet of(const std::vector<int>& users);
  static constexpr UserSet all(int n_users) {
    return from_bits(n_users >= 16 ? 0xFFFFu : ((1u << n_users) - 1u));
  }
  static constexpr UserSet single(int user) { return from_bits(1u << user); }

  constexpr std::uint16_t bits() const { return bits_; }
  constexpr bool contains(int user) const { return (bits_ >> user) & 1u; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr int size() const { return std::popcount(bits_); }
  constexpr bool is_subset_of(UserSet other) const { return (bits_ & ~other.bits_) == 0; }
  constexpr bool intersects(UserSet other) const { return (bits_ & other.bits_) != 0; }

  constexpr void insert(int user) { bits_ = static_cast<std::uint16_t>(bits_ | (1u << user)); }
  constexpr void erase(int user) { bits_ = static_cast<std::uint16_t>(bits_ & ~(1u << user)); }

  friend constexpr UserSet operator|(UserSet a, UserSet b) { return from_bits(a.bits_ | b.bits_); }
  friend constexpr UserSet operator&(UserSet a, UserSet b) { return from_bits(a.bits_ & b.bits_); }
  friend constexpr UserSet operator-(UserSet a, UserSet b) {
    return from_bits(a.bits_ & ~b.bits_);
  }
  friend constexpr bool operator==(UserSet, UserSet) = default;
  friend constexpr auto operator<=>(UserSet, UserSet) = default;

  std::vector<int> members() const;
  // Lowest member, or -1 when empty.
  int first() const { return bits_ == 0 ? -1 : std::countr_zero(bits_); }

  // "{1,3}" with 1-based users; "{}" for the empty set.
  std::string to_string() const;
  // "13" style compact label; "-" for the empty set.
  std::string compact() const;

 private:
  std::uint16_t bits_ = 0;
};

// Q^L_D. Ordering is by (L bits, D bits) so maps iterate deterministically.
struct QueueIndex {
  UserSet listeners{};
  UserSet destinations{};

  int level() const { return listeners.size() + destinations.size(); }
  // Only meaningful for level >= 3.
  int sublevel() const { return listeners.size(); }
  std::uint32_t key() const {
    return (std::uint32_t{listeners.bits()} << 16) | destinations.bits();
  }
  std::string to_string() const;

  friend bool operator==(const QueueIndex&, const QueueIndex&) = default;
  friend auto operator<=>(const QueueIndex&, const QueueIndex&) = default;
};

bool validate_cc(const QueueIndex& index, int n_users = kMaxUsers);

struct NativePacketId {
  std::uint8_t owner = 0;
  std::uint64_t sequence = 0;

  std::uint64_t key() const { return (std::uint64_t{owner} << 56) | sequence; }
  static NativePacketId from_key(std::uint64_t key) {
    return {static_cast<std::uint8_t>(key >> 56), key & ((std::uint64_t{1} << 56) - 1)};
  }

  friend bool operator==(const NativePacketId&, const NativePacketId&) = default;
  friend auto operator<=>(const NativePacketId&, const NativePacketId&) = default;
};

struct RealPacket {
  std::uint64_t id = 0;
  // Sorted by key, no duplicates.
  std::vector<NativePacketId> constituents{};
  QueueIndex location{};
};

// Virtual queue V^L_D(i).
struct VirtualAddress {
  QueueIndex queue{};
  int user = 0;

  std::uint64_t key() const { return (std::uint64_t{queue.key()} << 8) | static_cast<std::uint64_t>(user); }
  std::string to_string() const;

  friend bool operator==(const VirtualAddress&, const VirtualAddress&) = default;
  friend auto operator<=>(const VirtualAddress&, const VirtualAddress&) = default;
};

struct Token {
  NativePacketId native{};
  VirtualAddress location{};
};

// Symmetric difference of two sorted constituent lists.
std::vector<NativePacketId> xor_constituents(const std::vector<NativePacketId>& a,
                                             const std::vector<NativePacketId>& b);

// GF(2) span over native-packet ids, kept as an echelon basis whose rows are
// keyed by their largest element.
class KnowledgeSpan {
 public:
  bool contains(const std::vector<std::uint64_t>& combination) const;
  // Returns false when the vector was already in the span.
  bool insert(const std::vector<std::uint64_t>& combination);
  void clear() { rows_.clear(); }
  std::size_t rank() const { return rows_.size(); }

 private:
  std::vector<std::uint64_t> reduce(std::vector<std::uint64_t> v) const;
  std::unordered_map<std::uint64_t, std::vector<std::uint64_t>> rows_;
};

// What one receiver can reconstruct. Transmitter logic never reads this; it
// backs the decodability and Listener audits.
class Receiver {
 public:
  enum class Result { kNothingNew, kDecoded, kUndecodable };

  explicit Receiver(int user = 0) : user_(user) {}

  // Stores the composite and decodes if possible. `decoded` gets the native
  // recovered on kDecoded.
  Result receive(const std::vector<NativePacketId>& constituents, NativePacketId* decoded);
  bool can_reconstruct(const std::vector<NativePacketId>& constituents) const;
  // True iff constituents minus `own` lies in the span.
  bool can_reconstruct_without(const std::vector<NativePacketId>& constituents,
                               NativePacketId own) const;
  bool has_decoded(NativePacketId id) const { return decoded_.count(id.key()) != 0; }
  // Side information handed over out of band (fixtures only).
  void learn(const std::vector<NativePacketId>& constituents);
  void flush();
  std::size_t stored_rank() const { return span_.rank(); }

 private:
  int user_;
  KnowledgeSpan span_;
  std::unordered_set<std::uint64_t> decoded_;
};

class NetworkState {
 public:
  explicit NetworkState(int n_users, bool track_receivers = false);

  int n_users() const { return n_users_; }
  bool tracks_receivers() const { return track_receivers_; }

  // Exogenous arrival for `user`: a native packet in Q_user and its token.
  NativePacketId admit(int user);

  // Places a packet built from one fresh native per destination, with its
  // tokens. With receiver tracking on, listeners learn the composite and each
  // destination learns the other destinations' natives. Used for fixtures
  // and canonical states.
  std::uint64_t place_packet(const QueueIndex& queue);

  const std::map<QueueIndex, std::deque<RealPacket>>& real_queues() const { return real_; }
  const std::map<VirtualAddress, std::deque<NativePacketId>>& virtual_queues() const {
    return virtual_;
  }
  const std::deque<RealPacket>* queue(const QueueIndex& index) const;
  std::size_t queue_length(const QueueIndex& index) const;
  std::uint32_t counter(const VirtualAddress& address) const;
  const std::unordered_map<std::uint64_t, std::uint32_t>& counters() const { return counters_; }

  std::uint64_t q_hat() const { return q_hat_; }
  std::uint64_t v_hat() const { return v_hat_; }
  bool empty() const { return q_hat_ == 0; }

  bool is_decoded(NativePacketId id) const;
  bool is_outstanding(NativePacketId id) const { return outstanding_.count(id.key()) != 0; }
  const std::unordered_set<std::uint64_t>& outstanding() const { return outstanding_; }
  // The constituent of `packet` owned by `user` and not yet decoded by it.
  std::optional<NativePacketId> unknown_native(const RealPacket& packet, int user) const;

  std::uint64_t arrivals() const { return arrivals_; }
  std::uint64_t decodings() const { return decodings_; }
  const std::vector<std::uint64_t>& delivered() const { return delivered_; }

  Receiver& receiver(int user) { return receivers_.at(static_cast<std::size_t>(user)); }
  const Receiver& receiver(int user) const { return receivers_.at(static_cast<std::size_t>(user)); }

  // Mutation primitives used by plan application.
  RealPacket take_packet(const QueueIndex& queue, std::uint64_t packet_id);
  void push_packet(const QueueIndex& queue, RealPacket packet);
  std::uint64_t next_packet_id() { return next_packet_id_++; }
  void remove_token(const VirtualAddress& address, NativePacketId native);
  void push_token(const VirtualAddress& address, NativePacketId native);
  void mark_decoded(int user, NativePacketId native);

  // Clears receiver stores and decoded bookkeeping. Only valid when empty.
  void flush_receivers();

  // Test hook: overwrite a counter without touching the token list.
  void debug_set_counter(const VirtualAddress& address, std::uint32_t value);

 private:
  int n_users_;
  bool track_receivers_;
  std::map<QueueIndex, std::deque<RealPacket>> real_;
  std::map<VirtualAddress, std::deque<NativePacketId>> virtual_;
  std::unordered_map<std::uint64_t, std::uint32_t> counters_;
  std::unordered_set<std::uint64_t> outstanding_;
  std::vector<std::uint64_t> next_sequence_;
  std::vector<std::uint64_t> delivered_;
  std::vector<Receiver> receivers_;
  std::uint64_t next_packet_id_ = 1;
  std::uint64_t q_hat_ = 0;
  std::uint64_t v_hat_ = 0;
  std::uint64_t arrivals_ = 0;
  std::uint64_t decodings_ = 0;
};

struct Violation {
  enum class Kind {
    kCounterMismatch,
    kQueueCounterMismatch,
    kSandwich,
    kCompatibility,
    kConstituents,
    kDestination,
    kListener,
    kTokenUniqueness,
    kTokenConservation,
  };
  Kind kind;
  std::string where;
};

std::string to_string(Violation::Kind kind);

// Runs every NetworkState invariant. Listener checks need receiver tracking.
std::vector<Violation> audit_state(const NetworkState& state);

}  // namespace becsim::core

template <>
struct std::hash<becsim::core::QueueIndex> {
  std::size_t operator()(const becsim::core::QueueIndex& q) const noexcept {
    return std::hash<std::uint32_t>{}(q.key());
  }
};
