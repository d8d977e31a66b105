#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "becsim/coding.hpp"
#include "becsim/movement.hpp"
#include "support/conformance.hpp"
#include "support/fixtures.hpp"
#include "support/states.hpp"

using namespace becsim;
using fixtures::control;
using fixtures::q;
using fixtures::users;

TEST_CASE("three-user movement tables") {
  const auto tables = conformance::tables();
  CHECK(conformance::row_count() == 56);
  for (const auto& table : tables) {
    REQUIRE(table.rows.size() == 8);
    for (const auto& row : table.rows) {
      CAPTURE(table.name);
      CAPTURE(row.feedback);
      const auto errors = conformance::check_row(table, row);
      for (const auto& e : errors) MESSAGE(e);
      CHECK(errors.empty());
    }
  }
}

TEST_CASE("worked examples") {
  for (const auto& s : conformance::scenarios()) {
    CAPTURE(s.name);
    const auto errors = conformance::check_scenario(s);
    for (const auto& e : errors) MESSAGE(e);
    CHECK(errors.empty());
  }
}

TEST_CASE("eight-user triple helpers") {
  const auto spec = control({"2346|1", "135|24", "1246|3"});
  REQUIRE(coding::validate_bcr(spec, 8));
  const auto lt = movement::tilde_l(spec, 8);
  CHECK(lt.contains(1));   // user 2
  CHECK(!lt.contains(4));  // user 5 sits in one listener set only
  CHECK((lt & users("256")) == users("26"));
  CHECK(coding::max_destinations_bound(spec) == 4);

  const auto shrunk = movement::route(spec, users("27"), 8);
  CHECK(shrunk.rpm_case == movement::RpmCase::kShrunkShift);
  CHECK(shrunk.effective == users("2"));
}

TEST_CASE("pair example token bookkeeping") {
  const auto spec = control({"3|12", "12|3"});
  auto state = movement::canonical_state(spec, 3, true);
  const auto plan = movement::apply_rpm(state, spec, movement::head_packets(state, spec), users("2"));
  REQUIRE(plan.decoded.size() == 1);
  CHECK(plan.decoded[0].user == 1);
  int moved = 0;
  for (const auto& t : plan.token_moves) {
    if (!t.to) {
      CHECK(t.from.user == 1);
      continue;
    }
    if (*t.to == t.from) continue;
    ++moved;
    CHECK(t.from == core::VirtualAddress{q("3|12"), 0});
    CHECK(*t.to == core::VirtualAddress{q("23|1"), 0});
  }
  CHECK(moved == 1);
}

TEST_CASE("route depends only on the control and the reception set") {
  const auto catalog = coding::enumerate_controls(3, coding::Restriction::kFull);
  for (const auto& spec : catalog.controls) {
    for (std::uint32_t bits = 0; bits < 8; ++bits) {
      const auto received = core::UserSet::from_bits(bits);
      const auto r = movement::route(spec, received, 3);
      auto a = movement::canonical_state(spec, 3, false, 0);
      auto b = movement::canonical_state(spec, 3, false, 7);
      const auto pa = movement::apply_rpm(a, spec, movement::head_packets(a, spec), received);
      const auto pb = movement::apply_rpm(b, spec, movement::head_packets(b, spec), received);
      CHECK(pa.rpm_case == r.rpm_case);
      CHECK(pb.rpm_case == r.rpm_case);
      CHECK(pa.real_moves.size() == pb.real_moves.size());
      CHECK(pa.decoded.size() == pb.decoded.size());
      CHECK(r.retransmit == received.empty());
    }
  }
}

TEST_CASE("empty reception retransmits and changes nothing") {
  const auto spec = control({"23|1", "13|2", "12|3"});
  auto state = movement::canonical_state(spec, 3, true);
  const auto before = state.real_queues();
  const auto tx = movement::transmit(state, spec, {});
  CHECK(tx.plan.retransmit);
  CHECK(tx.plan.real_moves.empty());
  CHECK(state.real_queues().size() == before.size());
  CHECK(core::audit_state(state).empty());
}

TEST_CASE("random reachable three-user states stay consistent under every control") {
  const auto catalog = coding::enumerate_controls(3, coding::Restriction::kFull);
  const auto snapshots = states::sample({}, 150, 11);
  std::size_t exercised = 0;
  for (const auto& snap : snapshots) {
    for (const auto& spec : catalog.controls) {
      if (movement::head_packets(snap, spec).empty()) continue;
      for (std::uint32_t bits = 0; bits < 8; ++bits) {
        auto state = snap;
        const auto tx = movement::transmit(state, spec, core::UserSet::from_bits(bits));
        CHECK(tx.violations.empty());
        CHECK(movement::check_progress(tx.plan).empty());
        const auto audit = core::audit_state(state);
        if (!audit.empty()) FAIL_CHECK(core::to_string(audit.front().kind) << " " << audit.front().where);
        ++exercised;
      }
    }
  }
  CHECK(exercised > 1000);
}

TEST_CASE("stored packets respect the overhead bound") {
  const auto snapshots = states::sample({4, 0.3, 0.5, 5, 5, 60}, 100, 5);
  for (const auto& s : snapshots) CHECK(movement::check_stored_overhead(s).empty());
}

TEST_CASE("factorial") {
  CHECK(movement::factorial(0) == 1);
  CHECK(movement::factorial(4) == 24);
  CHECK(movement::factorial(5) == 120);
}

TEST_CASE("apply_rpm rejects a packet from the wrong queue") {
  const auto spec = control({"2|1", "1|2"});
  auto state = movement::canonical_state(spec, 2, false);
  auto heads = movement::head_packets(state, spec);
  std::swap(heads[0], heads[1]);
  CHECK_THROWS_AS(movement::apply_rpm(state, spec, heads, users("1")), Error);
}
