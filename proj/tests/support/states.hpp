#pragma once

// Reachable network states for property tests: random arrivals, random
// BCR-valid controls and random erasures, snapshotted along the way.

#include <vector>

#include "becsim/channel.hpp"
#include "becsim/core.hpp"
#include "becsim/movement.hpp"
#include "becsim/scheduler.hpp"

namespace states {

struct Walk {
  int n_users = 3;
  double arrival = 0.3;
  double eps = 0.5;
  int burn_in = 5;
  int stride = 3;
  int max_packets = 40;
};

// Collects `count` snapshots with at least one stored packet. Receiver
// tracking is on so listener and decodability checks apply.
inline std::vector<becsim::core::NetworkState> sample(const Walk& w, std::size_t count,
                                                      std::uint64_t seed) {
  using namespace becsim;
  std::vector<core::NetworkState> out;
  auto rng = channel::make_rng(seed, channel::Stream::kAux);
  const auto erasure = channel::ErasureModel::iid(w.n_users, w.eps);
  core::NetworkState state(w.n_users, true);
  for (int step = 0; out.size() < count; ++step) {
    if (state.q_hat() < static_cast<std::uint64_t>(w.max_packets)) {
      for (int u = 0; u < w.n_users; ++u) {
        if (rng.bernoulli(w.arrival)) state.admit(u);
      }
    }
    if (auto spec = scheduler::random_control(state, rng)) {
      movement::transmit(state, *spec, erasure.sample(rng));
    } else if (state.empty()) {
      state.flush_receivers();
    }
    if (step >= w.burn_in && step % w.stride == 0 && !state.empty()) out.push_back(state);
  }
  return out;
}

}  // namespace states
