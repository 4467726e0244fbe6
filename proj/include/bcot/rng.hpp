#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace bcot {

using Rng = std::mt19937_64;

// Named, counter-addressed random streams. Every random draw in the library
// comes from a stream identified by (root seed, label, index), so adding
// trajectories or rounds never reshuffles the ones already drawn, and the
// result of a computation does not depend on how work is split across threads.
//
// Labels in use:
//   "traj"              reference trajectory b of a simulation
//   "gen-batch/round-k" generated trajectory b of training round k
//   "aux-batch/round-k" auxiliary (control-variate) trajectory b of round k
//   "ref-batch/round-k" reference trajectory b of round k
//   "eval-gen"          evaluation samples from the learned coupling
//   "swd-direction"     projection direction l of the sliced Wasserstein metric
//   "perm"              permutation l of the permutation test
std::uint64_t splitmix64(std::uint64_t x);

std::uint64_t hash_label(std::string_view label);

std::uint64_t derive_seed(std::uint64_t root, std::string_view label, std::uint64_t index);

Rng make_stream(std::uint64_t root, std::string_view label, std::uint64_t index = 0);

}  // namespace bcot
