#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "hiercas/cascade.hpp"
#include "hiercas/random.hpp"

namespace hiercas::sampling {

/// Which retweet edges carry messages. Undirected lets a parent see its
/// retweeters as well as its own parent.
enum class NeighborDirection : std::uint8_t { kUndirected, kIn, kOut };

NeighborDirection parse_direction(std::string_view text);
std::string_view to_string(NeighborDirection d);

struct Neighbor {
  std::size_t node = 0;
  double time = 0.0;  // time of the interaction (edge) with the target

  bool operator==(const Neighbor&) const = default;
};

struct TemporalNeighborhood {
  std::size_t target = 0;
  double t = 0.0;
  std::vector<Neighbor> neighbors;   // at most n_sample, ordered by (time, node)
  std::vector<std::uint8_t> valid;   // one flag per slot; 0 marks padding
};

/// Nodes sharing an edge with `v` whose edge time is strictly before `t`,
/// paired with that edge time, ordered by (time, node).
std::vector<Neighbor> neighbors_before(const data::CascadeGraph& graph, std::size_t v, double t,
                                       NeighborDirection direction = NeighborDirection::kUndirected);

/// Keeps everything when |neigh| <= n_sample (remaining slots padded),
/// otherwise draws n_sample distinct neighbors uniformly without
/// replacement. The result is ordered by interaction time.
TemporalNeighborhood sample_uniform(std::size_t target, double t, std::span<const Neighbor> neigh,
                                    std::size_t n_sample, Rng& rng);

/// Generator for the neighborhood of (node, t, layer) under `seed`. Seeding
/// per call makes a node's sample independent of evaluation order and of
/// anything that happens after `t`.
Rng neighborhood_rng(std::uint64_t seed, std::size_t node, double t, std::size_t layer);

}  // namespace hiercas::sampling
