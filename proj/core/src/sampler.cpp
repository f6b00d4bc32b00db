#include "hiercas/sampler.hpp"

#include <algorithm>
#include <bit>
#include <string>

#include "hiercas/errors.hpp"

namespace hiercas::sampling {

NeighborDirection parse_direction(std::string_view text) {
  if (text == "undirected") return NeighborDirection::kUndirected;
  if (text == "in") return NeighborDirection::kIn;
  if (text == "out") return NeighborDirection::kOut;
  throw ConfigError("unknown neighbor direction '" + std::string(text) +
                    "' (expected undirected, in or out)");
}

std::string_view to_string(NeighborDirection d) {
  switch (d) {
    case NeighborDirection::kIn:
      return "in";
    case NeighborDirection::kOut:
      return "out";
    case NeighborDirection::kUndirected:
      break;
  }
  return "undirected";
}

std::vector<Neighbor> neighbors_before(const data::CascadeGraph& graph, std::size_t v, double t,
                                       NeighborDirection direction) {
  std::vector<Neighbor> out;
  for (const data::Incidence& inc : graph.incident(v)) {
    if (!(inc.time < t)) break;
    if (direction == NeighborDirection::kIn && inc.outgoing) continue;
    if (direction == NeighborDirection::kOut && !inc.outgoing) continue;
    out.push_back(Neighbor{inc.other, inc.time});
  }
  return out;
}

TemporalNeighborhood sample_uniform(std::size_t target, double t, std::span<const Neighbor> neigh,
                                    std::size_t n_sample, Rng& rng) {
  if (n_sample == 0) throw ArgumentError("sample_uniform: n_sample must be at least 1");
  TemporalNeighborhood out;
  out.target = target;
  out.t = t;
  if (neigh.size() <= n_sample) {
    out.neighbors.assign(neigh.begin(), neigh.end());
  } else {
    std::vector<std::size_t> idx(neigh.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = 0; i < n_sample; ++i) {
      const std::size_t j = i + uniform_below(rng, idx.size() - i);
      std::swap(idx[i], idx[j]);
    }
    idx.resize(n_sample);
    std::sort(idx.begin(), idx.end());
    out.neighbors.reserve(n_sample);
    for (std::size_t i : idx) out.neighbors.push_back(neigh[i]);
    std::stable_sort(out.neighbors.begin(), out.neighbors.end(),
                     [](const Neighbor& a, const Neighbor& b) {
                       return a.time < b.time || (a.time == b.time && a.node < b.node);
                     });
  }
  out.valid.assign(n_sample, 0);
  std::fill_n(out.valid.begin(), out.neighbors.size(), std::uint8_t{1});
  return out;
}

Rng neighborhood_rng(std::uint64_t seed, std::size_t node, double t, std::size_t layer) {
  std::uint64_t s = mix_seed(seed, node);
  s = mix_seed(s, std::bit_cast<std::uint64_t>(t));
  s = mix_seed(s, layer);
  return Rng(s);
}

}  // namespace hiercas::sampling
