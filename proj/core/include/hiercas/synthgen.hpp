#pragma once

// Synthetic cascades from a branching process with exponential delays.
//
// Every user u in a fixed pool carries an influence multiplier w_u
// (lognormal, rescaled so the pool mean is exactly 1). The root user r
// spawns Poisson(base_branching * w_r) children, every later node n spawns
// Poisson(child_branching * w_n) children; each child appears an
// Exponential(decay_rate) delay after its parent. Events after `horizon`
// are dropped together with their descendants.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "hiercas/cascade.hpp"
#include "hiercas/random.hpp"

namespace hiercas::synth {

struct GenParams {
  double base_branching = 30.0;    // mean direct retweets of the root
  double child_branching = 0.5;    // mean offspring of a retweeter; < 1
  double decay_rate = 1.0 / 3600;  // per corpus time unit
  std::size_t user_pool = 10000;
  double influence_sigma = 1.0;    // log-scale spread of user influence
  std::int64_t horizon = 86400;
  std::size_t max_events = 1000;
  std::uint64_t seed = 0;
  std::int64_t publish_time = 1'600'000'000;

  /// Throws ConfigError on violated invariants.
  void validate() const;
};

/// Influence multipliers of the user pool; mean exactly 1.
std::vector<double> user_influence(const GenParams& p);

/// One cascade with id `id`. `influence` must come from user_influence(p).
data::CascadeRecord generate_cascade(const GenParams& p, const std::vector<double>& influence,
                                     Rng& rng, std::string id = "c0");

/// Convenience overload computing the influence table.
data::CascadeRecord generate_cascade(const GenParams& p, Rng& rng);

/// `n` cascades; cascade i uses its own stream seeded from (seed, i).
std::vector<data::CascadeRecord> generate_records(const GenParams& p, std::size_t n,
                                                  std::size_t threads = 0);

/// generate_records() written as a corpus file.
std::vector<data::CascadeRecord> generate_corpus(const GenParams& p, std::size_t n,
                                                 const std::filesystem::path& path,
                                                 std::size_t threads = 0);

}  // namespace hiercas::synth
