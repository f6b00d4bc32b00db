#include "hiercas/synthgen.hpp"

#include <cmath>
#include <queue>
#include <string>
#include <unordered_set>

#include "hiercas/errors.hpp"
#include "hiercas/parallel.hpp"

namespace hiercas::synth {

void GenParams::validate() const {
  if (!(base_branching >= 0.0)) throw ConfigError("base_branching must be non-negative");
  if (!(child_branching >= 0.0 && child_branching < 1.0)) {
    throw ConfigError("child_branching must lie in [0, 1) for finite cascades");
  }
  if (!(decay_rate > 0.0)) throw ConfigError("decay_rate must be positive");
  if (user_pool < 2) throw ConfigError("user_pool needs at least two users");
  if (!(influence_sigma >= 0.0)) throw ConfigError("influence_sigma must be non-negative");
  if (horizon <= 0) throw ConfigError("horizon must be positive");
}

std::vector<double> user_influence(const GenParams& p) {
  Rng rng(mix_seed(p.seed, fnv1a64("user-influence")));
  std::vector<double> w(p.user_pool);
  double total = 0.0;
  for (double& x : w) {
    x = std::exp(p.influence_sigma * standard_normal(rng));
    total += x;
  }
  const double mean = total / static_cast<double>(w.size());
  for (double& x : w) x /= mean;
  return w;
}

namespace {

struct Pending {
  double time;
  std::size_t parent;  // index into the emitted node list
  std::uint64_t seq;
  bool operator>(const Pending& o) const {
    return time != o.time ? time > o.time : seq > o.seq;
  }
};

std::string user_name(std::size_t u) { return "u" + std::to_string(u); }

}  // namespace

data::CascadeRecord generate_cascade(const GenParams& p, const std::vector<double>& influence,
                                     Rng& rng, std::string id) {
  p.validate();
  if (influence.size() != p.user_pool) {
    throw ArgumentError("generate_cascade: influence table does not match the user pool");
  }
  data::CascadeRecord rec;
  rec.id = std::move(id);
  rec.publish_time = p.publish_time;

  std::vector<std::size_t> users;  // pool index per emitted node
  std::unordered_set<std::size_t> used;
  const std::size_t root = uniform_below(rng, p.user_pool);
  users.push_back(root);
  used.insert(root);
  rec.root_user = user_name(root);

  std::priority_queue<Pending, std::vector<Pending>, std::greater<>> queue;
  std::uint64_t seq = 0;
  auto spawn = [&](std::size_t node, double t, double mean) {
    const std::uint64_t k = poisson(rng, mean);
    for (std::uint64_t i = 0; i < k; ++i) {
      queue.push(Pending{t + exponential(rng, p.decay_rate), node, seq++});
    }
  };
  spawn(0, 0.0, p.base_branching * influence[root]);

  const std::size_t cap = std::min(p.max_events, p.user_pool - 1);
  while (!queue.empty() && rec.events.size() < cap) {
    const Pending ev = queue.top();
    queue.pop();
    if (ev.time > static_cast<double>(p.horizon)) break;
    std::size_t u = uniform_below(rng, p.user_pool);
    while (used.count(u) != 0) u = uniform_below(rng, p.user_pool);
    used.insert(u);
    users.push_back(u);
    const auto offset = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(ev.time)));
    rec.events.push_back(data::RetweetEvent{user_name(u), user_name(users[ev.parent]), offset});
    spawn(users.size() - 1, ev.time, p.child_branching * influence[u]);
  }
  return rec;
}

data::CascadeRecord generate_cascade(const GenParams& p, Rng& rng) {
  return generate_cascade(p, user_influence(p), rng);
}

std::vector<data::CascadeRecord> generate_records(const GenParams& p, std::size_t n,
                                                  std::size_t threads) {
  p.validate();
  const std::vector<double> influence = user_influence(p);
  std::vector<data::CascadeRecord> out(n);
  parallel_for(n, resolve_threads(threads), [&](std::size_t i) {
    Rng rng(mix_seed(p.seed, i));
    out[i] = generate_cascade(p, influence, rng, "c" + std::to_string(i));
  });
  return out;
}

std::vector<data::CascadeRecord> generate_corpus(const GenParams& p, std::size_t n,
                                                 const std::filesystem::path& path,
                                                 std::size_t threads) {
  auto records = generate_records(p, n, threads);
  data::write_corpus(path, records);
  return records;
}

}  // namespace hiercas::synth
