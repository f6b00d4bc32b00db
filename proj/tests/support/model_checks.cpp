#include "model_checks.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "dense_reference.hpp"
#include "gradcheck.hpp"

namespace hiercas::testing {

using ad::Tape;
using ad::Tensor;
using ad::Var;

model::HierCasConfig small_config(std::size_t d, std::size_t layers) {
  model::HierCasConfig cfg;
  cfg.set_dim(d);
  cfg.layers = layers;
  cfg.heads = 2;
  cfg.n_sample = 20;
  cfg.size_vocab = 6;
  cfg.user_buckets = 16;
  return cfg;
}

model::HierCas small_model(const model::HierCasConfig& cfg, std::uint64_t seed) {
  model::HierCas m = model::HierCas::create(cfg, model::UserIndex(cfg.user_buckets), seed);
  // Non-trivial head bias and level weights so every parameter matters.
  m.params.at("head.b")[0] = 0.3;
  return m;
}

namespace {

constexpr double kHorizon = 10.0;
constexpr double kTarget = 1.5;

double loss_value(const model::HierCas& m, const data::CascadeGraph& g, std::uint64_t seed) {
  const double d = model::predict(m, g, seed) - kTarget;
  return d * d;
}

data::CascadeGraph without_subtree(const data::CascadeGraph& g, std::size_t drop) {
  std::vector<bool> removed(g.num_nodes(), false);
  std::vector<std::size_t> new_index(g.num_nodes(), 0);
  std::vector<data::CascadeGraph::Join> joins;
  std::size_t next = 1;
  for (std::size_t k = 1; k < g.num_nodes(); ++k) {
    const std::size_t parent = *g.parent(k);
    removed[k] = k == drop || removed[parent];
    if (removed[k]) continue;
    new_index[k] = next++;
    joins.push_back({g.nodes()[k].user, new_index[parent], g.nodes()[k].join_time});
  }
  return data::CascadeGraph(g.id(), g.nodes()[0].user, joins, g.observation_time());
}

}  // namespace

double full_model_grad_error(const model::HierCasConfig& cfg, std::size_t nodes,
                             std::uint64_t seed, double h, double floor) {
  Rng rng(seed);
  const data::CascadeGraph g = random_graph(rng, nodes, kHorizon);
  model::HierCas m = small_model(cfg, seed);
  const std::uint64_t sample_seed = mix_seed(seed, 1);

  std::vector<Tensor> grads;
  {
    Tape tape;
    model::CascadeForward fwd(m, g, tape, sample_seed);
    Var diff = ad::sub(fwd.predict(), tape.constant(Tensor(ad::Shape{1, 1}, kTarget)));
    tape.backward(ad::square(diff));
    for (std::size_t i = 0; i < m.params.size(); ++i) grads.push_back(tape.grad(fwd.param(i)));
  }

  double worst = 0.0;
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    Tensor& value = m.params[i].value;
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double x = value[k];
      value[k] = x + h;
      const double up = loss_value(m, g, sample_seed);
      value[k] = x - h;
      const double down = loss_value(m, g, sample_seed);
      value[k] = x;
      worst = std::max(worst, rel_error(grads[i][k], (up - down) / (2.0 * h), floor));
    }
  }
  return worst;
}

double max_softmax_row_deviation(const model::HierCasConfig& cfg, std::size_t cascades,
                                 std::uint64_t seed) {
  Rng rng(seed);
  const model::HierCas m = small_model(cfg, seed);
  double worst = 0.0;
  for (std::size_t c = 0; c < cascades; ++c) {
    const data::CascadeGraph g = random_graph(rng, 2 + uniform_below(rng, 12), kHorizon);
    Tape tape;
    model::CascadeForward fwd(m, g, tape, mix_seed(seed, c));
    fwd.enable_trace();
    fwd.predict();
    for (const auto& rec : fwd.trace()) {
      double s = 0.0;
      for (double w : rec.weights) s += w;
      worst = std::max(worst, std::abs(s - 1.0));
    }
    for (const auto& pooled : fwd.pooled()) {
      double s = 0.0;
      for (double w : pooled.weights.value().data()) s += w;
      worst = std::max(worst, std::abs(s - 1.0));
    }
  }
  return worst;
}

std::size_t causality_violations(const model::HierCasConfig& cfg, std::size_t cascades,
                                 std::uint64_t seed) {
  Rng rng(seed);
  const model::HierCas m = small_model(cfg, seed);
  std::size_t violations = 0;
  for (std::size_t c = 0; c < cascades; ++c) {
    const data::CascadeGraph g = random_graph(rng, 4 + uniform_below(rng, 10), kHorizon);
    const std::uint64_t sample_seed = mix_seed(seed, c);
    std::vector<double> times{g.observation_time()};
    for (const auto& n : g.nodes()) times.push_back(n.join_time);
    times.push_back(kHorizon * uniform01(rng));

    for (double t : times) {
      std::vector<data::CascadeGraph> variants{g.truncated(t)};
      std::vector<std::size_t> later;
      for (std::size_t k = 1; k < g.num_nodes(); ++k) {
        if (g.nodes()[k].join_time > t) later.push_back(k);
      }
      if (!later.empty()) {
        variants.push_back(without_subtree(g, later[uniform_below(rng, later.size())]));
      }
      for (std::size_t v = 0; v < g.num_nodes(); ++v) {
        if (g.nodes()[v].join_time > t) continue;
        for (std::size_t layer = 1; layer <= cfg.layers; ++layer) {
          Tape full_tape;
          model::CascadeForward full(m, g, full_tape, sample_seed);
          const Tensor expect = full.node_embed(v, t, layer).value();
          for (const auto& cut : variants) {
            Tape tape;
            model::CascadeForward fwd(m, cut, tape, sample_seed);
            if (!(fwd.node_embed(v, t, layer).value() == expect)) ++violations;
          }
        }
      }
    }
  }
  return violations;
}

double pool_permutation_deviation(std::size_t trials, std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    const std::size_t n = 2 + uniform_below(rng, 15);
    const std::size_t d = 8;
    const Tensor feats = random_tensor({n, d}, mix_seed(seed, 10 * trial));
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[uniform_below(rng, i)]);
    Tensor permuted(ad::Shape{n, d});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) permuted(i, j) = feats(perm[i], j);
    }
    Tape tape;
    const model::PoolVars vars{
        tape.constant(random_tensor({d, d}, mix_seed(seed, 10 * trial + 1))),
        tape.constant(random_tensor({1, d}, mix_seed(seed, 10 * trial + 2))),
        tape.constant(random_tensor({d, 1}, mix_seed(seed, 10 * trial + 3))),
        tape.constant(random_tensor({1, 1}, mix_seed(seed, 10 * trial + 4)))};
    const Tensor a = model::att_pool(tape.constant(feats), vars).graph_feature.value();
    const Tensor b = model::att_pool(tape.constant(permuted), vars).graph_feature.value();
    for (std::size_t j = 0; j < d; ++j) worst = std::max(worst, std::abs(a[j] - b[j]));
  }
  return worst;
}

bool phi_zero_exact(std::size_t d_t, std::uint64_t seed) {
  Tape tape;
  const Tensor omega = random_tensor({1, d_t}, seed, 1e-5, 1.0);
  const Tensor alpha = random_tensor({1, d_t}, mix_seed(seed, 1), -2.0, 2.0);
  const double zero = 0.0;
  const Tensor phi = model::time_embed(tape.constant(omega), tape.constant(alpha),
                                       std::span<const double>(&zero, 1), false)
                         .value();
  const double s = std::sqrt(1.0 / static_cast<double>(d_t));
  for (std::size_t k = 0; k < d_t; ++k) {
    if (std::bit_cast<std::uint64_t>(phi[k]) != std::bit_cast<std::uint64_t>(s * alpha[k])) {
      return false;
    }
  }
  return true;
}

double dense_reference_deviation(const model::HierCasConfig& cfg, std::size_t cascades,
                                 std::size_t nodes, std::uint64_t seed) {
  Rng rng(seed);
  model::HierCas m = small_model(cfg, seed);
  double worst = 0.0;
  for (std::size_t c = 0; c < cascades; ++c) {
    const data::CascadeGraph g = random_graph(rng, nodes, kHorizon, "g" + std::to_string(c));
    m.config.n_sample = std::max<std::size_t>(1, max_degree(g));
    const std::uint64_t sample_seed = mix_seed(seed, c);
    const DenseReference ref(m, g);

    Tape tape;
    model::CascadeForward fwd(m, g, tape, sample_seed);
    for (std::size_t v = 0; v < g.num_nodes(); ++v) {
      for (double t : {g.observation_time(), g.nodes()[v].join_time}) {
        for (std::size_t layer = 0; layer <= cfg.layers; ++layer) {
          const Tensor got = fwd.node_embed(v, t, layer).value();
          const std::vector<double> want = ref.embed(v, t, layer);
          for (std::size_t j = 0; j < want.size(); ++j) {
            worst = std::max(worst, std::abs(got[j] - want[j]));
          }
        }
      }
    }
    worst = std::max(worst, std::abs(fwd.predict().value().item() - ref.predict()));
  }
  return worst;
}

}  // namespace hiercas::testing
