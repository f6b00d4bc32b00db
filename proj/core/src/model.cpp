#include "hiercas/model.hpp"

#include <bit>
#include <cmath>
#include <string>

#include "hiercas/errors.hpp"
#include "hiercas/random.hpp"

namespace hiercas::model {

using ad::Shape;
using ad::Tensor;
using ad::Var;

PoolTime parse_pool_time(std::string_view text) {
  if (text == "observation") return PoolTime::kObservation;
  if (text == "join") return PoolTime::kJoin;
  throw ConfigError("unknown pool time '" + std::string(text) +
                    "' (expected observation or join)");
}

std::string_view to_string(PoolTime p) {
  return p == PoolTime::kJoin ? "join" : "observation";
}

void HierCasConfig::validate() const {
  if (d_user == 0 || d_time == 0 || d_size == 0 || d_hidden == 0) {
    throw ConfigError("embedding and hidden dimensions must be positive");
  }
  if (heads == 0 || d_hidden % heads != 0) {
    throw ConfigError("hidden dimension " + std::to_string(d_hidden) +
                      " is not divisible by " + std::to_string(heads) + " heads");
  }
  if (size_vocab == 0) throw ConfigError("size vocabulary must have at least one row");
  if (n_sample == 0) throw ConfigError("neighbor sample size must be at least 1");
  if (user_buckets == 0) throw ConfigError("user_buckets must be at least 1");
}

// ---------------------------------------------------------------------------

UserIndex::UserIndex(std::size_t buckets, std::vector<std::string> vocab)
    : buckets_(buckets), vocab_(std::move(vocab)) {
  if (buckets_ == 0) throw ConfigError("user index needs at least one hash bucket");
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    if (!lookup_.emplace(vocab_[i], i).second) {
      throw ConfigError("duplicate user '" + vocab_[i] + "' in vocabulary");
    }
  }
}

std::size_t UserIndex::row(std::string_view user) const {
  if (!lookup_.empty()) {
    const auto it = lookup_.find(std::string(user));
    if (it != lookup_.end()) return it->second;
  }
  return vocab_.size() + fnv1a64(user) % buckets_;
}

// ---------------------------------------------------------------------------

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& x : t.data()) x = (2.0 * uniform01(rng) - 1.0) * bound;
  return t;
}

}  // namespace

ModelParams ModelParams::init(const HierCasConfig& cfg, std::size_t user_rows,
                              std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ModelParams mp;
  auto add = [&](std::string name, Tensor value, ParamKind kind) {
    mp.params_.push_back(Parameter{std::move(name), std::move(value), kind});
    return mp.params_.size() - 1;
  };
  auto dense = [&](std::string name, std::size_t fan_in, std::size_t fan_out) {
    return add(std::move(name),
               uniform_tensor(Shape{fan_in, fan_out}, 1.0 / std::sqrt(double(fan_in)), rng),
               ParamKind::kDense);
  };
  auto bias = [&](std::string name, std::size_t fan_in, std::size_t width) {
    return add(std::move(name),
               uniform_tensor(Shape{1, width}, 1.0 / std::sqrt(double(fan_in)), rng),
               ParamKind::kDense);
  };

  ParamLayout& lay = mp.layout_;
  lay.user_table = add("user.W_u",
                       uniform_tensor(Shape{user_rows, cfg.d_user},
                                      1.0 / std::sqrt(double(cfg.d_user)), rng),
                       ParamKind::kEmbedding);

  std::vector<double> omega(cfg.d_time);
  for (std::size_t k = 0; k < cfg.d_time; ++k) {
    const double frac = cfg.d_time == 1 ? 1.0 : double(k) / double(cfg.d_time - 1);
    omega[k] = std::pow(10.0, -5.0 + 5.0 * frac);
  }
  lay.omega = add("time.omega", Tensor::row(omega), ParamKind::kFrequency);
  lay.alpha = add("time.alpha", Tensor(Shape{1, cfg.d_time}, 1.0), ParamKind::kFrequency);
  lay.size_table = add("size.W_s",
                       uniform_tensor(Shape{cfg.size_vocab, cfg.d_size},
                                      1.0 / std::sqrt(double(cfg.d_size)), rng),
                       ParamKind::kEmbedding);

  for (std::size_t l = 1; l <= cfg.layers; ++l) {
    const std::size_t d_in = (l == 1 ? cfg.d_user : cfg.d_hidden) + cfg.d_time + cfg.d_size;
    const std::string prefix = "layer" + std::to_string(l) + ".";
    ParamLayout::Layer layer;
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      const std::string hp = prefix + "head" + std::to_string(h) + ".";
      ParamLayout::Head head{};
      head.w_q = dense(hp + "W_q", d_in, cfg.head_dim());
      head.w_k = dense(hp + "W_K", d_in, cfg.head_dim());
      head.w_v = dense(hp + "W_V", d_in, cfg.head_dim());
      layer.heads.push_back(head);
    }
    const std::size_t ffn_in = cfg.d_hidden + cfg.d_user;
    layer.w_0 = dense(prefix + "ffn.W_0", ffn_in, cfg.d_hidden);
    layer.b_0 = bias(prefix + "ffn.b_0", ffn_in, cfg.d_hidden);
    layer.w_1 = dense(prefix + "ffn.W_1", cfg.d_hidden, cfg.d_hidden);
    layer.b_1 = bias(prefix + "ffn.b_1", cfg.d_hidden, cfg.d_hidden);
    lay.layers.push_back(std::move(layer));
  }

  const std::size_t d_pool = cfg.layers == 0 ? cfg.d_user : cfg.d_hidden;
  const std::size_t first_level = cfg.layers == 0 ? 0 : 1;
  for (std::size_t i = 0; i < cfg.levels(); ++i) {
    const std::string prefix = "pool" + std::to_string(first_level + i) + ".";
    ParamLayout::Pool pool{};
    pool.w_a = dense(prefix + "W_a", d_pool, d_pool);
    pool.b_a = bias(prefix + "b_a", d_pool, d_pool);
    pool.w_b = dense(prefix + "W_b", d_pool, 1);
    pool.b_b = bias(prefix + "b_b", d_pool, 1);
    lay.pools.push_back(pool);
  }
  lay.level_weights = add("pool.omega",
                          Tensor(Shape{1, cfg.levels()}, 1.0 / double(cfg.levels())),
                          ParamKind::kDense);
  lay.head_w = dense("head.W", d_pool, 1);
  lay.head_b = add("head.b", Tensor(Shape{1, 1}, 0.0), ParamKind::kDense);
  return mp;
}

std::optional<std::size_t> ModelParams::find(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  return std::nullopt;
}

Tensor& ModelParams::at(std::string_view name) {
  const auto i = find(name);
  if (!i) throw IndexError("no parameter named '" + std::string(name) + "'");
  return params_[*i].value;
}

const Tensor& ModelParams::at(std::string_view name) const {
  return const_cast<ModelParams*>(this)->at(name);
}

std::size_t ModelParams::scalar_count() const {
  std::size_t n = 0;
  for (const Parameter& p : params_) n += p.value.size();
  return n;
}

HierCas HierCas::create(const HierCasConfig& cfg, UserIndex users, std::uint64_t seed) {
  if (users.buckets() != cfg.user_buckets) {
    throw ConfigError("user index has " + std::to_string(users.buckets()) +
                      " hash buckets but the config asks for " +
                      std::to_string(cfg.user_buckets));
  }
  HierCas m;
  m.config = cfg;
  m.params = ModelParams::init(cfg, users.rows(), seed);
  m.users = std::move(users);
  return m;
}

// ---------------------------------------------------------------------------

Var time_embed(Var omega, Var alpha, std::span<const double> dts, bool disabled) {
  for (double dt : dts) {
    if (!(dt >= 0.0)) {
      throw ArgumentError("time_embed: negative time interval " + std::to_string(dt));
    }
  }
  ad::Tape& tape = *omega.tape;
  const std::size_t n = dts.size();
  const std::size_t d = omega.value().cols();
  if (disabled) return tape.constant(Tensor(Shape{n, d}));
  Var column = tape.constant(Tensor(Shape{n, 1}, std::vector<double>(dts.begin(), dts.end())));
  Var waves = ad::cos(ad::matmul(column, omega));
  Var amplitude = n == 1 ? alpha : ad::repeat_rows(alpha, n);
  return ad::scale(ad::mul(waves, amplitude), std::sqrt(1.0 / double(d)));
}

Var size_embed(Var table, std::span<const std::int64_t> deltas, bool disabled) {
  const std::size_t vocab = table.value().rows();
  std::vector<std::size_t> rows;
  rows.reserve(deltas.size());
  for (std::int64_t delta : deltas) {
    if (delta < 0) throw ArgumentError("size_embed: negative size change");
    rows.push_back(std::min<std::size_t>(static_cast<std::size_t>(delta), vocab - 1));
  }
  if (disabled) return table.tape->constant(Tensor(Shape{deltas.size(), table.value().cols()}));
  return ad::gather_rows(table, rows);
}

PoolOutput att_pool(Var node_features, const PoolVars& vars) {
  const Tensor& h = node_features.value();
  if (h.rank() != 2 || h.rows() == 0) throw ArgumentError("att_pool: empty node set");
  const std::size_t n = h.rows();
  auto rows_of = [n](Var b) { return n == 1 ? b : ad::repeat_rows(b, n); };
  Var hidden = ad::relu(ad::add(ad::matmul(node_features, vars.w_a), rows_of(vars.b_a)));
  Var scores = ad::add(ad::matmul(hidden, vars.w_b), rows_of(vars.b_b));  // [N x 1]
  Var weights = ad::softmax_row(ad::transpose(scores));                  // [1 x N]
  return PoolOutput{ad::matmul(weights, node_features), weights};
}

Var aggregate_levels(std::span<const Var> level_features, Var level_weights, bool last_only) {
  const std::size_t n = level_features.size();
  if (n == 0 || level_weights.value().size() != n) {
    throw DimensionError("aggregate_levels: " + std::to_string(n) + " level features for " +
                         std::to_string(level_weights.value().size()) + " level weights");
  }
  if (last_only) return level_features.back();
  Var total{};
  for (std::size_t l = 0; l < n; ++l) {
    Var w = ad::slice_cols(level_weights, l, l + 1);
    Var term = ad::mul_scalar(w, level_features[l]);
    total = l == 0 ? term : ad::add(total, term);
  }
  return total;
}

double log_target(std::int64_t delta_p) { return std::log2(static_cast<double>(delta_p) + 1.0); }

Var msle_loss(std::span<const Var> preds_log, std::span<const std::int64_t> truths) {
  if (preds_log.empty() || preds_log.size() != truths.size()) {
    throw DimensionError("msle_loss: " + std::to_string(preds_log.size()) + " predictions for " +
                         std::to_string(truths.size()) + " labels");
  }
  ad::Tape& tape = *preds_log.front().tape;
  std::vector<double> targets;
  for (std::int64_t t : truths) {
    if (t < 0) throw ArgumentError("msle_loss: negative popularity increment");
    targets.push_back(log_target(t));
  }
  std::vector<Var> rows;
  for (Var p : preds_log) {
    if (p.value().size() != 1) throw DimensionError("msle_loss: predictions must be scalars");
    rows.push_back(p.value().rank() == 2 ? p : ad::repeat_rows(p, 1));
  }
  Var stacked = rows.size() == 1 ? rows[0] : ad::stack_rows(rows);
  Var target = tape.constant(Tensor(Shape{targets.size(), 1}, targets));
  return ad::mean(ad::square(ad::sub(stacked, target)));
}

double popularity_from_log(double y) { return std::max(0.0, std::exp2(y) - 1.0); }

// ---------------------------------------------------------------------------

std::size_t CascadeForward::KeyHash::operator()(const Key& k) const noexcept {
  return static_cast<std::size_t>(
      mix_seed(mix_seed(k.node, k.time_bits), static_cast<std::uint64_t>(k.layer)));
}

CascadeForward::CascadeForward(const HierCas& model, const data::CascadeGraph& graph,
                               ad::Tape& tape, std::uint64_t sample_seed)
    : model_(model), graph_(graph), tape_(tape), seed_(sample_seed) {
  vars_.reserve(model.params.size());
  for (const Parameter& p : model.params.list()) vars_.push_back(tape.parameter(p.value));
  user_rows_.reserve(graph.num_nodes());
  for (const data::GraphNode& n : graph.nodes()) user_rows_.push_back(model.users.row(n.user));
}

Var CascadeForward::node_embed(std::size_t v, double t, std::size_t layer) {
  if (v >= graph_.num_nodes()) throw IndexError("node_embed: node " + std::to_string(v) +
                                                " not in cascade " + graph_.id());
  if (layer > model_.config.layers) {
    throw ArgumentError("node_embed: layer " + std::to_string(layer) + " exceeds model depth");
  }
  // Layer 0 does not depend on time.
  const Key key{v, layer == 0 ? 0 : std::bit_cast<std::uint64_t>(t), layer};
  if (const auto it = memo_.find(key); it != memo_.end()) return it->second;
  Var out = layer == 0
                ? ad::gather_rows(vars_[model_.params.layout().user_table],
                                  std::span<const std::size_t>(&user_rows_[v], 1))
                : attention_layer(v, t, layer);
  memo_.emplace(key, out);
  return out;
}

Var CascadeForward::attention_layer(std::size_t v, double t, std::size_t layer) {
  const HierCasConfig& cfg = model_.config;
  const ParamLayout& lay = model_.params.layout();
  const ParamLayout::Layer& lp = lay.layers[layer - 1];
  Var omega = vars_[lay.omega];
  Var alpha = vars_[lay.alpha];
  Var size_table = vars_[lay.size_table];

  const auto candidates = sampling::neighbors_before(graph_, v, t, cfg.direction);
  Rng rng = sampling::neighborhood_rng(seed_, v, t, layer);
  const sampling::TemporalNeighborhood hood =
      sampling::sample_uniform(v, t, candidates, cfg.n_sample, rng);

  Var own = node_embed(v, t, layer - 1);
  const double zero_dt = 0.0;
  const std::int64_t zero_delta = 0;
  const Var query_parts[] = {own, time_embed(omega, alpha, {&zero_dt, 1}, cfg.no_time),
                             size_embed(size_table, {&zero_delta, 1}, cfg.no_size)};
  Var query_row = ad::concat_lastdim(query_parts);

  // Key/value rows; an empty neighborhood falls back to the node itself.
  const bool self_loop = hood.neighbors.empty();
  Var kv = query_row;
  if (!self_loop) {
    std::vector<Var> feats;
    std::vector<double> dts;
    std::vector<std::int64_t> deltas;
    const std::int64_t size_now = graph_.size_at(t);
    for (const sampling::Neighbor& nb : hood.neighbors) {
      feats.push_back(node_embed(nb.node, nb.time, layer - 1));
      dts.push_back(t - nb.time);
      deltas.push_back(size_now - graph_.size_at(nb.time));
    }
    const Var parts[] = {feats.size() == 1 ? feats[0] : ad::stack_rows(feats),
                         time_embed(omega, alpha, dts, cfg.no_time),
                         size_embed(size_table, deltas, cfg.no_size)};
    kv = ad::concat_lastdim(parts);
    if (cfg.self_in_kv) {
      const Var rows[] = {query_row, kv};
      kv = ad::stack_rows(rows);
    }
  }
  const std::size_t n_rows = kv.value().rows();

  std::vector<Var> head_out;
  head_out.reserve(lp.heads.size());
  const double inv_sqrt_dk = 1.0 / std::sqrt(double(cfg.head_dim()));
  for (std::size_t h = 0; h < lp.heads.size(); ++h) {
    Var values = ad::matmul(kv, vars_[lp.heads[h].w_v]);
    Var weights;
    if (cfg.mean_agg) {
      weights = tape_.constant(Tensor(Shape{1, n_rows}, 1.0 / double(n_rows)));
    } else {
      Var q = ad::matmul(query_row, vars_[lp.heads[h].w_q]);
      Var keys = ad::matmul(kv, vars_[lp.heads[h].w_k]);
      weights = ad::softmax_row(ad::scale(ad::matmul(q, ad::transpose(keys)), inv_sqrt_dk));
    }
    if (trace_enabled_) {
      const Tensor& w = weights.value();
      trace_.push_back(AttentionRecord{v, t, layer, h, {w.data().begin(), w.data().end()},
                                       hood.valid, self_loop});
    }
    head_out.push_back(ad::matmul(weights, values));
  }
  Var attended = head_out.size() == 1 ? head_out[0] : ad::concat_lastdim(head_out);

  const Var ffn_in[] = {attended, node_embed(v, t, 0)};
  Var hidden = ad::relu(ad::add(ad::matmul(ad::concat_lastdim(ffn_in), vars_[lp.w_0]),
                                vars_[lp.b_0]));
  return ad::add(ad::matmul(hidden, vars_[lp.w_1]), vars_[lp.b_1]);
}

double CascadeForward::pool_time(std::size_t v) const {
  return model_.config.pool_time == PoolTime::kJoin ? graph_.nodes()[v].join_time
                                                    : graph_.observation_time();
}

PoolOutput CascadeForward::pool_level(std::size_t level) {
  const HierCasConfig& cfg = model_.config;
  if (cfg.layers == 0 ? level != 0 : (level == 0 || level > cfg.layers)) {
    throw ArgumentError("pool_level: level " + std::to_string(level) + " is not pooled");
  }
  const ParamLayout::Pool& pp = model_.params.layout().pools[cfg.layers == 0 ? 0 : level - 1];
  std::vector<Var> feats;
  feats.reserve(graph_.num_nodes());
  for (std::size_t v = 0; v < graph_.num_nodes(); ++v) {
    feats.push_back(node_embed(v, pool_time(v), level));
  }
  Var stacked = feats.size() == 1 ? feats[0] : ad::stack_rows(feats);
  return att_pool(stacked, PoolVars{vars_[pp.w_a], vars_[pp.b_a], vars_[pp.w_b], vars_[pp.b_b]});
}

Var CascadeForward::predict() {
  const HierCasConfig& cfg = model_.config;
  const ParamLayout& lay = model_.params.layout();
  pooled_.clear();
  std::vector<Var> levels;
  if (cfg.layers == 0) {
    pooled_.push_back(pool_level(0));
  } else {
    for (std::size_t l = 1; l <= cfg.layers; ++l) pooled_.push_back(pool_level(l));
  }
  for (const PoolOutput& p : pooled_) levels.push_back(p.graph_feature);
  Var graph_feature = aggregate_levels(levels, vars_[lay.level_weights], cfg.no_multi);
  return ad::add(ad::matmul(graph_feature, vars_[lay.head_w]), vars_[lay.head_b]);
}

double predict(const HierCas& model, const data::CascadeGraph& graph, std::uint64_t sample_seed) {
  ad::Tape tape;
  CascadeForward fwd(model, graph, tape, sample_seed);
  return fwd.predict().value().item();
}

std::vector<double> pooling_weights(const HierCas& model, const data::CascadeGraph& graph,
                                    std::uint64_t sample_seed) {
  ad::Tape tape;
  CascadeForward fwd(model, graph, tape, sample_seed);
  fwd.predict();
  const Tensor& w = fwd.pooled().back().weights.value();
  return {w.data().begin(), w.data().end()};
}

}  // namespace hiercas::model
