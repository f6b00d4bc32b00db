#pragma once

// HierCas network: user/time/size embeddings, stacked temporal graph
// attention layers, multi-level attention pooling and a linear head that
// predicts log2(delta_p + 1).

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hiercas/autodiff.hpp"
#include "hiercas/cascade.hpp"
#include "hiercas/sampler.hpp"

namespace hiercas::model {

/// Time at which a node's top-layer feature is read for pooling.
enum class PoolTime : std::uint8_t {
  kObservation,  // every node evaluated at the observation time T_o
  kJoin,         // every node evaluated at its own join time
};

PoolTime parse_pool_time(std::string_view text);
std::string_view to_string(PoolTime p);

struct HierCasConfig {
  std::size_t d_user = 64;
  std::size_t d_time = 64;
  std::size_t d_size = 64;
  std::size_t d_hidden = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t n_sample = 20;
  std::size_t size_vocab = 101;
  std::size_t user_buckets = std::size_t{1} << 17;
  bool exact_users = false;  // vocabulary rows for training users, hashing for the rest

  // Ablations.
  bool no_time = false;
  bool no_size = false;
  bool mean_agg = false;
  bool no_multi = false;

  // Experiment switches.
  bool self_in_kv = false;
  sampling::NeighborDirection direction = sampling::NeighborDirection::kUndirected;
  PoolTime pool_time = PoolTime::kObservation;

  /// Sets d_user, d_time, d_size and d_hidden together.
  void set_dim(std::size_t d) { d_user = d_time = d_size = d_hidden = d; }
  std::size_t head_dim() const { return d_hidden / heads; }
  /// Number of pooled levels: L, or a single raw-embedding level when L = 0.
  std::size_t levels() const { return layers == 0 ? 1 : layers; }
  /// Throws ConfigError on violated invariants.
  void validate() const;

  bool operator==(const HierCasConfig&) const = default;
};

/// Maps user ids to rows of the user table: an optional exact vocabulary
/// followed by `buckets` hashed rows shared by all other users.
class UserIndex {
 public:
  UserIndex() = default;
  explicit UserIndex(std::size_t buckets, std::vector<std::string> vocab = {});

  std::size_t rows() const noexcept { return vocab_.size() + buckets_; }
  std::size_t row(std::string_view user) const;
  const std::vector<std::string>& vocab() const noexcept { return vocab_; }
  std::size_t buckets() const noexcept { return buckets_; }

 private:
  std::size_t buckets_ = 1;
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

enum class ParamKind : std::uint8_t {
  kDense,      // projections, FFN, pooling, head
  kEmbedding,  // user and size tables
  kFrequency,  // time-encoder omega and alpha
};

struct Parameter {
  std::string name;
  ad::Tensor value;
  ParamKind kind = ParamKind::kDense;
};

/// Indices into the parameter list.
struct ParamLayout {
  struct Head {
    std::size_t w_q, w_k, w_v;
  };
  struct Layer {
    std::vector<Head> heads;
    std::size_t w_0, b_0, w_1, b_1;
  };
  struct Pool {
    std::size_t w_a, b_a, w_b, b_b;
  };
  std::size_t user_table = 0;
  std::size_t omega = 0;
  std::size_t alpha = 0;
  std::size_t size_table = 0;
  std::vector<Layer> layers;  // layers[l - 1] is attention layer l
  std::vector<Pool> pools;    // one per pooled level
  std::size_t level_weights = 0;
  std::size_t head_w = 0;
  std::size_t head_b = 0;
};

/// Named, ordered parameter registry.
class ModelParams {
 public:
  ModelParams() = default;
  /// Fresh parameters: uniform(+-1/sqrt(fan_in)) weights and tables, omega
  /// log-spaced over [1e-5, 1], alpha = 1, level weights 1/levels, head bias 0.
  static ModelParams init(const HierCasConfig& cfg, std::size_t user_rows, std::uint64_t seed);

  std::vector<Parameter>& list() noexcept { return params_; }
  const std::vector<Parameter>& list() const noexcept { return params_; }
  std::size_t size() const noexcept { return params_.size(); }
  const ParamLayout& layout() const noexcept { return layout_; }

  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  std::optional<std::size_t> find(std::string_view name) const;
  ad::Tensor& at(std::string_view name);
  const ad::Tensor& at(std::string_view name) const;

  std::size_t scalar_count() const;

 private:
  std::vector<Parameter> params_;
  ParamLayout layout_;
};

/// Configuration, user index and parameters of one model instance.
struct HierCas {
  HierCasConfig config;
  UserIndex users;
  ModelParams params;

  static HierCas create(const HierCasConfig& cfg, UserIndex users, std::uint64_t seed);
};

// ---------------------------------------------------------------------------
// Building blocks on the tape.

/// Time embedding of each interval in `dts` as rows of an [n x d_t] tensor:
/// sqrt(1/d_t) * alpha_k * cos(omega_k * dt). Zeros when `disabled`.
/// Throws ArgumentError on a negative interval.
ad::Var time_embed(ad::Var omega, ad::Var alpha, std::span<const double> dts, bool disabled);

/// Rows min(delta, vocab - 1) of the size table. Zeros when `disabled`.
/// Throws ArgumentError on a negative delta.
ad::Var size_embed(ad::Var table, std::span<const std::int64_t> deltas, bool disabled);

struct PoolVars {
  ad::Var w_a, b_a, w_b, b_b;
};

struct PoolOutput {
  ad::Var graph_feature;  // [1 x d]
  ad::Var weights;        // [1 x N], softmax over nodes
};

/// Attention pooling of node features [N x d]: weights are a softmax over
/// a two-layer MLP score per node.
PoolOutput att_pool(ad::Var node_features, const PoolVars& vars);

/// Sum of level_weights[l] * level_features[l]; only the last level when
/// `last_only` is set.
ad::Var aggregate_levels(std::span<const ad::Var> level_features, ad::Var level_weights,
                         bool last_only);

/// log2(delta_p + 1), the regression target.
double log_target(std::int64_t delta_p);

/// Mean over the batch of (pred_i - log2(delta_i + 1))^2.
ad::Var msle_loss(std::span<const ad::Var> preds_log, std::span<const std::int64_t> truths);

/// Per-head attention weights of one neighborhood aggregation.
struct AttentionRecord {
  std::size_t node = 0;
  double t = 0.0;
  std::size_t layer = 0;
  std::size_t head = 0;
  std::vector<double> weights;       // one per key row
  std::vector<std::uint8_t> valid;   // neighborhood slots (n_sample), 0 = padding
  bool self_loop = false;
};

/// Forward evaluation of one cascade on one tape. Node embeddings are
/// memoized per (node, time, layer) for the lifetime of this object, and
/// neighborhoods are drawn from generators seeded by (sample_seed, node,
/// time, layer).
class CascadeForward {
 public:
  CascadeForward(const HierCas& model, const data::CascadeGraph& graph, ad::Tape& tape,
                 std::uint64_t sample_seed);

  /// Layer-`layer` embedding of `v` at time `t`; layer 0 is the user
  /// embedding. Result is [1 x d_user] for layer 0, [1 x d_hidden] above.
  ad::Var node_embed(std::size_t v, double t, std::size_t layer);

  /// Evaluation time of node `v` for pooling.
  double pool_time(std::size_t v) const;
  /// Pooled graph feature of `level` (0 only when the model has no layers).
  PoolOutput pool_level(std::size_t level);
  /// Predicted log-scale increment, [1 x 1].
  ad::Var predict();

  ad::Var param(std::size_t index) const { return vars_[index]; }
  const std::vector<PoolOutput>& pooled() const noexcept { return pooled_; }

  void enable_trace() { trace_enabled_ = true; }
  const std::vector<AttentionRecord>& trace() const noexcept { return trace_; }

 private:
  struct Key {
    std::size_t node;
    std::uint64_t time_bits;
    std::size_t layer;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept;
  };

  ad::Var attention_layer(std::size_t v, double t, std::size_t layer);

  const HierCas& model_;
  const data::CascadeGraph& graph_;
  ad::Tape& tape_;
  std::uint64_t seed_;
  std::vector<ad::Var> vars_;
  std::vector<std::size_t> user_rows_;
  std::unordered_map<Key, ad::Var, KeyHash> memo_;
  std::vector<PoolOutput> pooled_;
  bool trace_enabled_ = false;
  std::vector<AttentionRecord> trace_;
};

/// Convenience: predicted log2(delta_p + 1) for one cascade.
double predict(const HierCas& model, const data::CascadeGraph& graph, std::uint64_t sample_seed);

/// Popularity increment implied by a log-scale prediction: max(0, 2^y - 1).
double popularity_from_log(double y);

/// Top-level pooling weights of a cascade, one per node in node order.
std::vector<double> pooling_weights(const HierCas& model, const data::CascadeGraph& graph,
                                    std::uint64_t sample_seed);

}  // namespace hiercas::model
