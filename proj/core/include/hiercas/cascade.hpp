#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hiercas::data {

/// One retweet: `child` re-shares `parent`'s post at `offset` corpus time
/// units after publication.
struct RetweetEvent {
  std::string child;
  std::string parent;
  std::int64_t offset = 0;

  bool operator==(const RetweetEvent&) const = default;
};

/// Raw cascade as read from a corpus line. Events are sorted by
/// non-decreasing offset and every parent appears before its children.
struct CascadeRecord {
  std::string id;
  std::string root_user;
  std::int64_t publish_time = 0;
  std::vector<RetweetEvent> events;

  bool operator==(const CascadeRecord&) const = default;
};

/// Parses one tab-separated corpus line:
///   cascade_id \t root_user \t publish_time \t num_events \t path_list
/// Each path `a/b/.../y/z:t` is the event (z retweets y at offset t). A
/// leading `root:0` entry is accepted and dropped. Events are stably sorted
/// by offset before parent validation. Throws ParseError tagged with
/// `line_no`.
CascadeRecord parse_line(std::string_view line, std::size_t line_no = 0);

/// Canonical line for a record: `num_events` is the event count, the path
/// list starts with `root:0` and every event carries its full root path.
std::string format_line(const CascadeRecord& record);

struct CorpusReadResult {
  std::vector<CascadeRecord> records;
  std::size_t skipped = 0;          // malformed lines (lenient mode)
  std::string first_error;          // message of the first skipped line
};

/// Reads a corpus file. In strict mode the first malformed line throws;
/// otherwise malformed lines are counted and skipped. Blank lines are
/// ignored.
CorpusReadResult read_corpus(const std::filesystem::path& path, bool strict = false);
void write_corpus(const std::filesystem::path& path, std::span<const CascadeRecord> records);

struct GraphNode {
  std::string user;
  double join_time = 0.0;
};

/// Retweet edge: `child` joined by re-sharing `parent` at `time`.
struct GraphEdge {
  std::size_t child = 0;
  std::size_t parent = 0;
  double time = 0.0;
};

/// One edge as seen from a node. `outgoing` is true when the node is the
/// child (retweeter) of that edge.
struct Incidence {
  std::size_t other = 0;
  double time = 0.0;
  bool outgoing = false;
};

/// Timestamped retweet tree rooted at node 0 (the original poster). Node k
/// (k >= 1) joins through edge k-1, so nodes are in join order and
/// edge.time == join_time(edge.child).
class CascadeGraph {
 public:
  CascadeGraph() = default;
  /// A node joining the tree: `user` retweets node `parent` (an earlier
  /// node index) at `time`.
  struct Join {
    std::string user;
    std::size_t parent = 0;
    double time = 0.0;
  };

  /// Builds from the root user plus joins in time order; times are already
  /// in model time units. Throws ArgumentError on an unknown parent, a
  /// duplicate user, or decreasing times.
  CascadeGraph(std::string id, std::string root_user, std::span<const Join> joins,
               double observation_time);

  const std::string& id() const noexcept { return id_; }
  const std::vector<GraphNode>& nodes() const noexcept { return nodes_; }
  const std::vector<GraphEdge>& edges() const noexcept { return edges_; }
  std::size_t num_nodes() const noexcept { return nodes_.size(); }
  double observation_time() const noexcept { return observation_time_; }

  /// Number of edges with time <= t.
  std::int64_t size_at(double t) const;
  /// Edges incident to `v`, sorted by (time, other node).
  std::span<const Incidence> incident(std::size_t v) const { return adjacency_.at(v); }
  /// Hop distance from the root.
  std::size_t depth(std::size_t v) const { return depth_.at(v); }
  std::optional<std::size_t> parent(std::size_t v) const;

  /// Copy without the events strictly later than `t` (a prefix of the
  /// node list; indices are preserved).
  CascadeGraph truncated(double t) const;

 private:
  std::string id_;
  std::vector<GraphNode> nodes_;
  std::vector<GraphEdge> edges_;
  std::vector<std::vector<Incidence>> adjacency_;
  std::vector<std::size_t> depth_;
  std::vector<double> edge_times_;
  double observation_time_ = 0.0;
};

/// Observation window settings. `t_obs`/`t_pred` are in raw corpus units;
/// `time_unit` divides raw offsets to obtain model time (1 = seconds,
/// 86400 = days for second-resolution corpora).
struct ObservationConfig {
  std::int64_t t_obs = 1800;
  std::int64_t t_pred = 86400;
  std::size_t min_observed = 10;
  std::size_t max_observed = 100;
  double time_unit = 1.0;

  /// Throws ConfigError on violated invariants.
  void validate() const;
  bool operator==(const ObservationConfig&) const = default;
};

struct LabeledCascade {
  CascadeGraph graph;          // observed events only, capped at max_observed
  std::int64_t delta_p = 0;    // |E(T_p)| - |E(T_o)| on the full record
  std::int64_t observed = 0;   // |E(T_o)| before capping
};

/// Observed graph of a record: events with offset <= t_obs, keeping only
/// the first `max_observed`. No size filter is applied.
CascadeGraph build_observed_graph(const CascadeRecord& record, const ObservationConfig& cfg);

/// Labeled sample, or nullopt when fewer than `min_observed` events fall in
/// the observation window. The label counts true growth; the input cap does
/// not affect it.
std::optional<LabeledCascade> build_labeled(const CascadeRecord& record,
                                            const ObservationConfig& cfg);

struct SplitRatios {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Seeded shuffled partition of [0, n). Train and validation sizes are
/// rounded to nearest; the test split takes the remainder.
SplitIndices split_indices(std::size_t n, const SplitRatios& ratios, std::uint64_t seed);

template <typename T>
struct Splits {
  std::vector<T> train;
  std::vector<T> val;
  std::vector<T> test;
};

template <typename T>
Splits<T> split_dataset(const std::vector<T>& items, const SplitRatios& ratios,
                        std::uint64_t seed) {
  const SplitIndices idx = split_indices(items.size(), ratios, seed);
  Splits<T> out;
  for (std::size_t i : idx.train) out.train.push_back(items[i]);
  for (std::size_t i : idx.val) out.val.push_back(items[i]);
  for (std::size_t i : idx.test) out.test.push_back(items[i]);
  return out;
}

/// size_at(t1) - size_at(t2); requires t1 >= t2.
std::int64_t size_change(const CascadeGraph& graph, double t1, double t2);

struct CorpusStats {
  std::size_t cascades = 0;
  std::size_t nodes = 0;
  std::size_t edges = 0;
  double average_hops = 0.0;    // mean over cascades of mean non-root depth
  double average_growth = 0.0;  // mean delta_p
};

CorpusStats corpus_stats(std::span<const LabeledCascade> cascades);

}  // namespace hiercas::data
