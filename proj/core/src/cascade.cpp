#include "hiercas/cascade.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "hiercas/errors.hpp"
#include "hiercas/random.hpp"

namespace hiercas::data {

namespace {

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(text.substr(start));
      return parts;
    }
    parts.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

std::int64_t parse_int(std::string_view text, std::size_t line_no, const char* what) {
  std::int64_t value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc() || ptr != end) {
    throw ParseError(line_no, std::string("non-numeric ") + what + " '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace

CascadeRecord parse_line(std::string_view line, std::size_t line_no) {
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.remove_suffix(1);
  const auto fields = split(line, '\t');
  if (fields.size() != 5) {
    throw ParseError(line_no, "expected 5 tab-separated fields, found " +
                                  std::to_string(fields.size()));
  }
  CascadeRecord record;
  record.id = std::string(fields[0]);
  record.root_user = std::string(fields[1]);
  if (record.id.empty()) throw ParseError(line_no, "empty cascade id");
  if (record.root_user.empty()) throw ParseError(line_no, "empty root user");
  record.publish_time = parse_int(fields[2], line_no, "publish time");
  if (parse_int(fields[3], line_no, "event count") < 0) {
    throw ParseError(line_no, "negative event count");
  }

  for (std::string_view entry : split(fields[4], ' ')) {
    if (entry.empty()) continue;
    const std::size_t colon = entry.rfind(':');
    if (colon == std::string_view::npos) {
      throw ParseError(line_no, "path entry without time '" + std::string(entry) + "'");
    }
    const std::int64_t offset = parse_int(entry.substr(colon + 1), line_no, "time");
    if (offset < 0) throw ParseError(line_no, "negative time offset");
    const auto users = split(entry.substr(0, colon), '/');
    for (std::string_view u : users) {
      if (u.empty()) throw ParseError(line_no, "empty user in path '" + std::string(entry) + "'");
    }
    if (users.size() == 1) {
      if (users[0] != record.root_user) {
        throw ParseError(line_no, "single-user path '" + std::string(entry) +
                                      "' is not the root");
      }
      continue;
    }
    record.events.push_back(RetweetEvent{std::string(users.back()),
                                         std::string(users[users.size() - 2]), offset});
  }

  std::stable_sort(record.events.begin(), record.events.end(),
                   [](const RetweetEvent& a, const RetweetEvent& b) { return a.offset < b.offset; });

  std::unordered_set<std::string> known{record.root_user};
  for (const RetweetEvent& e : record.events) {
    if (!known.contains(e.parent)) {
      throw ParseError(line_no, "unknown parent '" + e.parent + "' for user '" + e.child + "'");
    }
    if (!known.insert(e.child).second) {
      throw ParseError(line_no, "user '" + e.child + "' joins the cascade twice");
    }
  }
  return record;
}

std::string format_line(const CascadeRecord& record) {
  std::unordered_map<std::string, std::string> paths;
  paths.emplace(record.root_user, record.root_user);
  std::ostringstream out;
  out << record.id << '\t' << record.root_user << '\t' << record.publish_time << '\t'
      << record.events.size() << '\t' << record.root_user << ":0";
  for (const RetweetEvent& e : record.events) {
    const auto parent = paths.find(e.parent);
    if (parent == paths.end()) {
      throw ArgumentError("format_line: unknown parent '" + e.parent + "'");
    }
    std::string path = parent->second + "/" + e.child;
    out << ' ' << path << ':' << e.offset;
    paths.emplace(e.child, std::move(path));
  }
  return out.str();
}

CorpusReadResult read_corpus(const std::filesystem::path& path, bool strict) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file " + path.string());
  CorpusReadResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      result.records.push_back(parse_line(line, line_no));
    } catch (const ParseError& e) {
      if (strict) throw;
      if (result.skipped == 0) result.first_error = e.what();
      ++result.skipped;
    }
  }
  return result;
}

void write_corpus(const std::filesystem::path& path, std::span<const CascadeRecord> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write corpus file " + path.string());
  for (const CascadeRecord& r : records) out << format_line(r) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

// ---------------------------------------------------------------------------

CascadeGraph::CascadeGraph(std::string id, std::string root_user, std::span<const Join> joins,
                           double observation_time)
    : id_(std::move(id)), observation_time_(observation_time) {
  nodes_.push_back(GraphNode{std::move(root_user), 0.0});
  depth_.push_back(0);
  adjacency_.emplace_back();
  std::unordered_set<std::string> users{nodes_[0].user};
  double last = 0.0;
  for (const Join& j : joins) {
    const std::size_t child = nodes_.size();
    if (j.parent >= child) {
      throw ArgumentError("cascade " + id_ + ": node " + std::to_string(child) +
                          " references unknown parent " + std::to_string(j.parent));
    }
    if (!users.insert(j.user).second) {
      throw ArgumentError("cascade " + id_ + ": duplicate user '" + j.user + "'");
    }
    if (!(j.time >= last)) {
      throw ArgumentError("cascade " + id_ + ": join times must be non-decreasing");
    }
    last = j.time;
    nodes_.push_back(GraphNode{j.user, j.time});
    edges_.push_back(GraphEdge{child, j.parent, j.time});
    edge_times_.push_back(j.time);
    depth_.push_back(depth_[j.parent] + 1);
    adjacency_.emplace_back();
    adjacency_[child].push_back(Incidence{j.parent, j.time, true});
    adjacency_[j.parent].push_back(Incidence{child, j.time, false});
  }
  for (auto& list : adjacency_) {
    std::stable_sort(list.begin(), list.end(), [](const Incidence& a, const Incidence& b) {
      return a.time < b.time || (a.time == b.time && a.other < b.other);
    });
  }
}

std::int64_t CascadeGraph::size_at(double t) const {
  return std::upper_bound(edge_times_.begin(), edge_times_.end(), t) - edge_times_.begin();
}

std::optional<std::size_t> CascadeGraph::parent(std::size_t v) const {
  if (v == 0 || v >= nodes_.size()) return std::nullopt;
  return edges_[v - 1].parent;
}

CascadeGraph CascadeGraph::truncated(double t) const {
  std::vector<Join> joins;
  for (const GraphEdge& e : edges_) {
    if (e.time > t) break;
    joins.push_back(Join{nodes_[e.child].user, e.parent, e.time});
  }
  return CascadeGraph(id_, nodes_[0].user, joins, observation_time_);
}

// ---------------------------------------------------------------------------

void ObservationConfig::validate() const {
  if (t_obs < 0) throw ConfigError("observation time must be non-negative");
  if (t_pred <= t_obs) {
    throw ConfigError("prediction time (" + std::to_string(t_pred) +
                      ") must exceed observation time (" + std::to_string(t_obs) + ")");
  }
  if (min_observed < 1) throw ConfigError("min_observed must be at least 1");
  if (max_observed < min_observed) throw ConfigError("max_observed must be >= min_observed");
  if (!(time_unit > 0.0)) throw ConfigError("time_unit must be positive");
}

CascadeGraph build_observed_graph(const CascadeRecord& record, const ObservationConfig& cfg) {
  std::unordered_map<std::string, std::size_t> index{{record.root_user, 0}};
  std::vector<CascadeGraph::Join> joins;
  for (const RetweetEvent& e : record.events) {
    if (e.offset > cfg.t_obs || joins.size() >= cfg.max_observed) break;
    const auto parent = index.find(e.parent);
    if (parent == index.end()) {
      throw ArgumentError("cascade " + record.id + ": unknown parent '" + e.parent + "'");
    }
    joins.push_back(CascadeGraph::Join{e.child, parent->second,
                                       static_cast<double>(e.offset) / cfg.time_unit});
    index.emplace(e.child, joins.size());
  }
  return CascadeGraph(record.id, record.root_user, joins,
                      static_cast<double>(cfg.t_obs) / cfg.time_unit);
}

std::optional<LabeledCascade> build_labeled(const CascadeRecord& record,
                                            const ObservationConfig& cfg) {
  std::int64_t observed = 0;
  std::int64_t total = 0;
  for (const RetweetEvent& e : record.events) {
    if (e.offset <= cfg.t_obs) ++observed;
    if (e.offset <= cfg.t_pred) ++total;
  }
  if (observed < static_cast<std::int64_t>(cfg.min_observed)) return std::nullopt;
  return LabeledCascade{build_observed_graph(record, cfg), total - observed, observed};
}

SplitIndices split_indices(std::size_t n, const SplitRatios& ratios, std::uint64_t seed) {
  if (n == 0) throw ConfigError("cannot split an empty dataset");
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be non-negative and sum to 1");
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[uniform_below(rng, i)]);
  }
  const auto n_train = std::min<std::size_t>(
      n, static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios.train)));
  const auto n_val = std::min<std::size_t>(
      n - n_train, static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios.val)));
  SplitIndices out;
  out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                 order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return out;
}

std::int64_t size_change(const CascadeGraph& graph, double t1, double t2) {
  if (t1 < t2) {
    throw ArgumentError("size_change: t1 (" + std::to_string(t1) + ") precedes t2 (" +
                        std::to_string(t2) + ")");
  }
  return graph.size_at(t1) - graph.size_at(t2);
}

CorpusStats corpus_stats(std::span<const LabeledCascade> cascades) {
  if (cascades.empty()) throw ArgumentError("corpus_stats: empty corpus");
  CorpusStats stats;
  stats.cascades = cascades.size();
  double hops = 0.0;
  double growth = 0.0;
  for (const LabeledCascade& c : cascades) {
    const CascadeGraph& g = c.graph;
    stats.nodes += g.num_nodes();
    stats.edges += g.edges().size();
    if (g.num_nodes() > 1) {
      double depth_sum = 0.0;
      for (std::size_t v = 1; v < g.num_nodes(); ++v) depth_sum += static_cast<double>(g.depth(v));
      hops += depth_sum / static_cast<double>(g.num_nodes() - 1);
    }
    growth += static_cast<double>(c.delta_p);
  }
  stats.average_hops = hops / static_cast<double>(cascades.size());
  stats.average_growth = growth / static_cast<double>(cascades.size());
  return stats;
}

}  // namespace hiercas::data
