#include "dense_reference.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hiercas::testing {

namespace {

std::vector<double> row_times(const std::vector<double>& x, const ad::Tensor& w) {
  const std::size_t rows = w.shape()[0];
  const std::size_t cols = w.shape()[1];
  std::vector<double> out(cols, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out[j] += x[i] * w.data()[i * cols + j];
  }
  return out;
}

void add_into(std::vector<double>& x, const ad::Tensor& b) {
  for (std::size_t j = 0; j < x.size(); ++j) x[j] += b.data()[j];
}

std::vector<double> softmax(const std::vector<double>& s) {
  const double mx = *std::max_element(s.begin(), s.end());
  std::vector<double> e(s.size());
  double z = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) z += e[i] = std::exp(s[i] - mx);
  for (double& x : e) x /= z;
  return e;
}

}  // namespace

long long DenseReference::size_at(double t) const {
  long long n = 0;
  for (const auto& e : g_.edges()) n += e.time <= t ? 1 : 0;
  return n;
}

std::vector<double> DenseReference::time_encoding(double dt) const {
  const ad::Tensor& omega = p("time.omega");
  const ad::Tensor& alpha = p("time.alpha");
  const std::size_t d = omega.size();
  std::vector<double> out(d, 0.0);
  if (m_.config.no_time) return out;
  for (std::size_t k = 0; k < d; ++k) {
    out[k] = std::sqrt(1.0 / static_cast<double>(d)) * alpha.data()[k] *
             std::cos(omega.data()[k] * dt);
  }
  return out;
}

std::vector<double> DenseReference::concat_input(std::size_t v, double t, std::size_t layer,
                                                 double dt, long long delta) const {
  std::vector<double> x = embed(v, t, layer);
  const std::vector<double> phi = time_encoding(dt);
  x.insert(x.end(), phi.begin(), phi.end());
  const ad::Tensor& ws = p("size.W_s");
  const std::size_t vocab = ws.shape()[0];
  const std::size_t ds = ws.shape()[1];
  const std::size_t row = std::min<std::size_t>(static_cast<std::size_t>(delta), vocab - 1);
  for (std::size_t k = 0; k < ds; ++k) {
    x.push_back(m_.config.no_size ? 0.0 : ws.data()[row * ds + k]);
  }
  return x;
}

std::vector<double> DenseReference::embed(std::size_t v, double t, std::size_t layer) const {
  const auto& cfg = m_.config;
  if (layer == 0) {
    const ad::Tensor& wu = p("user.W_u");
    const std::size_t d = wu.shape()[1];
    const std::size_t r = m_.users.row(g_.nodes()[v].user);
    return {wu.data().begin() + static_cast<std::ptrdiff_t>(r * d),
            wu.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * d)};
  }

  struct Nb {
    std::size_t node;
    double time;
  };
  std::vector<Nb> nbs;
  for (const auto& e : g_.edges()) {
    if (!(e.time < t)) continue;
    const bool in_ok = cfg.direction != sampling::NeighborDirection::kOut;
    const bool out_ok = cfg.direction != sampling::NeighborDirection::kIn;
    if (e.parent == v && in_ok) nbs.push_back({e.child, e.time});
    if (e.child == v && out_ok) nbs.push_back({e.parent, e.time});
  }

  const std::vector<double> z0 = concat_input(v, t, layer - 1, 0.0, 0);
  std::vector<std::vector<double>> kv;
  if (nbs.empty() || cfg.self_in_kv) kv.push_back(z0);
  const long long size_now = size_at(t);
  for (const Nb& nb : nbs) {
    kv.push_back(concat_input(nb.node, nb.time, layer - 1, t - nb.time,
                              size_now - size_at(nb.time)));
  }

  const std::string prefix = "layer" + std::to_string(layer) + ".";
  std::vector<double> attended;
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    const std::string hp = prefix + "head" + std::to_string(h) + ".";
    const std::vector<double> q = row_times(z0, p(hp + "W_q"));
    std::vector<double> scores;
    std::vector<std::vector<double>> values;
    for (const auto& row : kv) {
      const std::vector<double> k = row_times(row, p(hp + "W_K"));
      double s = 0.0;
      for (std::size_t j = 0; j < q.size(); ++j) s += q[j] * k[j];
      scores.push_back(s / std::sqrt(static_cast<double>(q.size())));
      values.push_back(row_times(row, p(hp + "W_V")));
    }
    std::vector<double> a = cfg.mean_agg
                                ? std::vector<double>(kv.size(), 1.0 / double(kv.size()))
                                : softmax(scores);
    std::vector<double> out(values[0].size(), 0.0);
    for (std::size_t i = 0; i < values.size(); ++i) {
      for (std::size_t j = 0; j < out.size(); ++j) out[j] += a[i] * values[i][j];
    }
    attended.insert(attended.end(), out.begin(), out.end());
  }

  const std::vector<double> x0 = embed(v, t, 0);
  attended.insert(attended.end(), x0.begin(), x0.end());
  std::vector<double> hidden = row_times(attended, p(prefix + "ffn.W_0"));
  add_into(hidden, p(prefix + "ffn.b_0"));
  for (double& x : hidden) x = std::max(0.0, x);
  std::vector<double> out = row_times(hidden, p(prefix + "ffn.W_1"));
  add_into(out, p(prefix + "ffn.b_1"));
  return out;
}

double DenseReference::pool_time(std::size_t v) const {
  return m_.config.pool_time == model::PoolTime::kJoin ? g_.nodes()[v].join_time
                                                       : g_.observation_time();
}

std::vector<double> DenseReference::pool_weights(std::size_t level) const {
  const std::string prefix = "pool" + std::to_string(level) + ".";
  std::vector<double> scores;
  for (std::size_t v = 0; v < g_.num_nodes(); ++v) {
    std::vector<double> hid = row_times(embed(v, pool_time(v), level), p(prefix + "W_a"));
    add_into(hid, p(prefix + "b_a"));
    for (double& x : hid) x = std::max(0.0, x);
    std::vector<double> s = row_times(hid, p(prefix + "W_b"));
    scores.push_back(s[0] + p(prefix + "b_b").data()[0]);
  }
  return softmax(scores);
}

std::vector<double> DenseReference::pooled(std::size_t level) const {
  const std::vector<double> w = pool_weights(level);
  std::vector<double> out;
  for (std::size_t v = 0; v < g_.num_nodes(); ++v) {
    const std::vector<double> h = embed(v, pool_time(v), level);
    if (out.empty()) out.assign(h.size(), 0.0);
    for (std::size_t j = 0; j < h.size(); ++j) out[j] += w[v] * h[j];
  }
  return out;
}

double DenseReference::predict() const {
  const auto& cfg = m_.config;
  std::vector<std::size_t> levels;
  if (cfg.layers == 0) {
    levels.push_back(0);
  } else {
    for (std::size_t l = 1; l <= cfg.layers; ++l) levels.push_back(l);
  }
  std::vector<double> g;
  if (cfg.no_multi) {
    g = pooled(levels.back());
  } else {
    const ad::Tensor& omega = p("pool.omega");
    for (std::size_t i = 0; i < levels.size(); ++i) {
      const std::vector<double> h = pooled(levels[i]);
      if (g.empty()) g.assign(h.size(), 0.0);
      for (std::size_t j = 0; j < h.size(); ++j) g[j] += omega.data()[i] * h[j];
    }
  }
  return row_times(g, p("head.W"))[0] + p("head.b").data()[0];
}

data::CascadeGraph random_graph(Rng& rng, std::size_t n, double horizon, const std::string& id) {
  std::vector<double> times;
  for (std::size_t k = 1; k < n; ++k) times.push_back(horizon * (1.0 - uniform01(rng)));
  std::sort(times.begin(), times.end());
  for (std::size_t k = 1; k < times.size(); ++k) {
    if (uniform01(rng) < 0.25) times[k] = times[k - 1];
  }
  std::vector<data::CascadeGraph::Join> joins;
  for (std::size_t k = 1; k < n; ++k) {
    joins.push_back({"u" + std::to_string(k) + "_" + std::to_string(uniform_below(rng, 1000)),
                     static_cast<std::size_t>(uniform_below(rng, k)), times[k - 1]});
  }
  return data::CascadeGraph(id, "root", joins, horizon);
}

std::size_t max_degree(const data::CascadeGraph& graph) {
  std::size_t best = 0;
  for (std::size_t v = 0; v < graph.num_nodes(); ++v) {
    best = std::max(best, graph.incident(v).size());
  }
  return best;
}

double rel_error(double a, double b, double floor) {
  const double denom = std::max({std::abs(a), std::abs(b), floor});
  return std::abs(a - b) / denom;
}

}  // namespace hiercas::testing
