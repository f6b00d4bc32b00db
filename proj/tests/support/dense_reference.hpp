#pragma once

// Loop-based re-implementation of the HierCas forward pass. It reads
// parameters by name, scans the full edge list for neighbors (no sampling,
// no memoization) and uses no tape. Tests compare the library against it.

#include <cstddef>
#include <vector>

#include "hiercas/cascade.hpp"
#include "hiercas/model.hpp"
#include "hiercas/random.hpp"

namespace hiercas::testing {

class DenseReference {
 public:
  DenseReference(const model::HierCas& model, const data::CascadeGraph& graph)
      : m_(model), g_(graph) {}

  std::vector<double> embed(std::size_t v, double t, std::size_t layer) const;
  std::vector<double> time_encoding(double dt) const;
  std::vector<double> pool_weights(std::size_t level) const;
  std::vector<double> pooled(std::size_t level) const;
  double predict() const;

 private:
  const ad::Tensor& p(const std::string& name) const { return m_.params.at(name); }
  std::vector<double> concat_input(std::size_t v, double t, std::size_t layer, double dt,
                                   long long delta) const;
  long long size_at(double t) const;
  double pool_time(std::size_t v) const;

  const model::HierCas& m_;
  const data::CascadeGraph& g_;
};

/// Random retweet tree with `n` nodes and join times drawn in (0, horizon];
/// a fraction of joins reuse the previous time to exercise ties.
data::CascadeGraph random_graph(Rng& rng, std::size_t n, double horizon,
                                const std::string& id = "g");

/// Largest number of temporal neighbors any (node, time) query can have.
std::size_t max_degree(const data::CascadeGraph& graph);

/// Symmetric relative error with an absolute floor in the denominator.
double rel_error(double a, double b, double floor = 1e-3);

}  // namespace hiercas::testing
