#pragma once

// Define-by-run reverse-mode differentiation over dense tensors.
//
// A `Tape` records every operation as an append-only node list; node k only
// refers to inputs with ids < k, so reverse append order is a valid
// topological order for backward. One tape per forward pass. Tapes are not
// thread-safe, but independent tapes may read the same parameter storage
// concurrently.

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "hiercas/tensor.hpp"

namespace hiercas::ad {

class Tape;

using NodeId = std::uint32_t;

/// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  NodeId id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
};

enum class Op : std::uint8_t {
  kLeaf,
  kMatMul,
  kTranspose,
  kSoftmaxRow,
  kAdd,
  kSub,
  kMul,
  kScale,
  kMulScalar,
  kRelu,
  kCos,
  kLog,
  kSquare,
  kMean,
  kSum,
  kConcatLastDim,
  kStackRows,
  kGatherRows,
  kSliceCols,
  kRepeatRows,
};

/// Gradient of a leaf. Tables read only through `gather_rows` keep their
/// gradient as a sparse row map; everything else is dense.
struct LeafGrad {
  Tensor dense;                                  // empty when untouched
  std::map<std::size_t, std::vector<double>> rows;  // row index -> row gradient

  bool touched() const { return !dense.empty() || !rows.empty(); }
  /// Dense view of the full gradient (zeros where untouched).
  Tensor densify(const Shape& shape) const;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = delete;
  Tape& operator=(Tape&&) = delete;

  Var constant(Tensor value);
  /// Leaf that owns its value and receives a gradient.
  Var variable(Tensor value);
  /// Leaf that references external storage, which must outlive the tape and
  /// stay unmodified until backward() returns.
  Var parameter(const Tensor& value);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool consumed() const noexcept { return consumed_; }

  /// Reverse accumulation from a scalar loss. Gradients are summed over all
  /// use sites. The tape accepts no further operations afterwards.
  void backward(Var loss);

  /// Dense gradient of a leaf (zeros if the leaf did not reach the loss).
  Tensor grad(Var leaf) const;
  const LeafGrad& leaf_grad(Var leaf) const;
  /// Moves a leaf's gradient out of the tape.
  LeafGrad take_leaf_grad(Var leaf);

  // Operation recording; use the free functions below instead.
  Var record(Op op, std::vector<NodeId> inputs, Tensor value);
  struct Aux {
    double scalar = 0.0;
    std::size_t begin = 0;
    std::size_t end = 0;
    std::vector<std::size_t> indices;
  };
  Aux& aux(Var v) { return nodes_[v.id].aux; }

 private:
  struct Node {
    Op op = Op::kLeaf;
    bool requires_grad = false;
    std::vector<NodeId> inputs;
    const Tensor* external = nullptr;
    Tensor value;
    Tensor grad;
    LeafGrad leaf_grad;
    Aux aux;
    const Tensor& val() const { return external ? *external : value; }
  };

  void check_open() const;
  Tensor& grad_buffer(NodeId id);
  void backprop_node(NodeId id);

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// Matrix product of rank-2 tensors.
Var matmul(Var a, Var b);
Var transpose(Var a);

/// Row-wise softmax, stabilized by subtracting each row's max. `valid`
/// (same element count as `x`, 1 = participates) forces masked entries to
/// exactly 0; every row needs at least one valid entry.
Var softmax_row(Var x, std::span<const std::uint8_t> valid = {});

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// Scalar variable (one element) times tensor.
Var mul_scalar(Var s, Var x);
Var relu(Var a);
Var cos(Var a);
Var log(Var a);
Var square(Var a);
Var mean(Var a);
Var sum(Var a);
Var concat_lastdim(std::span<const Var> parts);
/// Vertical stack of rank-2 tensors with equal column counts.
Var stack_rows(std::span<const Var> parts);
Var gather_rows(Var table, std::span<const std::size_t> indices);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
/// Repeats a single-row tensor `times` times.
Var repeat_rows(Var a, std::size_t times);

}  // namespace hiercas::ad
