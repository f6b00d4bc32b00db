#include "hiercas/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "hiercas/errors.hpp"

namespace hiercas::ad {

namespace {

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected rank-2 operand, got " +
                         shape_string(t.shape()));
  }
}

Tape& same_tape(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) {
    throw std::logic_error("operands recorded on different tapes");
  }
  return *a.tape;
}

// Shapes must match exactly, or one side must hold a single element.
void check_elementwise(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape() || a.size() == 1 || b.size() == 1) return;
  throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                       " vs " + shape_string(b.shape()));
}

const Shape& broadcast_shape(const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return a.shape();
  return a.size() == 1 ? b.shape() : a.shape();
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, F f) {
  Tensor out(broadcast_shape(a, b));
  const std::size_t n = out.size();
  const bool sa = a.size() == 1 && n != 1;
  const bool sb = b.size() == 1 && n != 1;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = f(a[sa ? 0 : i], b[sb ? 0 : i]);
  }
  return out;
}

template <typename F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

// Adds `g` (possibly shaped like a broadcast result) into `dst`.
void accumulate(Tensor& dst, const Tensor& g, double factor = 1.0) {
  if (dst.size() == g.size()) {
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += factor * g[i];
  } else {
    double total = 0.0;
    for (double v : g.data()) total += v;
    dst[0] += factor * total;
  }
}

}  // namespace

Tensor LeafGrad::densify(const Shape& shape) const {
  Tensor out = dense.empty() ? Tensor(shape) : dense;
  const std::size_t cols = shape.empty() ? 1 : shape.back();
  for (const auto& [row, values] : rows) {
    for (std::size_t c = 0; c < cols; ++c) out[row * cols + c] += values[c];
  }
  return out;
}

const Tensor& Var::value() const { return tape->value(*this); }
bool Var::requires_grad() const { return tape->requires_grad(*this); }

void Tape::check_open() const {
  if (consumed_) throw std::logic_error("tape already consumed by backward()");
}

Var Tape::constant(Tensor value) {
  check_open();
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<NodeId>(nodes_.size() - 1)};
}

Var Tape::variable(Tensor value) {
  Var v = constant(std::move(value));
  nodes_.back().requires_grad = true;
  return v;
}

Var Tape::parameter(const Tensor& value) {
  check_open();
  Node node;
  node.external = &value;
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<NodeId>(nodes_.size() - 1)};
}

const Tensor& Tape::value(Var v) const { return nodes_.at(v.id).val(); }

Var Tape::record(Op op, std::vector<NodeId> inputs, Tensor value) {
  check_open();
  Node node;
  node.op = op;
  node.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                   [&](NodeId id) { return nodes_[id].requires_grad; });
  node.inputs = std::move(inputs);
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<NodeId>(nodes_.size() - 1)};
}

Tensor& Tape::grad_buffer(NodeId id) {
  Node& node = nodes_[id];
  if (node.grad.empty()) node.grad = Tensor(node.val().shape());
  return node.grad;
}

void Tape::backward(Var loss) {
  check_open();
  if (loss.tape != this) throw std::logic_error("loss recorded on a different tape");
  const Tensor& lv = value(loss);
  if (lv.size() != 1) {
    throw DimensionError("backward() needs a scalar loss, got " + shape_string(lv.shape()));
  }
  if (!std::isfinite(lv[0])) throw DomainError("backward() on a non-finite loss");
  consumed_ = true;
  if (!nodes_[loss.id].requires_grad) return;

  grad_buffer(loss.id)[0] = 1.0;
  for (std::int64_t id = loss.id; id >= 0; --id) {
    Node& node = nodes_[static_cast<std::size_t>(id)];
    if (!node.requires_grad || node.grad.empty()) continue;
    if (node.op == Op::kLeaf) {
      if (node.leaf_grad.dense.empty()) {
        node.leaf_grad.dense = std::move(node.grad);
      } else {
        accumulate(node.leaf_grad.dense, node.grad);
      }
      node.grad = Tensor();
      continue;
    }
    backprop_node(static_cast<NodeId>(id));
    node.grad = Tensor();
  }
}

Tensor Tape::grad(Var leaf) const { return leaf_grad(leaf).densify(value(leaf).shape()); }

const LeafGrad& Tape::leaf_grad(Var leaf) const {
  const Node& node = nodes_.at(leaf.id);
  if (node.op != Op::kLeaf) throw std::logic_error("grad() is only kept for leaves");
  return node.leaf_grad;
}

LeafGrad Tape::take_leaf_grad(Var leaf) {
  Node& node = nodes_.at(leaf.id);
  if (node.op != Op::kLeaf) throw std::logic_error("grad() is only kept for leaves");
  return std::move(node.leaf_grad);
}

void Tape::backprop_node(NodeId id) {
  // grad_buffer() never reallocates nodes_, so references stay valid.
  Node& node = nodes_[id];
  const Tensor& g = node.grad;
  const auto& in = node.inputs;
  auto wants = [&](std::size_t k) { return nodes_[in[k]].requires_grad; };
  auto val = [&](std::size_t k) -> const Tensor& { return nodes_[in[k]].val(); };

  switch (node.op) {
    case Op::kLeaf:
      break;
    case Op::kMatMul: {
      const Tensor& a = val(0);
      const Tensor& b = val(1);
      const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
      if (wants(0)) {
        Tensor& da = grad_buffer(in[0]);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * b[p * n + j];
            da[i * k + p] += acc;
          }
        }
      }
      if (wants(1)) {
        Tensor& db = grad_buffer(in[1]);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            if (aip == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) db[p * n + j] += aip * g[i * n + j];
          }
        }
      }
      break;
    }
    case Op::kTranspose: {
      if (!wants(0)) break;
      Tensor& da = grad_buffer(in[0]);
      const std::size_t r = g.shape()[0], c = g.shape()[1];
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) da[j * r + i] += g[i * c + j];
      }
      break;
    }
    case Op::kSoftmaxRow: {
      if (!wants(0)) break;
      const Tensor& y = node.val();
      Tensor& dx = grad_buffer(in[0]);
      const std::size_t r = y.shape()[0], c = y.shape()[1];
      for (std::size_t i = 0; i < r; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += y[i * c + j] * g[i * c + j];
        for (std::size_t j = 0; j < c; ++j) {
          dx[i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
        }
      }
      break;
    }
    case Op::kAdd:
    case Op::kSub: {
      if (wants(0)) accumulate(grad_buffer(in[0]), g);
      if (wants(1)) accumulate(grad_buffer(in[1]), g, node.op == Op::kAdd ? 1.0 : -1.0);
      break;
    }
    case Op::kMul: {
      const Tensor& a = val(0);
      const Tensor& b = val(1);
      if (wants(0)) accumulate(grad_buffer(in[0]), zip(g, b, [](double x, double y) { return x * y; }));
      if (wants(1)) accumulate(grad_buffer(in[1]), zip(g, a, [](double x, double y) { return x * y; }));
      break;
    }
    case Op::kScale: {
      if (wants(0)) accumulate(grad_buffer(in[0]), g, node.aux.scalar);
      break;
    }
    case Op::kMulScalar: {
      const double s = val(0)[0];
      const Tensor& x = val(1);
      if (wants(0)) {
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * x[i];
        grad_buffer(in[0])[0] += acc;
      }
      if (wants(1)) accumulate(grad_buffer(in[1]), g, s);
      break;
    }
    case Op::kRelu: {
      if (!wants(0)) break;
      const Tensor& a = val(0);
      Tensor& da = grad_buffer(in[0]);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (a[i] > 0.0) da[i] += g[i];
      }
      break;
    }
    case Op::kCos: {
      if (!wants(0)) break;
      const Tensor& a = val(0);
      Tensor& da = grad_buffer(in[0]);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] -= std::sin(a[i]) * g[i];
      break;
    }
    case Op::kLog: {
      if (!wants(0)) break;
      const Tensor& a = val(0);
      Tensor& da = grad_buffer(in[0]);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] / a[i];
      break;
    }
    case Op::kSquare: {
      if (!wants(0)) break;
      const Tensor& a = val(0);
      Tensor& da = grad_buffer(in[0]);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += 2.0 * a[i] * g[i];
      break;
    }
    case Op::kMean:
    case Op::kSum: {
      if (!wants(0)) break;
      Tensor& da = grad_buffer(in[0]);
      const double each = node.op == Op::kMean ? g[0] / static_cast<double>(da.size()) : g[0];
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += each;
      break;
    }
    case Op::kConcatLastDim: {
      const std::size_t total = g.cols();
      const std::size_t lead = g.size() / total;
      std::size_t offset = 0;
      for (std::size_t k = 0; k < in.size(); ++k) {
        const std::size_t w = val(k).cols();
        if (wants(k)) {
          Tensor& dk = grad_buffer(in[k]);
          for (std::size_t r = 0; r < lead; ++r) {
            for (std::size_t c = 0; c < w; ++c) dk[r * w + c] += g[r * total + offset + c];
          }
        }
        offset += w;
      }
      break;
    }
    case Op::kStackRows: {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < in.size(); ++k) {
        const std::size_t n = val(k).size();
        if (wants(k)) {
          Tensor& dk = grad_buffer(in[k]);
          for (std::size_t i = 0; i < n; ++i) dk[i] += g[offset + i];
        }
        offset += n;
      }
      break;
    }
    case Op::kGatherRows: {
      if (!wants(0)) break;
      const std::size_t cols = val(0).cols();
      Node& src = nodes_[in[0]];
      const auto& idx = node.aux.indices;
      if (src.op == Op::kLeaf) {
        for (std::size_t r = 0; r < idx.size(); ++r) {
          auto& row = src.leaf_grad.rows[idx[r]];
          if (row.empty()) row.assign(cols, 0.0);
          for (std::size_t c = 0; c < cols; ++c) row[c] += g[r * cols + c];
        }
      } else {
        Tensor& dt = grad_buffer(in[0]);
        for (std::size_t r = 0; r < idx.size(); ++r) {
          for (std::size_t c = 0; c < cols; ++c) dt[idx[r] * cols + c] += g[r * cols + c];
        }
      }
      break;
    }
    case Op::kSliceCols: {
      if (!wants(0)) break;
      Tensor& da = grad_buffer(in[0]);
      const std::size_t cols = val(0).cols();
      const std::size_t b = node.aux.begin, w = node.aux.end - node.aux.begin;
      const std::size_t rows = g.size() / std::max<std::size_t>(w, 1);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < w; ++c) da[r * cols + b + c] += g[r * w + c];
      }
      break;
    }
    case Op::kRepeatRows: {
      if (!wants(0)) break;
      Tensor& da = grad_buffer(in[0]);
      const std::size_t cols = da.size();
      const std::size_t times = g.size() / std::max<std::size_t>(cols, 1);
      for (std::size_t r = 0; r < times; ++r) {
        for (std::size_t c = 0; c < cols; ++c) da[c] += g[r * cols + c];
      }
      break;
    }
  }
}

// ---------------------------------------------------------------------------
// Forward operations.

Var matmul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2(av, "matmul");
  require_rank2(bv, "matmul");
  const std::size_t m = av.shape()[0], k = av.shape()[1], n = bv.shape()[1];
  if (bv.shape()[0] != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_string(av.shape()) +
                         " x " + shape_string(bv.shape()));
  }
  Tensor out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
    }
  }
  return tape.record(Op::kMatMul, {a.id, b.id}, std::move(out));
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  require_rank2(av, "transpose");
  const std::size_t r = av.shape()[0], c = av.shape()[1];
  Tensor out(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  }
  return a.tape->record(Op::kTranspose, {a.id}, std::move(out));
}

Var softmax_row(Var x, std::span<const std::uint8_t> valid) {
  const Tensor& xv = x.value();
  require_rank2(xv, "softmax_row");
  if (!valid.empty() && valid.size() != xv.size()) {
    throw DimensionError("softmax_row: mask has " + std::to_string(valid.size()) +
                         " entries for input " + shape_string(xv.shape()));
  }
  const std::size_t r = xv.shape()[0], c = xv.shape()[1];
  auto ok = [&](std::size_t i) { return valid.empty() || valid[i] != 0; };
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < r; ++i) {
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) {
      if (ok(i * c + j)) hi = std::max(hi, xv[i * c + j]);
    }
    if (hi == -std::numeric_limits<double>::infinity()) {
      throw DomainError("softmax_row: row " + std::to_string(i) + " is fully masked");
    }
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (!ok(i * c + j)) continue;
      const double e = std::exp(xv[i * c + j] - hi);
      out[i * c + j] = e;
      total += e;
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= total;
  }
  Var y = x.tape->record(Op::kSoftmaxRow, {x.id}, std::move(out));
  return y;
}

Var add(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  check_elementwise(a.value(), b.value(), "add");
  return tape.record(Op::kAdd, {a.id, b.id},
                     zip(a.value(), b.value(), [](double x, double y) { return x + y; }));
}

Var sub(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  check_elementwise(a.value(), b.value(), "sub");
  return tape.record(Op::kSub, {a.id, b.id},
                     zip(a.value(), b.value(), [](double x, double y) { return x - y; }));
}

Var mul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  check_elementwise(a.value(), b.value(), "mul");
  return tape.record(Op::kMul, {a.id, b.id},
                     zip(a.value(), b.value(), [](double x, double y) { return x * y; }));
}

Var scale(Var a, double factor) {
  Var out = a.tape->record(Op::kScale, {a.id},
                           map(a.value(), [factor](double x) { return x * factor; }));
  a.tape->aux(out).scalar = factor;
  return out;
}

Var mul_scalar(Var s, Var x) {
  Tape& tape = same_tape(s, x);
  if (s.value().size() != 1) {
    throw DimensionError("mul_scalar: expected a single-element scalar, got " +
                         shape_string(s.value().shape()));
  }
  const double sv = s.value()[0];
  return tape.record(Op::kMulScalar, {s.id, x.id},
                     map(x.value(), [sv](double v) { return sv * v; }));
}

Var relu(Var a) {
  return a.tape->record(Op::kRelu, {a.id},
                        map(a.value(), [](double x) { return x > 0.0 ? x : 0.0; }));
}

Var cos(Var a) {
  return a.tape->record(Op::kCos, {a.id}, map(a.value(), [](double x) { return std::cos(x); }));
}

Var log(Var a) {
  for (double x : a.value().data()) {
    if (!(x > 0.0)) throw DomainError("log: non-positive input " + std::to_string(x));
  }
  return a.tape->record(Op::kLog, {a.id}, map(a.value(), [](double x) { return std::log(x); }));
}

Var square(Var a) {
  return a.tape->record(Op::kSquare, {a.id}, map(a.value(), [](double x) { return x * x; }));
}

Var sum(Var a) {
  double total = 0.0;
  for (double x : a.value().data()) total += x;
  return a.tape->record(Op::kSum, {a.id}, Tensor::scalar(total));
}

Var mean(Var a) {
  const Tensor& av = a.value();
  if (av.empty()) throw DimensionError("mean of an empty tensor");
  double total = 0.0;
  for (double x : av.data()) total += x;
  return a.tape->record(Op::kMean, {a.id},
                        Tensor::scalar(total / static_cast<double>(av.size())));
}

Var concat_lastdim(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_lastdim: no operands");
  Tape* tape = parts.front().tape;
  const Shape& first = parts.front().value().shape();
  if (first.empty()) throw DimensionError("concat_lastdim: scalar operand");
  Shape lead(first.begin(), first.end() - 1);
  const std::size_t rows = shape_numel(lead);
  std::size_t total = 0;
  std::vector<NodeId> ids;
  ids.reserve(parts.size());
  for (Var p : parts) {
    same_tape(parts.front(), p);
    const Shape& s = p.value().shape();
    if (s.size() != first.size() || !std::equal(lead.begin(), lead.end(), s.begin())) {
      throw DimensionError("concat_lastdim: shape mismatch " + shape_string(first) + " vs " +
                           shape_string(s));
    }
    total += s.back();
    ids.push_back(p.id);
  }
  Shape out_shape = lead;
  out_shape.push_back(total);
  Tensor out(out_shape);
  std::size_t offset = 0;
  for (Var p : parts) {
    const Tensor& pv = p.value();
    const std::size_t w = pv.cols();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(pv.data().begin() + static_cast<std::ptrdiff_t>(r * w), w,
                  out.data().begin() + static_cast<std::ptrdiff_t>(r * total + offset));
    }
    offset += w;
  }
  return tape->record(Op::kConcatLastDim, std::move(ids), std::move(out));
}

Var stack_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("stack_rows: no operands");
  Tape* tape = parts.front().tape;
  const std::size_t cols = parts.front().value().cols();
  std::size_t rows = 0;
  std::vector<NodeId> ids;
  std::vector<double> data;
  for (Var p : parts) {
    same_tape(parts.front(), p);
    const Tensor& pv = p.value();
    require_rank2(pv, "stack_rows");
    if (pv.cols() != cols) {
      throw DimensionError("stack_rows: column mismatch " +
                           shape_string(parts.front().value().shape()) + " vs " +
                           shape_string(pv.shape()));
    }
    rows += pv.rows();
    data.insert(data.end(), pv.data().begin(), pv.data().end());
    ids.push_back(p.id);
  }
  return tape->record(Op::kStackRows, std::move(ids), Tensor(Shape{rows, cols}, std::move(data)));
}

Var gather_rows(Var table, std::span<const std::size_t> indices) {
  const Tensor& tv = table.value();
  require_rank2(tv, "gather_rows");
  const std::size_t rows = tv.rows(), cols = tv.cols();
  Tensor out(Shape{indices.size(), cols});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= rows) {
      throw IndexError("gather_rows: index " + std::to_string(indices[r]) +
                       " out of range for " + shape_string(tv.shape()));
    }
    std::copy_n(tv.data().begin() + static_cast<std::ptrdiff_t>(indices[r] * cols), cols,
                out.data().begin() + static_cast<std::ptrdiff_t>(r * cols));
  }
  Var v = table.tape->record(Op::kGatherRows, {table.id}, std::move(out));
  table.tape->aux(v).indices.assign(indices.begin(), indices.end());
  return v;
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& av = a.value();
  require_rank2(av, "slice_cols");
  const std::size_t rows = av.rows(), cols = av.cols();
  if (begin > end || end > cols) {
    throw IndexError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of range for " + shape_string(av.shape()));
  }
  const std::size_t w = end - begin;
  Tensor out(Shape{rows, w});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < w; ++c) out[r * w + c] = av[r * cols + begin + c];
  }
  Var v = a.tape->record(Op::kSliceCols, {a.id}, std::move(out));
  auto& aux = a.tape->aux(v);
  aux.begin = begin;
  aux.end = end;
  return v;
}

Var repeat_rows(Var a, std::size_t times) {
  const Tensor& av = a.value();
  if (av.rank() != 2 || av.rows() != 1) {
    throw DimensionError("repeat_rows: expected a [1xn] row, got " + shape_string(av.shape()));
  }
  const std::size_t cols = av.cols();
  Tensor out(Shape{times, cols});
  for (std::size_t r = 0; r < times; ++r) {
    std::copy_n(av.data().begin(), cols,
                out.data().begin() + static_cast<std::ptrdiff_t>(r * cols));
  }
  return a.tape->record(Op::kRepeatRows, {a.id}, std::move(out));
}

}  // namespace hiercas::ad
