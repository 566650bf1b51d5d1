#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "txt/errors.hpp"
#include "txt/rng.hpp"

// Dense row-major tensors plus a reverse-mode tape. The scalar type R is
// the run's precision mode: float is the standard mode used for training,
// double is the wide mode used by gradient checks and equivalence tests.
// A Tape is confined to one thread; independent tapes may run concurrently
// over shared (immutable) parameter tensors.

namespace txt {

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << " x ";
    os << s[i];
  }
  os << "]";
  return os.str();
}

template <class R>
struct Tensor {
  Shape shape;
  std::vector<R> data;
  bool requires_grad = false;
  std::vector<R> grad;  // empty, or same length as data (owner managed)

  Tensor() = default;
  Tensor(Shape s, std::vector<R> d, bool rg = false)
      : shape(std::move(s)), data(std::move(d)), requires_grad(rg) {
    for (auto dim : shape)
      if (dim <= 0)
        throw ShapeError("tensor dimensions must be positive: " + shape_str(shape));
    if (numel(shape) != static_cast<std::int64_t>(data.size()))
      throw ShapeError("data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
  }

  static Tensor zeros(Shape s, bool rg = false) {
    auto n = numel(s);
    return Tensor(std::move(s), std::vector<R>(static_cast<std::size_t>(n), R(0)), rg);
  }
  static Tensor full(Shape s, R v, bool rg = false) {
    auto n = numel(s);
    return Tensor(std::move(s), std::vector<R>(static_cast<std::size_t>(n), v), rg);
  }

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  std::int64_t rows() const { return shape.empty() ? 1 : shape[0]; }
  std::int64_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  R& at(std::int64_t r, std::int64_t c) { return data[static_cast<std::size_t>(r * cols() + c)]; }
  R at(std::int64_t r, std::int64_t c) const { return data[static_cast<std::size_t>(r * cols() + c)]; }

  bool finite() const {
    for (R v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }
};

template <class R>
bool all_finite(const std::vector<R>& v) {
  for (R x : v)
    if (!std::isfinite(static_cast<double>(x))) return false;
  return true;
}

// Ordered registry of named learnable tensors. Iteration order is
// registration order, which fixes the reduction and update order
// everywhere gradients are consumed.
template <class R>
class ParamStore {
 public:
  Tensor<R>& add(const std::string& name, Tensor<R> t) {
    if (index_.count(name))
      throw ContractError("duplicate parameter name: " + name);
    t.requires_grad = true;
    index_[name] = items_.size();
    items_.emplace_back(name, std::move(t));
    return items_.back().second;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Tensor<R>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter: " + name);
    return items_[it->second].second;
  }
  const Tensor<R>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter: " + name);
    return items_[it->second].second;
  }

  std::vector<std::pair<std::string, Tensor<R>>>& items() { return items_; }
  const std::vector<std::pair<std::string, Tensor<R>>>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }

  std::int64_t total_elems() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : items_) n += t.size();
    return n;
  }

 private:
  std::vector<std::pair<std::string, Tensor<R>>> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Xavier-style uniform init for rank-2 weights, fan sizes from the shape.
template <class R>
void init_xavier(Tensor<R>& t, CounterRng& rng) {
  double fan_in = static_cast<double>(t.rows());
  double fan_out = static_cast<double>(t.cols());
  double bound = std::sqrt(6.0 / (fan_in + fan_out));
  for (auto& v : t.data) v = static_cast<R>(rng.next_uniform(-bound, bound));
}

template <class R>
void init_normal(Tensor<R>& t, CounterRng& rng, double stddev) {
  for (auto& v : t.data) v = static_cast<R>(rng.next_normal() * stddev);
}

struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

template <class R>
using GradMap = std::map<std::string, std::vector<R>>;

using Mask = std::vector<std::uint8_t>;  // 1 = real position, 0 = padding

template <class R>
class Tape {
  enum class Op : std::uint8_t {
    kLeaf,
    kConst,
    kMatmul,
    kTranspose,
    kAdd,
    kMul,
    kAffine,
    kLeakyRelu,
    kSigmoid,
    kTanh,
    kSoftmax,
    kEmbedRows,
    kSliceRows,
    kSliceCols,
    kConcatRows,
    kConcatCols,
    kMaskedMeanRows,
    kMaskedMaxRows,
    kLayerNorm,
    kCrossEntropy,
    kMeanScalars,
    kSumAll,
    kReshape,
  };

  // How a binary op's second operand maps onto the first.
  enum class Bcast : std::uint8_t { kSame, kSuffix, kTrailOne };

  struct Node {
    Op op;
    Shape shape;
    std::vector<R> val;
    std::vector<R> grad;
    std::int32_t a = -1, b = -1, c = -1;
    R s0 = R(0), s1 = R(0);
    Bcast bcast = Bcast::kSame;
    std::vector<std::int32_t> list;  // gather ids, labels, argmax, concat inputs
    std::vector<R> payload;          // op-specific cache (probs, normalized rows)
    std::string name;                // leaf parameter name
    bool rg = false;
  };

 public:
  // ---- graph construction ----

  Var leaf(const std::string& name, const Tensor<R>& t) {
    Node n;
    n.op = Op::kLeaf;
    n.shape = t.shape;
    n.val = t.data;
    n.name = name;
    n.rg = t.requires_grad;
    return push(std::move(n));
  }

  Var constant(Shape shape, std::vector<R> data) {
    Tensor<R> t(std::move(shape), std::move(data));  // validates
    Node n;
    n.op = Op::kConst;
    n.shape = std::move(t.shape);
    n.val = std::move(t.data);
    return push(std::move(n));
  }

  Var matmul(Var a, Var b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    if (na.shape.size() != 2 || nb.shape.size() != 2 || na.shape[1] != nb.shape[0])
      throw ShapeError("matmul: incompatible shapes " + shape_str(na.shape) +
                       " vs " + shape_str(nb.shape));
    Node n;
    n.op = Op::kMatmul;
    n.shape = {na.shape[0], nb.shape[1]};
    n.a = a.id;
    n.b = b.id;
    n.val.assign(static_cast<std::size_t>(numel(n.shape)), R(0));
    gemm(na.val.data(), nb.val.data(), n.val.data(), na.shape[0], na.shape[1], nb.shape[1]);
    return push_binary(std::move(n), a, b);
  }

  Var transpose(Var a) {
    const Node& na = node(a);
    if (na.shape.size() != 2)
      throw ShapeError("transpose expects a matrix, got " + shape_str(na.shape));
    Node n;
    n.op = Op::kTranspose;
    n.shape = {na.shape[1], na.shape[0]};
    n.a = a.id;
    n.val.resize(na.val.size());
    const auto rows = na.shape[0], cols = na.shape[1];
    for (std::int64_t i = 0; i < rows; ++i)
      for (std::int64_t j = 0; j < cols; ++j)
        n.val[static_cast<std::size_t>(j * rows + i)] = na.val[static_cast<std::size_t>(i * cols + j)];
    return push_unary(std::move(n), a);
  }

  // Elementwise binary ops accept equal shapes, a second operand whose shape
  // is a suffix of the first's (e.g. [d] against [L x d], repeated across the
  // leading dimensions), or a trailing-1 column [n x 1] against [n x m].
  Var add(Var a, Var b) { return binary(Op::kAdd, a, b); }
  Var mul(Var a, Var b) { return binary(Op::kMul, a, b); }

  // scale * x + shift
  Var affine(Var a, R scale, R shift) {
    const Node& na = node(a);
    Node n;
    n.op = Op::kAffine;
    n.shape = na.shape;
    n.a = a.id;
    n.s0 = scale;
    n.s1 = shift;
    n.val.resize(na.val.size());
    for (std::size_t i = 0; i < na.val.size(); ++i) n.val[i] = scale * na.val[i] + shift;
    return push_unary(std::move(n), a);
  }

  Var leaky_relu(Var a, R slope) {
    const Node& na = node(a);
    Node n;
    n.op = Op::kLeakyRelu;
    n.shape = na.shape;
    n.a = a.id;
    n.s0 = slope;
    n.val.resize(na.val.size());
    for (std::size_t i = 0; i < na.val.size(); ++i)
      n.val[i] = na.val[i] >= R(0) ? na.val[i] : slope * na.val[i];
    return push_unary(std::move(n), a);
  }

  Var sigmoid(Var a) {
    const Node& na = node(a);
    Node n;
    n.op = Op::kSigmoid;
    n.shape = na.shape;
    n.a = a.id;
    n.val.resize(na.val.size());
    for (std::size_t i = 0; i < na.val.size(); ++i)
      n.val[i] = R(1) / (R(1) + std::exp(-na.val[i]));
    return push_unary(std::move(n), a);
  }

  Var tanh(Var a) {
    const Node& na = node(a);
    Node n;
    n.op = Op::kTanh;
    n.shape = na.shape;
    n.a = a.id;
    n.val.resize(na.val.size());
    for (std::size_t i = 0; i < na.val.size(); ++i) n.val[i] = std::tanh(na.val[i]);
    return push_unary(std::move(n), a);
  }

  // Numerically stabilized softmax over the last dimension.
  Var softmax_lastdim(Var a) {
    const Node& na = node(a);
    if (na.shape.empty() || na.shape.back() < 1)
      throw ShapeError("softmax over empty last dimension: " + shape_str(na.shape));
    Node n;
    n.op = Op::kSoftmax;
    n.shape = na.shape;
    n.a = a.id;
    n.val.resize(na.val.size());
    const std::int64_t last = na.shape.back();
    const std::int64_t slices = numel(na.shape) / last;
    for (std::int64_t s = 0; s < slices; ++s) {
      const R* x = na.val.data() + s * last;
      R* y = n.val.data() + s * last;
      R m = x[0];
      for (std::int64_t j = 1; j < last; ++j) m = std::max(m, x[j]);
      R sum = R(0);
      for (std::int64_t j = 0; j < last; ++j) {
        y[j] = std::exp(x[j] - m);
        sum += y[j];
      }
      for (std::int64_t j = 0; j < last; ++j) y[j] /= sum;
    }
    return push_unary(std::move(n), a);
  }

  // Row gather from a [V x d] table. Gradients of repeated ids accumulate.
  Var embedding_rows(Var table, std::span<const std::int32_t> ids) {
    const Node& nt = node(table);
    if (nt.shape.size() != 2)
      throw ShapeError("embedding table must be rank 2, got " + shape_str(nt.shape));
    const std::int64_t v = nt.shape[0], d = nt.shape[1];
    for (auto id : ids)
      if (id < 0 || id >= v)
        throw VocabError("embedding id " + std::to_string(id) +
                         " out of range [0, " + std::to_string(v) + ")");
    Node n;
    n.op = Op::kEmbedRows;
    n.shape = {static_cast<std::int64_t>(ids.size()), d};
    n.a = table.id;
    n.list.assign(ids.begin(), ids.end());
    n.val.resize(ids.size() * static_cast<std::size_t>(d));
    for (std::size_t i = 0; i < ids.size(); ++i)
      std::copy_n(nt.val.data() + static_cast<std::size_t>(ids[i]) * d, d,
                  n.val.data() + i * static_cast<std::size_t>(d));
    return push_unary(std::move(n), table);
  }

  Var slice_rows(Var a, std::int64_t r0, std::int64_t r1) {
    const Node& na = node(a);
    if (na.shape.size() != 2 || r0 < 0 || r1 <= r0 || r1 > na.shape[0])
      throw ShapeError("slice_rows [" + std::to_string(r0) + ", " + std::to_string(r1) +
                       ") out of " + shape_str(na.shape));
    Node n;
    n.op = Op::kSliceRows;
    n.shape = {r1 - r0, na.shape[1]};
    n.a = a.id;
    n.list = {static_cast<std::int32_t>(r0), static_cast<std::int32_t>(r1)};
    const auto d = na.shape[1];
    n.val.assign(na.val.begin() + r0 * d, na.val.begin() + r1 * d);
    return push_unary(std::move(n), a);
  }

  Var slice_cols(Var a, std::int64_t c0, std::int64_t c1) {
    const Node& na = node(a);
    if (na.shape.size() != 2 || c0 < 0 || c1 <= c0 || c1 > na.shape[1])
      throw ShapeError("slice_cols [" + std::to_string(c0) + ", " + std::to_string(c1) +
                       ") out of " + shape_str(na.shape));
    Node n;
    n.op = Op::kSliceCols;
    n.shape = {na.shape[0], c1 - c0};
    n.a = a.id;
    n.list = {static_cast<std::int32_t>(c0), static_cast<std::int32_t>(c1)};
    n.val.resize(static_cast<std::size_t>(numel(n.shape)));
    const auto cols = na.shape[1], w = c1 - c0;
    for (std::int64_t i = 0; i < na.shape[0]; ++i)
      std::copy_n(na.val.data() + i * cols + c0, w, n.val.data() + i * w);
    return push_unary(std::move(n), a);
  }

  Var concat_rows(std::span<const Var> parts) { return concat(parts, /*rows=*/true); }
  Var concat_cols(std::span<const Var> parts) { return concat(parts, /*rows=*/false); }

  // Mean over rows flagged real by the mask; output [1 x d].
  Var masked_mean_rows(Var a, const Mask& mask) {
    const Node& na = node(a);
    check_mask(na, mask);
    const auto rows = na.shape[0], d = na.shape[1];
    std::int64_t nreal = 0;
    for (auto m : mask) nreal += m ? 1 : 0;
    Node n;
    n.op = Op::kMaskedMeanRows;
    n.shape = {1, d};
    n.a = a.id;
    n.s0 = static_cast<R>(nreal);
    n.list.assign(mask.begin(), mask.end());
    n.val.assign(static_cast<std::size_t>(d), R(0));
    for (std::int64_t i = 0; i < rows; ++i)
      if (mask[static_cast<std::size_t>(i)])
        for (std::int64_t j = 0; j < d; ++j) n.val[static_cast<std::size_t>(j)] += na.val[static_cast<std::size_t>(i * d + j)];
    for (auto& v : n.val) v /= static_cast<R>(nreal);
    return push_unary(std::move(n), a);
  }

  // Columnwise max over real rows; ties route the gradient to the first
  // maximal row. Output [1 x d].
  Var masked_max_rows(Var a, const Mask& mask) {
    const Node& na = node(a);
    check_mask(na, mask);
    const auto rows = na.shape[0], d = na.shape[1];
    Node n;
    n.op = Op::kMaskedMaxRows;
    n.shape = {1, d};
    n.a = a.id;
    n.val.assign(static_cast<std::size_t>(d), R(0));
    n.list.assign(static_cast<std::size_t>(d), -1);  // argmax row per column
    for (std::int64_t j = 0; j < d; ++j) {
      std::int32_t arg = -1;
      R best = R(0);
      for (std::int64_t i = 0; i < rows; ++i) {
        if (!mask[static_cast<std::size_t>(i)]) continue;
        R v = na.val[static_cast<std::size_t>(i * d + j)];
        if (arg < 0 || v > best) {
          best = v;
          arg = static_cast<std::int32_t>(i);
        }
      }
      n.val[static_cast<std::size_t>(j)] = best;
      n.list[static_cast<std::size_t>(j)] = arg;
    }
    return push_unary(std::move(n), a);
  }

  // Per-row normalization: (x - mean) / sqrt(var + eps) * gain + bias.
  Var layer_norm(Var x, Var gain, Var bias, R eps) {
    const Node& nx = node(x);
    const Node& ng = node(gain);
    const Node& nb = node(bias);
    if (nx.shape.size() != 2 || nx.shape[1] < 2)
      throw ShapeError("layer_norm needs [rows x d], d >= 2, got " + shape_str(nx.shape));
    const auto rows = nx.shape[0], d = nx.shape[1];
    if (numel(ng.shape) != d || numel(nb.shape) != d)
      throw ShapeError("layer_norm gain/bias must have " + std::to_string(d) +
                       " elements, got " + shape_str(ng.shape) + " and " + shape_str(nb.shape));
    Node n;
    n.op = Op::kLayerNorm;
    n.shape = nx.shape;
    n.a = x.id;
    n.b = gain.id;
    n.c = bias.id;
    n.s0 = eps;
    n.val.resize(nx.val.size());
    n.payload.resize(nx.val.size() + static_cast<std::size_t>(rows));  // xhat, then 1/stddev per row
    for (std::int64_t i = 0; i < rows; ++i) {
      const R* xr = nx.val.data() + i * d;
      R mean = R(0);
      for (std::int64_t j = 0; j < d; ++j) mean += xr[j];
      mean /= static_cast<R>(d);
      R var = R(0);
      for (std::int64_t j = 0; j < d; ++j) {
        R c = xr[j] - mean;
        var += c * c;
      }
      var /= static_cast<R>(d);
      R inv = R(1) / std::sqrt(var + eps);
      n.payload[nx.val.size() + static_cast<std::size_t>(i)] = inv;
      for (std::int64_t j = 0; j < d; ++j) {
        R xh = (xr[j] - mean) * inv;
        n.payload[static_cast<std::size_t>(i * d + j)] = xh;
        n.val[static_cast<std::size_t>(i * d + j)] = xh * ng.val[static_cast<std::size_t>(j)] + nb.val[static_cast<std::size_t>(j)];
      }
    }
    Node moved = std::move(n);
    moved.rg = node_rg(x) || node_rg(gain) || node_rg(bias);
    return push(std::move(moved));
  }

  // Mean over rows of -log softmax(logits_row)[label_row]; scalar output.
  Var cross_entropy_mean(Var logits, std::span<const std::int32_t> labels) {
    const Node& nl = node(logits);
    if (nl.shape.size() != 2)
      throw ShapeError("cross_entropy expects [batch x V] logits, got " + shape_str(nl.shape));
    const auto bsz = nl.shape[0], v = nl.shape[1];
    if (static_cast<std::int64_t>(labels.size()) != bsz)
      throw ContractError("cross_entropy: " + std::to_string(labels.size()) +
                          " labels for batch of " + std::to_string(bsz));
    for (auto l : labels)
      if (l < 0 || l >= v)
        throw VocabError("label " + std::to_string(l) + " out of range [0, " + std::to_string(v) + ")");
    Node n;
    n.op = Op::kCrossEntropy;
    n.shape = {1};
    n.a = logits.id;
    n.list.assign(labels.begin(), labels.end());
    n.payload.resize(nl.val.size());  // softmax probabilities
    R loss = R(0);
    for (std::int64_t i = 0; i < bsz; ++i) {
      const R* x = nl.val.data() + i * v;
      R* p = n.payload.data() + i * v;
      R m = x[0];
      for (std::int64_t j = 1; j < v; ++j) m = std::max(m, x[j]);
      R sum = R(0);
      for (std::int64_t j = 0; j < v; ++j) {
        p[j] = std::exp(x[j] - m);
        sum += p[j];
      }
      for (std::int64_t j = 0; j < v; ++j) p[j] /= sum;
      loss += std::log(sum) + m - x[labels[static_cast<std::size_t>(i)]];
    }
    n.val = {loss / static_cast<R>(bsz)};
    return push_unary(std::move(n), logits);
  }

  Var cross_entropy(Var logits, std::int32_t label) {
    const std::int32_t ls[1] = {label};
    Var v2 = logits;
    if (node(logits).shape.size() == 1)
      v2 = reshape(logits, {1, node(logits).shape[0]});
    return cross_entropy_mean(v2, ls);
  }

  Var mean_scalars(std::span<const Var> xs) {
    if (xs.empty()) throw ContractError("mean_scalars over empty list");
    Node n;
    n.op = Op::kMeanScalars;
    n.shape = {1};
    R sum = R(0);
    bool rg = false;
    for (Var v : xs) {
      const Node& nv = node(v);
      if (numel(nv.shape) != 1)
        throw ShapeError("mean_scalars input must be scalar, got " + shape_str(nv.shape));
      sum += nv.val[0];
      rg = rg || nv.rg;
      n.list.push_back(v.id);
    }
    n.val = {sum / static_cast<R>(xs.size())};
    n.rg = rg;
    return push(std::move(n));
  }

  Var sum_all(Var a) {
    const Node& na = node(a);
    Node n;
    n.op = Op::kSumAll;
    n.shape = {1};
    n.a = a.id;
    R s = R(0);
    for (R v : na.val) s += v;
    n.val = {s};
    return push_unary(std::move(n), a);
  }

  Var reshape(Var a, Shape s) {
    const Node& na = node(a);
    if (numel(s) != numel(na.shape))
      throw ShapeError("reshape " + shape_str(na.shape) + " -> " + shape_str(s) +
                       " changes element count");
    Node n;
    n.op = Op::kReshape;
    n.shape = std::move(s);
    n.a = a.id;
    n.val = na.val;
    return push_unary(std::move(n), a);
  }

  // ---- reading ----

  const Shape& shape(Var v) const { return node(v).shape; }
  const std::vector<R>& value(Var v) const { return node(v).val; }
  const std::vector<R>& grad(Var v) const {
    if (!ran_backward_) throw ContractError("grad read before backward()");
    return node(v).grad;
  }
  std::size_t node_count() const { return nodes_.size(); }

  bool values_finite() const {
    for (const auto& n : nodes_)
      if (!all_finite(n.val)) return false;
    return true;
  }

  // ---- reverse pass ----

  // Seeds d(loss)/d(loss) = 1 and walks the tape once in reverse creation
  // order, which is a valid topological order by construction.
  void backward(Var loss) {
    const Node& nl = node(loss);
    if (numel(nl.shape) != 1)
      throw ContractError("backward needs a scalar loss, got " + shape_str(nl.shape));
    for (auto& n : nodes_)
      if (n.rg) n.grad.assign(n.val.size(), R(0));
    ran_backward_ = true;
    if (!nl.rg) return;  // loss does not depend on any parameter
    nodes_[static_cast<std::size_t>(loss.id)].grad[0] = R(1);
    for (std::int32_t i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.rg) continue;
      backprop(n);
    }
  }

  // Gradients of every named leaf, zero-filled when the leaf is off the
  // loss's path. Deterministic: keyed map, single tape walk.
  GradMap<R> grads_by_name() const {
    if (!ran_backward_) throw ContractError("grads_by_name before backward()");
    GradMap<R> out;
    for (const auto& n : nodes_) {
      if (n.op != Op::kLeaf || n.name.empty() || !n.rg) continue;
      auto [it, fresh] = out.emplace(n.name, n.grad);
      if (!fresh) throw ContractError("parameter bound twice on one tape: " + n.name);
    }
    return out;
  }

 private:
  std::vector<Node> nodes_;
  bool ran_backward_ = false;

  const Node& node(Var v) const {
    if (!v.valid() || v.id >= static_cast<std::int32_t>(nodes_.size()))
      throw ContractError("invalid tape variable");
    return nodes_[static_cast<std::size_t>(v.id)];
  }
  bool node_rg(Var v) const { return node(v).rg; }

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
  }
  Var push_unary(Node n, Var a) {
    n.rg = node_rg(a);
    return push(std::move(n));
  }
  Var push_binary(Node n, Var a, Var b) {
    n.rg = node_rg(a) || node_rg(b);
    return push(std::move(n));
  }

  static void check_mask_size(std::size_t got, std::int64_t want) {
    if (static_cast<std::int64_t>(got) != want)
      throw ContractError("mask length " + std::to_string(got) + " does not match " +
                          std::to_string(want) + " rows");
  }
  static void check_mask(const Node& na, const Mask& mask) {
    if (na.shape.size() != 2)
      throw ShapeError("masked pooling expects [rows x d], got " + shape_str(na.shape));
    check_mask_size(mask.size(), na.shape[0]);
    bool any = false;
    for (auto m : mask) any = any || (m != 0);
    if (!any) throw ContractError("all-padding mask: no real rows to pool");
  }

  static Bcast classify(const Shape& a, const Shape& b) {
    if (a == b) return Bcast::kSame;
    if (b.size() < a.size() &&
        std::equal(b.begin(), b.end(), a.end() - static_cast<std::ptrdiff_t>(b.size())))
      return Bcast::kSuffix;
    if (a.size() == 2 && b.size() == 2 && b[0] == a[0] && b[1] == 1) return Bcast::kTrailOne;
    throw ShapeError("incompatible shapes " + shape_str(a) + " vs " + shape_str(b));
  }

  Var binary(Op op, Var a, Var b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    Bcast bc = classify(na.shape, nb.shape);
    Node n;
    n.op = op;
    n.shape = na.shape;
    n.a = a.id;
    n.b = b.id;
    n.bcast = bc;
    n.val.resize(na.val.size());
    const std::size_t bn = nb.val.size();
    if (bc == Bcast::kSame) {
      for (std::size_t i = 0; i < na.val.size(); ++i)
        n.val[i] = op == Op::kAdd ? na.val[i] + nb.val[i] : na.val[i] * nb.val[i];
    } else if (bc == Bcast::kSuffix) {
      for (std::size_t i = 0; i < na.val.size(); ++i) {
        R bv = nb.val[i % bn];
        n.val[i] = op == Op::kAdd ? na.val[i] + bv : na.val[i] * bv;
      }
    } else {  // column [n x 1] against [n x m]
      const auto cols = static_cast<std::size_t>(na.shape[1]);
      for (std::size_t i = 0; i < na.val.size(); ++i) {
        R bv = nb.val[i / cols];
        n.val[i] = op == Op::kAdd ? na.val[i] + bv : na.val[i] * bv;
      }
    }
    return push_binary(std::move(n), a, b);
  }

  Var concat(std::span<const Var> parts, bool rows) {
    if (parts.empty()) throw ContractError("concat over empty list");
    const Node& first = node(parts[0]);
    if (first.shape.size() != 2)
      throw ShapeError("concat expects matrices, got " + shape_str(first.shape));
    std::int64_t total = 0;
    bool rg = false;
    for (Var p : parts) {
      const Node& np = node(p);
      if (np.shape.size() != 2 ||
          (rows ? np.shape[1] != first.shape[1] : np.shape[0] != first.shape[0]))
        throw ShapeError("concat: mismatched shapes " + shape_str(first.shape) + " vs " +
                         shape_str(np.shape));
      total += rows ? np.shape[0] : np.shape[1];
      rg = rg || np.rg;
    }
    Node n;
    n.op = rows ? Op::kConcatRows : Op::kConcatCols;
    n.shape = rows ? Shape{total, first.shape[1]} : Shape{first.shape[0], total};
    n.val.resize(static_cast<std::size_t>(numel(n.shape)));
    for (Var p : parts) n.list.push_back(p.id);
    if (rows) {
      std::size_t off = 0;
      for (Var p : parts) {
        const Node& np = node(p);
        std::copy(np.val.begin(), np.val.end(), n.val.begin() + static_cast<std::ptrdiff_t>(off));
        off += np.val.size();
      }
    } else {
      const auto r = first.shape[0];
      std::int64_t coff = 0;
      for (Var p : parts) {
        const Node& np = node(p);
        const auto w = np.shape[1];
        for (std::int64_t i = 0; i < r; ++i)
          std::copy_n(np.val.data() + i * w, w, n.val.data() + i * total + coff);
        coff += w;
      }
    }
    n.rg = rg;
    return push(std::move(n));
  }

  // c += a[m x k] * b[k x n]
  static void gemm(const R* a, const R* b, R* c, std::int64_t m, std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
      const R* arow = a + i * k;
      R* crow = c + i * n;
      for (std::int64_t kk = 0; kk < k; ++kk) {
        const R av = arow[kk];
        const R* brow = b + kk * n;
        for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }

  void add_into_grad(std::int32_t id, const R* g, std::size_t count, std::size_t offset = 0) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.rg) return;
    R* dst = n.grad.data() + offset;
    for (std::size_t i = 0; i < count; ++i) dst[i] += g[i];
  }

  void backprop(Node& n) {
    switch (n.op) {
      case Op::kLeaf:
      case Op::kConst:
        break;
      case Op::kMatmul: {
        Node& na = nodes_[static_cast<std::size_t>(n.a)];
        Node& nb = nodes_[static_cast<std::size_t>(n.b)];
        const auto m = na.shape[0], k = na.shape[1], cols = nb.shape[1];
        if (na.rg) {  // dA += G * B^T
          for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t kk = 0; kk < k; ++kk) {
              R acc = R(0);
              const R* grow = n.grad.data() + i * cols;
              const R* brow = nb.val.data() + kk * cols;
              for (std::int64_t j = 0; j < cols; ++j) acc += grow[j] * brow[j];
              na.grad[static_cast<std::size_t>(i * k + kk)] += acc;
            }
        }
        if (nb.rg) {  // dB += A^T * G
          for (std::int64_t i = 0; i < m; ++i) {
            const R* arow = na.val.data() + i * k;
            const R* grow = n.grad.data() + i * cols;
            for (std::int64_t kk = 0; kk < k; ++kk) {
              const R av = arow[kk];
              R* brow = nb.grad.data() + kk * cols;
              for (std::int64_t j = 0; j < cols; ++j) brow[j] += av * grow[j];
            }
          }
        }
        break;
      }
      case Op::kTranspose: {
        Node& na = nodes_[static_cast<std::size_t>(n.a)];
        if (!na.rg) break;
        const auto rows = n.shape[0], cols = n.shape[1];
        for (std::int64_t i = 0; i < rows; ++i)
          for (std::int64_t j = 0; j < cols; ++j)
            na.grad[static_cast<std::size_t>(j * rows + i)] += n.grad[static_cast<std::size_t>(i * cols + j)];
        break;
      }
      case Op::kAdd:
      case Op::kMul: {
        Node& na = nodes_[static_cast<std::size_t>(n.a)];
        Node& nb = nodes_[static_cast<std::size_t>(n.b)];
        const std::size_t bn = nb.val.size();
        const auto cols = n.shape.size() == 2 ? static_cast<std::size_t>(n.shape[1]) : 1;
        for (std::size_t i = 0; i < n.val.size(); ++i) {
          std::size_t bi = n.bcast == Bcast::kSame    ? i
                           : n.bcast == Bcast::kSuffix ? i % bn
                                                       : i / cols;
          R g = n.grad[i];
          if (n.op == Op::kAdd) {
            if (na.rg) na.grad[i] += g;
            if (nb.rg) nb.grad[bi] += g;
          } else {
            if (na.rg) na.grad[i] += g * nb.val[bi];
            if (nb.rg) nb.grad[bi] += g * na.val[i];
          }
        }
        break;
      }
      case Op::kAffine: {
        Node& na = nodes_[static_cast<std::size_t>(n.a)];
        if (!na.rg) break;
        for (std::size_t i = 0; i < n.val.size(); ++i) na.grad[i] += n.s0 * n.grad[i];
        break;
      }
      case Op::kLeakyRelu: {
        Node& na = nodes_[static_cast<std::size_t>(n.a)];
        if (!na.rg) break;
        for (std::size_t i = 0; i < n.val.size(); ++i)
          na.grad[i] += (na.val[i] >= R(0) ? R(1) : n.s0) * n.grad[i];
        break;
      }
      case Op::kSigmoid: {
        Node& na = nodes_[static_cast<std::size_t>(n.a)];
        if (!na.rg) break;
        for (std::size_t i = 0; i < n.val.size(); ++i)
          na.grad[i] += n.grad[i] * n.val[i] * (R(1) - n.val[i]);
        break;
      }
      case Op::kTanh: {
        Node& na = nodes_[static_cast<std::size_t>(n.a)];
        if (!na.rg) break;
        for (std::size_t i = 0; i < n.val.size(); ++i)
          na.grad[i] += n.grad[i] * (R(1) - n.val[i] * n.val[i]);
        break;
      }
      case Op::kSoftmax: {
        Node& na = nodes_[static_cast<std::size_t>(n.a)];
        if (!na.rg) break;
        const std::int64_t last = n.shape.back();
        const std::int64_t slices = numel(n.shape) / last;
        for (std::int64_t s = 0; s < slices; ++s) {
          const R* y = n.val.data() + s * last;
          const R* g = n.grad.data() + s * last;
          R dot = R(0);
          for (std::int64_t j = 0; j < last; ++j) dot += g[j] * y[j];
          R* gx = na.grad.data() + s * last;
          for (std::int64_t j = 0; j < last; ++j) gx[j] += y[j] * (g[j] - dot);
        }
        break;
      }
      case Op::kEmbedRows: {
        Node& na = nodes_[static_cast<std::size_t>(n.a)];
        if (!na.rg) break;
        const auto d = n.shape[1];
        for (std::size_t i = 0; i < n.list.size(); ++i) {
          R* dst = na.grad.data() + static_cast<std::size_t>(n.list[i]) * d;
          const R* src = n.grad.data() + i * static_cast<std::size_t>(d);
          for (std::int64_t j = 0; j < d; ++j) dst[j] += src[j];
        }
        break;
      }
      case Op::kSliceRows: {
        Node& na = nodes_[static_cast<std::size_t>(n.a)];
        if (!na.rg) break;
        const auto d = n.shape[1];
        add_into_grad(n.a, n.grad.data(), n.grad.size(),
                      static_cast<std::size_t>(n.list[0]) * static_cast<std::size_t>(d));
        break;
      }
      case Op::kSliceCols: {
        Node& na = nodes_[static_cast<std::size_t>(n.a)];
        if (!na.rg) break;
        const auto cols = na.shape[1], w = n.shape[1];
        const auto c0 = n.list[0];
        for (std::int64_t i = 0; i < n.shape[0]; ++i)
          for (std::int64_t j = 0; j < w; ++j)
            na.grad[static_cast<std::size_t>(i * cols + c0 + j)] += n.grad[static_cast<std::size_t>(i * w + j)];
        break;
      }
      case Op::kConcatRows: {
        std::size_t off = 0;
        for (auto pid : n.list) {
          Node& np = nodes_[static_cast<std::size_t>(pid)];
          if (np.rg)
            for (std::size_t i = 0; i < np.val.size(); ++i) np.grad[i] += n.grad[off + i];
          off += np.val.size();
        }
        break;
      }
      case Op::kConcatCols: {
        const auto total = n.shape[1], r = n.shape[0];
        std::int64_t coff = 0;
        for (auto pid : n.list) {
          Node& np = nodes_[static_cast<std::size_t>(pid)];
          const auto w = np.shape[1];
          if (np.rg)
            for (std::int64_t i = 0; i < r; ++i)
              for (std::int64_t j = 0; j < w; ++j)
                np.grad[static_cast<std::size_t>(i * w + j)] += n.grad[static_cast<std::size_t>(i * total + coff + j)];
          coff += w;
        }
        break;
      }
      case Op::kMaskedMeanRows: {
        Node& na = nodes_[static_cast<std::size_t>(n.a)];
        if (!na.rg) break;
        const auto d = n.shape[1];
        const R inv = R(1) / n.s0;
        for (std::size_t i = 0; i < n.list.size(); ++i) {
          if (!n.list[i]) continue;
          R* dst = na.grad.data() + i * static_cast<std::size_t>(d);
          for (std::int64_t j = 0; j < d; ++j) dst[j] += n.grad[static_cast<std::size_t>(j)] * inv;
        }
        break;
      }
      case Op::kMaskedMaxRows: {
        Node& na = nodes_[static_cast<std::size_t>(n.a)];
        if (!na.rg) break;
        const auto d = n.shape[1];
        const auto cols = na.shape[1];
        for (std::int64_t j = 0; j < d; ++j)
          na.grad[static_cast<std::size_t>(n.list[static_cast<std::size_t>(j)] * cols + j)] +=
              n.grad[static_cast<std::size_t>(j)];
        break;
      }
      case Op::kLayerNorm: {
        Node& nx = nodes_[static_cast<std::size_t>(n.a)];
        Node& ng = nodes_[static_cast<std::size_t>(n.b)];
        Node& nb = nodes_[static_cast<std::size_t>(n.c)];
        const auto rows = n.shape[0], d = n.shape[1];
        const R* xhat = n.payload.data();
        const R* inv = n.payload.data() + n.val.size();
        for (std::int64_t i = 0; i < rows; ++i) {
          const R* g = n.grad.data() + i * d;
          const R* xh = xhat + i * d;
          if (ng.rg)
            for (std::int64_t j = 0; j < d; ++j) ng.grad[static_cast<std::size_t>(j)] += g[j] * xh[j];
          if (nb.rg)
            for (std::int64_t j = 0; j < d; ++j) nb.grad[static_cast<std::size_t>(j)] += g[j];
          if (nx.rg) {
            R m1 = R(0), m2 = R(0);
            for (std::int64_t j = 0; j < d; ++j) {
              R h = g[j] * ng.val[static_cast<std::size_t>(j)];
              m1 += h;
              m2 += h * xh[j];
            }
            m1 /= static_cast<R>(d);
            m2 /= static_cast<R>(d);
            R* gx = nx.grad.data() + i * d;
            for (std::int64_t j = 0; j < d; ++j) {
              R h = g[j] * ng.val[static_cast<std::size_t>(j)];
              gx[j] += inv[i] * (h - m1 - xh[j] * m2);
            }
          }
        }
        break;
      }
      case Op::kCrossEntropy: {
        Node& na = nodes_[static_cast<std::size_t>(n.a)];
        if (!na.rg) break;
        const auto bsz = na.shape[0], v = na.shape[1];
        const R scale = n.grad[0] / static_cast<R>(bsz);
        for (std::int64_t i = 0; i < bsz; ++i) {
          const R* p = n.payload.data() + i * v;
          R* gx = na.grad.data() + i * v;
          for (std::int64_t j = 0; j < v; ++j) gx[j] += scale * p[j];
          gx[n.list[static_cast<std::size_t>(i)]] -= scale;
        }
        break;
      }
      case Op::kMeanScalars: {
        const R share = n.grad[0] / static_cast<R>(n.list.size());
        for (auto pid : n.list) {
          Node& np = nodes_[static_cast<std::size_t>(pid)];
          if (np.rg) np.grad[0] += share;
        }
        break;
      }
      case Op::kSumAll: {
        Node& na = nodes_[static_cast<std::size_t>(n.a)];
        if (!na.rg) break;
        for (auto& g : na.grad) g += n.grad[0];
        break;
      }
      case Op::kReshape: {
        Node& na = nodes_[static_cast<std::size_t>(n.a)];
        if (!na.rg) break;
        for (std::size_t i = 0; i < n.grad.size(); ++i) na.grad[i] += n.grad[i];
        break;
      }
    }
  }
};

}  // namespace txt
