#pragma once

// Reverse-mode differentiation over Tensor values.
//
// A Tape is an append-only list of nodes. Leaves hold user-supplied values;
// every other node stores a forward rule (so the tape can be replayed), the
// value it produced, and a backward rule mapping the output gradient to one
// gradient per input. Node ids are assigned in recording order, so reverse id
// order is a reverse topological order.

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ema/ops.hpp"
#include "ema/tensor.hpp"

namespace ema::ad {

using NodeId = std::size_t;

class Tape;

/// Handle to a node on a tape. Cheap to copy; the tape must outlive it.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  NodeId id() const { return id_; }
  Tape& tape() const;
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

using Inputs = std::span<const Tensor* const>;
using ForwardFn = std::function<Tensor(Inputs)>;
/// (inputs, output value, output gradient) -> one gradient per input, shaped like that input.
using BackwardFn = std::function<std::vector<Tensor>(Inputs, const Tensor&, const Tensor&)>;

/// Gradients indexed by node id; nodes the output does not depend on read as zeros.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const Tape* tape, std::vector<std::optional<Tensor>> grads)
      : tape_(tape), grads_(std::move(grads)) {}

  Tensor operator[](const Var& v) const;
  Tensor at(NodeId id) const;
  bool has(NodeId id) const { return id < grads_.size() && grads_[id].has_value(); }

 private:
  const Tape* tape_ = nullptr;
  std::vector<std::optional<Tensor>> grads_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, std::string_view name = "leaf");

  /// Records an operation and evaluates it immediately.
  Var apply(std::string_view op, std::initializer_list<Var> inputs, ForwardFn forward, BackwardFn backward);
  Var apply(std::string_view op, std::span<const Var> inputs, ForwardFn forward, BackwardFn backward);

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(NodeId id) const;
  const std::string& op_name(NodeId id) const;
  bool is_leaf(NodeId id) const;
  const std::vector<NodeId>& inputs(NodeId id) const;

  /// Overwrites a leaf value; use replay() to refresh dependents.
  void set_leaf(NodeId id, Tensor value);

  /// Re-evaluates every non-leaf node from current leaf values.
  void replay();

  /// Re-evaluates every node into a scratch buffer; true iff all outputs are bit-identical.
  bool replay_matches() const;

  Gradients backward(NodeId output, const Tensor& seed) const;
  Gradients backward(const Var& output, const Tensor& seed) const { return backward(output.id(), seed); }
  /// Seed of ones; the usual call for scalar losses.
  Gradients backward(const Var& output) const;

 private:
  struct Node {
    std::string op;
    std::vector<NodeId> inputs;
    Tensor value;
    ForwardFn forward;
    BackwardFn backward;
  };

  const Node& node(NodeId id) const;
  std::vector<const Tensor*> input_values(const Node& n, const std::vector<Tensor>* scratch = nullptr) const;

  std::deque<Node> nodes_;
};

inline Tensor Gradients::operator[](const Var& v) const { return at(v.id()); }

/// Free-function form of Tape::backward.
inline Gradients backward(const Tape& tape, NodeId output, const Tensor& seed) { return tape.backward(output, seed); }

// ---------------------------------------------------------------------------
// Differentiable counterparts of the primitives in ops.hpp. Names mirror the
// Tensor overloads so generic code resolves either by argument type.

Var reshape(const Var& x, Shape shape);
Var permute(const Var& x, std::vector<Index> axes);
Var concat(std::span<const Var> parts, Index axis);
Var concat(std::initializer_list<Var> parts, Index axis);
Var slice(const Var& x, Index axis, Index start, Index length);
std::vector<Var> split(const Var& x, Index axis, std::span<const Index> sizes);
std::vector<Var> split(const Var& x, Index axis, std::initializer_list<Index> sizes);

Var broadcast_binary(const Var& a, const Var& b, BinaryOp kind);
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator*(const Var& a, double s);
Var operator*(double s, const Var& a);

Var matmul_batched(const Var& a, const Var& b);
Var conv2d(const Var& x, const Var& weight, const Var& bias, Index stride = 1, Index padding = 0);

Var avgpool_width(const Var& x);
Var avgpool_height(const Var& x);
Var gap2d(const Var& x);

Var sigmoid(const Var& x);
Var relu(const Var& x);
Var softmax_axis(const Var& x, Index axis);

/// Sum of all elements, as a rank-0 tensor.
Var sum(const Var& x);
/// Sum of squared elements, as a rank-0 tensor.
Var sum_squares(const Var& x);
/// Mean softmax cross-entropy of (N,K) logits against integer labels, via log-sum-exp.
Var softmax_cross_entropy(const Var& logits, std::span<const int> labels);

}  // namespace ema::ad
