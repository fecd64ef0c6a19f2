#include "ema/tape.hpp"

#include <algorithm>
#include <cstring>

namespace ema::ad {

Tape& Var::tape() const {
  if (!tape_) throw TapeError("Var is not bound to a tape");
  return *tape_;
}

const Tensor& Var::value() const { return tape().value(id_); }

Tensor Gradients::at(NodeId id) const {
  if (!tape_) throw TapeError("empty gradient set");
  if (id >= tape_->size()) throw TapeError("unknown node id " + std::to_string(id));
  if (id < grads_.size() && grads_[id]) return *grads_[id];
  return Tensor::zeros(tape_->value(id).shape());
}

Var Tape::leaf(Tensor value, std::string_view name) {
  nodes_.push_back(Node{std::string(name), {}, std::move(value), {}, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::apply(std::string_view op, std::initializer_list<Var> inputs, ForwardFn forward, BackwardFn backward) {
  return apply(op, std::span<const Var>(inputs.begin(), inputs.size()), std::move(forward), std::move(backward));
}

Var Tape::apply(std::string_view op, std::span<const Var> inputs, ForwardFn forward, BackwardFn backward) {
  Node n{std::string(op), {}, {}, std::move(forward), std::move(backward)};
  n.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    if (&v.tape() != this) throw TapeError(std::string(op) + ": input recorded on a different tape");
    if (v.id() >= nodes_.size()) throw TapeError("unknown node id " + std::to_string(v.id()));
    n.inputs.push_back(v.id());
  }
  const auto in = input_values(n);
  n.value = n.forward(in);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

const Tape::Node& Tape::node(NodeId id) const {
  if (id >= nodes_.size()) throw TapeError("unknown node id " + std::to_string(id));
  return nodes_[id];
}

const Tensor& Tape::value(NodeId id) const { return node(id).value; }
const std::string& Tape::op_name(NodeId id) const { return node(id).op; }
bool Tape::is_leaf(NodeId id) const { return !node(id).forward; }
const std::vector<NodeId>& Tape::inputs(NodeId id) const { return node(id).inputs; }

std::vector<const Tensor*> Tape::input_values(const Node& n, const std::vector<Tensor>* scratch) const {
  std::vector<const Tensor*> in;
  in.reserve(n.inputs.size());
  for (NodeId i : n.inputs) in.push_back(scratch ? &(*scratch)[i] : &nodes_[i].value);
  return in;
}

void Tape::set_leaf(NodeId id, Tensor value) {
  if (!is_leaf(id)) throw TapeError("node " + std::to_string(id) + " is not a leaf");
  if (value.shape() != nodes_[id].value.shape()) throw ShapeError("set_leaf: shape changed");
  nodes_[id].value = std::move(value);
}

void Tape::replay() {
  for (auto& n : nodes_) {
    if (!n.forward) continue;
    const auto in = input_values(n);
    n.value = n.forward(in);
  }
}

bool Tape::replay_matches() const {
  std::vector<Tensor> scratch;
  scratch.reserve(nodes_.size());
  for (const auto& n : nodes_) {
    if (!n.forward) {
      scratch.push_back(n.value);
      continue;
    }
    const auto in = input_values(n, &scratch);
    scratch.push_back(n.forward(in));
    const Tensor& fresh = scratch.back();
    if (fresh.shape() != n.value.shape() ||
        std::memcmp(fresh.data(), n.value.data(), sizeof(double) * static_cast<std::size_t>(fresh.size())) != 0) {
      return false;
    }
  }
  return true;
}

Gradients Tape::backward(NodeId output, const Tensor& seed) const {
  const Node& out = node(output);
  if (seed.shape() != out.value.shape()) {
    throw ShapeError("backward: seed " + seed.shape().str() + " does not match output " + out.value.shape().str());
  }
  std::vector<std::optional<Tensor>> grads(nodes_.size());
  grads[output] = seed;
  for (NodeId id = output + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (!grads[id] || !n.backward) continue;
    const auto in = input_values(n);
    auto parts = n.backward(in, n.value, *grads[id]);
    if (parts.size() != n.inputs.size()) throw TapeError(n.op + ": backward returned wrong arity");
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const NodeId src = n.inputs[k];
      if (parts[k].shape() != nodes_[src].value.shape()) {
        throw TapeError(n.op + ": gradient shape " + parts[k].shape().str() + " for input of shape " +
                        nodes_[src].value.shape().str());
      }
      if (grads[src]) {
        grads[src]->array() += parts[k].array();
      } else {
        grads[src] = std::move(parts[k]);
      }
    }
  }
  return Gradients(this, std::move(grads));
}

Gradients Tape::backward(const Var& output) const {
  return backward(output.id(), Tensor::ones(value(output.id()).shape()));
}

}  // namespace ema::ad
