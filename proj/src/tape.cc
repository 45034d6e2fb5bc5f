#include "soel/tape.h"

#include <stdexcept>

namespace soel {

Tape::Var Tape::Leaf(Value value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  n.leaf = true;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tape::Var Tape::Constant(Value value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tape::Var Tape::Record(std::vector<Var> inputs, Value value, ForwardFn forward,
                       BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (Var in : inputs) {
    if (!in.valid() || in.id >= static_cast<int>(nodes_.size()))
      throw std::logic_error("tape input refers to a node that was not recorded");
    n.requires_grad = n.requires_grad || nodes_[in.id].requires_grad;
  }
  n.inputs = std::move(inputs);
  n.forward = std::move(forward);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tape::Value Tape::grad(Var v) const {
  if (has_grad(v)) return grads_[v.id];
  return Value::Zero(nodes_[v.id].value.rows(), nodes_[v.id].value.cols());
}

Tape::Value& Tape::GradSlot(Var v) {
  Value& g = grads_[v.id];
  if (g.size() == 0) g = Value::Zero(nodes_[v.id].value.rows(), nodes_[v.id].value.cols());
  return g;
}

void Tape::Backward(Var root) {
  if (!root.valid() || root.id >= static_cast<int>(nodes_.size()))
    throw std::logic_error("backward root is not on the tape");
  if (nodes_[root.id].value.size() != 1) throw std::logic_error("backward root must be a scalar");
  grads_.assign(nodes_.size(), Value());
  GradSlot(root)(0, 0) = 1.0;
  for (int id = root.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.leaf || grads_[id].size() == 0) continue;
    if (!n.backward) throw std::logic_error("tape node without an adjoint rule");
    // closures only touch input slots, which all precede this node
    Value g = std::move(grads_[id]);
    n.backward(*this, g);
    grads_[id] = std::move(g);
  }
}

void Tape::Replay() {
  for (Node& n : nodes_)
    if (n.forward) n.forward(*this, n.value);
}

void Tape::SetLeafValue(Var v, Value value) {
  Node& n = nodes_[v.id];
  if (!n.leaf && n.forward) throw std::logic_error("only leaves and constants can be reassigned");
  if (value.rows() != n.value.rows() || value.cols() != n.value.cols())
    throw std::invalid_argument("leaf value shape mismatch");
  n.value = std::move(value);
}

}  // namespace soel
