#pragma once

#include <functional>
#include <vector>

#include <Eigen/Core>

namespace soel {

// Reverse-mode tape over matrix-valued nodes. Each recorded operation keeps a
// forward closure (used by Replay) and an adjoint closure (used by Backward).
class Tape {
 public:
  using Value = Eigen::MatrixXd;

  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
    bool operator==(const Var&) const = default;
  };

  // Recomputes `out` from the current values of the inputs.
  using ForwardFn = std::function<void(const Tape&, Value& out)>;
  // Accumulates input adjoints given this node's adjoint `g`.
  using BackwardFn = std::function<void(Tape&, const Value& g)>;

  Var Leaf(Value value);
  Var Constant(Value value);
  Var Record(std::vector<Var> inputs, Value value, ForwardFn forward, BackwardFn backward);

  const Value& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  bool is_leaf(Var v) const { return nodes_[v.id].leaf; }
  std::size_t size() const { return nodes_.size(); }

  // Adjoint of v after Backward; zero-shaped like the value when untouched.
  Value grad(Var v) const;
  bool has_grad(Var v) const { return !grads_.empty() && grads_[v.id].size() > 0; }

  // Mutable adjoint slot, zero-initialised on first access. For use inside
  // backward closures only.
  Value& GradSlot(Var v);

  // Seeds d(root)/d(root) = 1 for a 1x1 root and sweeps the tape in reverse.
  void Backward(Var root);

  // Re-executes every recorded operation in order from the leaf and constant
  // values, overwriting stored values.
  void Replay();

  void SetLeafValue(Var v, Value value);

 private:
  struct Node {
    Value value;
    std::vector<Var> inputs;
    ForwardFn forward;
    BackwardFn backward;
    bool requires_grad = false;
    bool leaf = false;
  };

  std::vector<Node> nodes_;
  std::vector<Value> grads_;
};

}  // namespace soel
