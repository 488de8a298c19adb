#pragma once

// Reverse-mode automatic differentiation over dense tensors.
//
// A Tape is an append-only record of forward operations. Every node keeps its
// forward value, which is all the vector-Jacobian rules need. Node ids are
// assigned in creation order, so inputs always precede their consumers and a
// single reverse sweep visits each node once.
//
// Broadcasting is restricted to two forms: a single-element tensor against any
// shape, and a tensor whose shape equals the trailing dimensions of the other
// operand (a bias row against a batch). Anything else is a ShapeError.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trajdiff/tensor.hpp"

namespace trajdiff::ad {

using NodeId = std::size_t;

enum class OpKind {
  kLeaf,
  kConstant,
  kAdd,
  kSub,
  kMul,
  kScale,
  kMatMul,
  kConcat,
  kSlice,
  kSum,
  kMean,
  kAbs,
  kSquare,
  kSqrt,
  kExp,
  kLog,
  kTanh,
  kLeakyRelu,
  kSigmoid,
  kSoftplus,
  kBroadcast,
};

std::string_view op_name(OpKind kind);

// Non-tensor arguments of an op. Only the fields relevant to the kind are read.
struct OpAttrs {
  double scalar = 0.0;     // kScale factor, kLeakyRelu negative slope
  std::size_t axis = 0;    // kConcat, kSlice
  std::size_t begin = 0;   // kSlice
  std::size_t end = 0;     // kSlice (exclusive)
  Shape shape;             // kBroadcast target
};

class Tape;
class Gradients;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  NodeId id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = delete;
  Tape& operator=(Tape&&) = delete;

  // Differentiable input. `origin` optionally identifies the storage the value
  // was copied from, so callers can audit which parameters entered a graph.
  Var leaf(Tensor value, std::string name = {}, const void* origin = nullptr);
  // Non-differentiable input.
  Var constant(Tensor value);

  std::size_t size() const { return nodes_.size(); }
  OpKind kind(NodeId id) const { return nodes_.at(id).kind; }
  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  std::span<const NodeId> inputs(NodeId id) const { return nodes_.at(id).inputs; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }

  std::vector<NodeId> leaves() const;
  const std::string& leaf_name(NodeId id) const { return nodes_.at(id).name; }
  const void* leaf_origin(NodeId id) const { return nodes_.at(id).origin; }

  // Generic forward: validates shapes, computes the value, records the node.
  Var apply(OpKind kind, std::span<const Var> inputs, const OpAttrs& attrs = {});

 private:
  friend Gradients backward(const Var& output);

  struct Node {
    OpKind kind;
    std::vector<NodeId> inputs;
    Tensor value;
    OpAttrs attrs;
    bool requires_grad = false;
    std::string name;
    const void* origin = nullptr;
  };

  const Node& node(NodeId id) const { return nodes_[id]; }
  Var push(Node node);

  std::vector<Node> nodes_;
};

// Result of a reverse sweep: d(output)/d(node) for every node that the output
// depends on through differentiable paths. Other nodes report zeros.
class Gradients {
 public:
  Gradients() = default;
  Tensor operator[](const Var& v) const { return of(v.id()); }
  Tensor of(NodeId id) const;
  bool reached(NodeId id) const { return id < grads_.size() && grads_[id].has_value(); }

 private:
  friend Gradients backward(const Var& output);
  const Tape* tape_ = nullptr;
  std::vector<std::optional<Tensor>> grads_;
};

// Reverse sweep from a single-element output node.
Gradients backward(const Var& output);

// Named forwards. Each records exactly one node, plus an implicit broadcast
// node when binary operands differ in shape.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double factor);
Var add_scalar(const Var& x, double c);  // x + c via a broadcast constant
Var matmul(const Var& a, const Var& b);
Var concat(std::span<const Var> parts, std::size_t axis);
Var slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t end);
Var sum(const Var& x);
Var mean(const Var& x);
Var abs(const Var& x);
Var square(const Var& x);
Var sqrt(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);
Var tanh(const Var& x);
Var leaky_relu(const Var& x, double negative_slope);
inline Var relu(const Var& x) { return leaky_relu(x, 0.0); }
Var sigmoid(const Var& x);
Var softplus(const Var& x);
Var broadcast_to(const Var& x, Shape target);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(double c, const Var& x) { return scale(x, c); }
inline Var operator*(const Var& x, double c) { return scale(x, c); }
inline Var operator-(const Var& x) { return scale(x, -1.0); }

// True when `from` can be broadcast to `to` under the rules above.
bool broadcastable(const Shape& from, const Shape& to);

}  // namespace trajdiff::ad
