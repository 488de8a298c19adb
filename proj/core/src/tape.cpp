#include "trajdiff/tape.hpp"

#include <Eigen/Core>
#include <cmath>

#include "trajdiff/error.hpp"

namespace trajdiff::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap as_matrix(const Tensor& t) {
  return ConstMap(t.data().data(), static_cast<Eigen::Index>(t.shape()[0]),
                  static_cast<Eigen::Index>(t.shape()[1]));
}

MutMap as_matrix(Tensor& t) {
  return MutMap(t.data().data(), static_cast<Eigen::Index>(t.shape()[0]),
                static_cast<Eigen::Index>(t.shape()[1]));
}

[[noreturn]] void shape_fail(OpKind kind, const std::string& detail) {
  throw ShapeError(std::string(op_name(kind)) + ": " + detail);
}

std::size_t expected_arity(OpKind kind) {
  switch (kind) {
    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMul:
    case OpKind::kMatMul:
      return 2;
    case OpKind::kConcat:
      return 0;  // variadic
    default:
      return 1;
  }
}

// Outer/axis/inner extents for concat and slice along `axis`.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

template <class F>
Tensor map_unary(const Tensor& x, F f) {
  Tensor out(x.shape());
  const auto in = x.data();
  auto o = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = f(in[i]);
  return out;
}

template <class F>
Tensor map_binary(const Tensor& a, const Tensor& b, F f) {
  Tensor out(a.shape());
  const auto x = a.data();
  const auto y = b.data();
  auto o = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) o[i] = f(x[i], y[i]);
  return out;
}

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_value(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

void add_into(Tensor& acc, const Tensor& g) {
  auto a = acc.data();
  const auto b = g.data();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

}  // namespace

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kConstant: return "constant";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scalar-mul";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kConcat: return "concat";
    case OpKind::kSlice: return "slice";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kAbs: return "abs";
    case OpKind::kSquare: return "square";
    case OpKind::kSqrt: return "sqrt";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kTanh: return "tanh";
    case OpKind::kLeakyRelu: return "leaky-relu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kSoftplus: return "softplus";
    case OpKind::kBroadcast: return "broadcast";
  }
  return "unknown";
}

bool broadcastable(const Shape& from, const Shape& to) {
  if (shape_size(from) == 1) return true;
  // Strip leading unit dims of `from`, then require a trailing match.
  std::size_t lead = 0;
  while (lead < from.size() && from[lead] == 1) ++lead;
  const std::size_t n = from.size() - lead;
  if (n > to.size()) return false;
  for (std::size_t i = 0; i < n; ++i) {
    if (from[lead + i] != to[to.size() - n + i]) return false;
  }
  return true;
}

const Tensor& Var::value() const {
  if (!tape_) throw Error("var: use of an unbound variable");
  return tape_->value(id_);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Tensor value, std::string name, const void* origin) {
  Node n{OpKind::kLeaf, {}, std::move(value), {}, true, std::move(name), origin};
  return push(std::move(n));
}

Var Tape::constant(Tensor value) {
  Node n{OpKind::kConstant, {}, std::move(value), {}, false, {}, nullptr};
  return push(std::move(n));
}

std::vector<NodeId> Tape::leaves() const {
  std::vector<NodeId> out;
  for (NodeId i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].kind == OpKind::kLeaf) out.push_back(i);
  }
  return out;
}

Var Tape::apply(OpKind kind, std::span<const Var> inputs, const OpAttrs& attrs) {
  if (kind == OpKind::kLeaf || kind == OpKind::kConstant) {
    shape_fail(kind, "inputs are created with Tape::leaf / Tape::constant");
  }
  const std::size_t arity = expected_arity(kind);
  if (arity != 0 && inputs.size() != arity) {
    shape_fail(kind, "expected " + std::to_string(arity) + " inputs, got " +
                         std::to_string(inputs.size()));
  }
  if (inputs.empty()) shape_fail(kind, "no inputs");
  for (const Var& v : inputs) {
    if (v.tape() != this) shape_fail(kind, "input belongs to a different tape");
  }

  Node node{kind, {}, Tensor{}, attrs, false, {}, nullptr};
  node.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    node.inputs.push_back(v.id());
    node.requires_grad = node.requires_grad || nodes_[v.id()].requires_grad;
  }

  const Tensor& x = inputs[0].value();
  switch (kind) {
    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMul: {
      const Tensor& y = inputs[1].value();
      if (x.shape() != y.shape()) {
        shape_fail(kind, "shapes " + shape_str(x.shape()) + " and " + shape_str(y.shape()) +
                             " differ");
      }
      if (kind == OpKind::kAdd) node.value = map_binary(x, y, [](double a, double b) { return a + b; });
      if (kind == OpKind::kSub) node.value = map_binary(x, y, [](double a, double b) { return a - b; });
      if (kind == OpKind::kMul) node.value = map_binary(x, y, [](double a, double b) { return a * b; });
      break;
    }
    case OpKind::kScale: {
      const double c = attrs.scalar;
      node.value = map_unary(x, [c](double v) { return c * v; });
      break;
    }
    case OpKind::kMatMul: {
      const Tensor& y = inputs[1].value();
      if (x.rank() != 2 || y.rank() != 2 || x.shape()[1] != y.shape()[0]) {
        shape_fail(kind, "cannot multiply " + shape_str(x.shape()) + " by " + shape_str(y.shape()));
      }
      Tensor out({x.shape()[0], y.shape()[1]});
      as_matrix(out).noalias() = as_matrix(x) * as_matrix(y);
      node.value = std::move(out);
      break;
    }
    case OpKind::kConcat: {
      const Shape& s0 = x.shape();
      if (attrs.axis >= s0.size()) shape_fail(kind, "axis out of range for " + shape_str(s0));
      Shape out_shape = s0;
      out_shape[attrs.axis] = 0;
      for (const Var& v : inputs) {
        const Shape& s = v.shape();
        bool ok = s.size() == s0.size();
        for (std::size_t i = 0; ok && i < s.size(); ++i) {
          if (i != attrs.axis && s[i] != s0[i]) ok = false;
        }
        if (!ok) shape_fail(kind, "cannot join " + shape_str(s0) + " with " + shape_str(s));
        out_shape[attrs.axis] += s[attrs.axis];
      }
      Tensor out(out_shape);
      const AxisSplit os = split_at(out_shape, attrs.axis);
      std::size_t offset = 0;
      for (const Var& v : inputs) {
        const Tensor& part = v.value();
        const AxisSplit ps = split_at(part.shape(), attrs.axis);
        const std::size_t run = ps.extent * ps.inner;
        for (std::size_t o = 0; o < ps.outer; ++o) {
          const double* src = part.data().data() + o * run;
          double* dst = out.data().data() + o * os.extent * os.inner + offset * os.inner;
          std::copy(src, src + run, dst);
        }
        offset += ps.extent;
      }
      node.value = std::move(out);
      break;
    }
    case OpKind::kSlice: {
      const Shape& s = x.shape();
      if (attrs.axis >= s.size() || attrs.begin >= attrs.end || attrs.end > s[attrs.axis]) {
        shape_fail(kind, "range [" + std::to_string(attrs.begin) + "," + std::to_string(attrs.end) +
                             ") on axis " + std::to_string(attrs.axis) + " of " + shape_str(s));
      }
      Shape out_shape = s;
      out_shape[attrs.axis] = attrs.end - attrs.begin;
      Tensor out(out_shape);
      const AxisSplit is = split_at(s, attrs.axis);
      const std::size_t run = (attrs.end - attrs.begin) * is.inner;
      for (std::size_t o = 0; o < is.outer; ++o) {
        const double* src = x.data().data() + o * is.extent * is.inner + attrs.begin * is.inner;
        std::copy(src, src + run, out.data().data() + o * run);
      }
      node.value = std::move(out);
      break;
    }
    case OpKind::kSum:
      node.value = Tensor::scalar(x.sum());
      break;
    case OpKind::kMean:
      node.value = Tensor::scalar(x.sum() / static_cast<double>(x.size()));
      break;
    case OpKind::kAbs:
      node.value = map_unary(x, [](double v) { return std::abs(v); });
      break;
    case OpKind::kSquare:
      node.value = map_unary(x, [](double v) { return v * v; });
      break;
    case OpKind::kSqrt:
      for (double v : x.data()) {
        if (!(v >= 0.0)) throw DomainError("sqrt: negative input " + std::to_string(v));
      }
      node.value = map_unary(x, [](double v) { return std::sqrt(v); });
      break;
    case OpKind::kExp:
      node.value = map_unary(x, [](double v) { return std::exp(v); });
      break;
    case OpKind::kLog:
      for (double v : x.data()) {
        if (!(v > 0.0)) throw DomainError("log: non-positive input " + std::to_string(v));
      }
      node.value = map_unary(x, [](double v) { return std::log(v); });
      break;
    case OpKind::kTanh:
      node.value = map_unary(x, [](double v) { return std::tanh(v); });
      break;
    case OpKind::kLeakyRelu: {
      const double slope = attrs.scalar;
      node.value = map_unary(x, [slope](double v) { return v > 0.0 ? v : slope * v; });
      break;
    }
    case OpKind::kSigmoid:
      node.value = map_unary(x, sigmoid_value);
      break;
    case OpKind::kSoftplus:
      node.value = map_unary(x, softplus_value);
      break;
    case OpKind::kBroadcast: {
      if (!broadcastable(x.shape(), attrs.shape)) {
        shape_fail(kind, "cannot broadcast " + shape_str(x.shape()) + " to " + shape_str(attrs.shape));
      }
      Tensor out(attrs.shape);
      const std::size_t inner = x.size();
      auto o = out.data();
      const auto in = x.data();
      for (std::size_t i = 0; i < o.size(); ++i) o[i] = in[i % inner];
      node.value = std::move(out);
      break;
    }
    case OpKind::kLeaf:
    case OpKind::kConstant:
      break;
  }
  return push(std::move(node));
}

Tensor Gradients::of(NodeId id) const {
  if (reached(id)) return *grads_[id];
  if (!tape_ || id >= tape_->size()) throw Error("gradients: unknown node " + std::to_string(id));
  return Tensor::zeros_like(tape_->value(id));
}

Gradients backward(const Var& output) {
  if (!output.valid()) throw Error("backward: unbound output");
  const Tape& tape = *output.tape();
  if (output.value().size() != 1) {
    throw ShapeError("backward: output must be a scalar, got shape " + shape_str(output.shape()));
  }

  Gradients result;
  result.tape_ = &tape;
  auto& g = result.grads_;
  g.assign(output.id() + 1, std::nullopt);
  g[output.id()] = Tensor::ones(output.shape());

  auto accumulate = [&g, &tape](NodeId id, Tensor contrib) {
    if (!tape.node(id).requires_grad) return;
    if (g[id]) {
      add_into(*g[id], contrib);
    } else {
      g[id] = std::move(contrib);
    }
  };

  for (NodeId id = output.id() + 1; id-- > 0;) {
    if (!g[id]) continue;
    const auto& node = tape.node(id);
    if (!node.requires_grad) continue;
    const Tensor& grad = *g[id];
    const Tensor& y = node.value;
    auto in = [&](std::size_t k) -> const Tensor& { return tape.node(node.inputs[k]).value; };
    auto needs = [&](std::size_t k) { return tape.node(node.inputs[k]).requires_grad; };

    switch (node.kind) {
      case OpKind::kLeaf:
      case OpKind::kConstant:
        break;
      case OpKind::kAdd:
        if (needs(0)) accumulate(node.inputs[0], grad);
        if (needs(1)) accumulate(node.inputs[1], grad);
        break;
      case OpKind::kSub:
        if (needs(0)) accumulate(node.inputs[0], grad);
        if (needs(1)) accumulate(node.inputs[1], map_unary(grad, [](double v) { return -v; }));
        break;
      case OpKind::kMul:
        if (needs(0)) accumulate(node.inputs[0], map_binary(grad, in(1), [](double a, double b) { return a * b; }));
        if (needs(1)) accumulate(node.inputs[1], map_binary(grad, in(0), [](double a, double b) { return a * b; }));
        break;
      case OpKind::kScale: {
        const double c = node.attrs.scalar;
        accumulate(node.inputs[0], map_unary(grad, [c](double v) { return c * v; }));
        break;
      }
      case OpKind::kMatMul: {
        const Tensor& a = in(0);
        const Tensor& b = in(1);
        if (needs(0)) {
          Tensor ga(a.shape());
          as_matrix(ga).noalias() = as_matrix(grad) * as_matrix(b).transpose();
          accumulate(node.inputs[0], std::move(ga));
        }
        if (needs(1)) {
          Tensor gb(b.shape());
          as_matrix(gb).noalias() = as_matrix(a).transpose() * as_matrix(grad);
          accumulate(node.inputs[1], std::move(gb));
        }
        break;
      }
      case OpKind::kConcat: {
        const AxisSplit os = split_at(y.shape(), node.attrs.axis);
        std::size_t offset = 0;
        for (std::size_t k = 0; k < node.inputs.size(); ++k) {
          const Tensor& part = in(k);
          const AxisSplit ps = split_at(part.shape(), node.attrs.axis);
          if (needs(k)) {
            Tensor gp(part.shape());
            const std::size_t run = ps.extent * ps.inner;
            for (std::size_t o = 0; o < ps.outer; ++o) {
              const double* src = grad.data().data() + o * os.extent * os.inner + offset * os.inner;
              std::copy(src, src + run, gp.data().data() + o * run);
            }
            accumulate(node.inputs[k], std::move(gp));
          }
          offset += ps.extent;
        }
        break;
      }
      case OpKind::kSlice: {
        const Tensor& x = in(0);
        Tensor gx(x.shape());
        const AxisSplit is = split_at(x.shape(), node.attrs.axis);
        const std::size_t run = (node.attrs.end - node.attrs.begin) * is.inner;
        for (std::size_t o = 0; o < is.outer; ++o) {
          double* dst = gx.data().data() + o * is.extent * is.inner + node.attrs.begin * is.inner;
          const double* src = grad.data().data() + o * run;
          std::copy(src, src + run, dst);
        }
        accumulate(node.inputs[0], std::move(gx));
        break;
      }
      case OpKind::kSum:
        accumulate(node.inputs[0], Tensor::full(in(0).shape(), grad.item()));
        break;
      case OpKind::kMean:
        accumulate(node.inputs[0],
                   Tensor::full(in(0).shape(), grad.item() / static_cast<double>(in(0).size())));
        break;
      case OpKind::kAbs:
        accumulate(node.inputs[0], map_binary(grad, in(0), [](double gv, double x) {
                     return x > 0.0 ? gv : (x < 0.0 ? -gv : 0.0);
                   }));
        break;
      case OpKind::kSquare:
        accumulate(node.inputs[0],
                   map_binary(grad, in(0), [](double gv, double x) { return 2.0 * x * gv; }));
        break;
      case OpKind::kSqrt:
        accumulate(node.inputs[0], map_binary(grad, y, [](double gv, double r) { return gv / (2.0 * r); }));
        break;
      case OpKind::kExp:
        accumulate(node.inputs[0], map_binary(grad, y, [](double gv, double e) { return gv * e; }));
        break;
      case OpKind::kLog:
        accumulate(node.inputs[0], map_binary(grad, in(0), [](double gv, double x) { return gv / x; }));
        break;
      case OpKind::kTanh:
        accumulate(node.inputs[0],
                   map_binary(grad, y, [](double gv, double t) { return gv * (1.0 - t * t); }));
        break;
      case OpKind::kLeakyRelu: {
        const double slope = node.attrs.scalar;
        accumulate(node.inputs[0], map_binary(grad, in(0), [slope](double gv, double x) {
                     return x > 0.0 ? gv : slope * gv;
                   }));
        break;
      }
      case OpKind::kSigmoid:
        accumulate(node.inputs[0],
                   map_binary(grad, y, [](double gv, double s) { return gv * s * (1.0 - s); }));
        break;
      case OpKind::kSoftplus:
        accumulate(node.inputs[0],
                   map_binary(grad, in(0), [](double gv, double x) { return gv * sigmoid_value(x); }));
        break;
      case OpKind::kBroadcast: {
        const Tensor& x = in(0);
        Tensor gx(x.shape());
        const std::size_t inner = x.size();
        auto dst = gx.data();
        const auto src = grad.data();
        for (std::size_t i = 0; i < src.size(); ++i) dst[i % inner] += src[i];
        accumulate(node.inputs[0], std::move(gx));
        break;
      }
    }
  }
  return result;
}

namespace {

Var unary(OpKind kind, const Var& x, OpAttrs attrs = {}) {
  const Var in[] = {x};
  return x.tape()->apply(kind, in, attrs);
}

// Equalizes operand shapes with an explicit broadcast node where allowed.
Var binary(OpKind kind, Var a, Var b) {
  if (!a.valid() || !b.valid()) throw Error(std::string(op_name(kind)) + ": unbound input");
  if (a.shape() != b.shape()) {
    if (broadcastable(b.shape(), a.shape())) {
      b = broadcast_to(b, a.shape());
    } else if (broadcastable(a.shape(), b.shape())) {
      a = broadcast_to(a, b.shape());
    } else {
      throw ShapeError(std::string(op_name(kind)) + ": shapes " + shape_str(a.shape()) + " and " +
                       shape_str(b.shape()) + " are not broadcast-compatible");
    }
  }
  const Var in[] = {a, b};
  return a.tape()->apply(kind, in);
}

}  // namespace

Var add(const Var& a, const Var& b) { return binary(OpKind::kAdd, a, b); }
Var sub(const Var& a, const Var& b) { return binary(OpKind::kSub, a, b); }
Var mul(const Var& a, const Var& b) { return binary(OpKind::kMul, a, b); }

Var scale(const Var& x, double factor) {
  OpAttrs attrs;
  attrs.scalar = factor;
  return unary(OpKind::kScale, x, attrs);
}

Var add_scalar(const Var& x, double c) { return add(x, x.tape()->constant(Tensor::scalar(c))); }

Var matmul(const Var& a, const Var& b) {
  const Var in[] = {a, b};
  return a.tape()->apply(OpKind::kMatMul, in);
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  OpAttrs attrs;
  attrs.axis = axis;
  return parts[0].tape()->apply(OpKind::kConcat, parts, attrs);
}

Var slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t end) {
  OpAttrs attrs;
  attrs.axis = axis;
  attrs.begin = begin;
  attrs.end = end;
  return unary(OpKind::kSlice, x, attrs);
}

Var sum(const Var& x) { return unary(OpKind::kSum, x); }
Var mean(const Var& x) { return unary(OpKind::kMean, x); }
Var abs(const Var& x) { return unary(OpKind::kAbs, x); }
Var square(const Var& x) { return unary(OpKind::kSquare, x); }
Var sqrt(const Var& x) { return unary(OpKind::kSqrt, x); }
Var exp(const Var& x) { return unary(OpKind::kExp, x); }
Var log(const Var& x) { return unary(OpKind::kLog, x); }
Var tanh(const Var& x) { return unary(OpKind::kTanh, x); }

Var leaky_relu(const Var& x, double negative_slope) {
  OpAttrs attrs;
  attrs.scalar = negative_slope;
  return unary(OpKind::kLeakyRelu, x, attrs);
}

Var sigmoid(const Var& x) { return unary(OpKind::kSigmoid, x); }
Var softplus(const Var& x) { return unary(OpKind::kSoftplus, x); }

Var broadcast_to(const Var& x, Shape target) {
  OpAttrs attrs;
  attrs.shape = std::move(target);
  return unary(OpKind::kBroadcast, x, attrs);
}

}  // namespace trajdiff::ad
