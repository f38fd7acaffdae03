#pragma once

#include <span>
#include <vector>

#include "advobj/tensor.hpp"

namespace advobj {

// Primitive set for recorded computation graphs. Every op has an exact forward
// rule, a forward-mode tangent rule and a reverse-mode adjoint rule; smooth
// nonlinearities only, so derivatives exist everywhere they are evaluated.
enum class OpKind {
  kInput,
  kConst,
  kAdd,
  kSub,
  kNeg,
  kScale,    // x * c
  kOffset,   // x + c
  kHadamard,
  kMatMul,   // (m,k)x(k,n)->(m,n) or (m,k)x(k)->(m)
  kConv2d,   // (C,H,W) * (O,C,kh,kw) -> (O,H,W), stride 1, zero same-padding
  kTanh,
  kSoftplus,
  kSquare,
  kSqrt,
  kSum,      // full reduction to a scalar of shape (1)
  kReshape,
};

struct ConvSpec {
  int in_c = 0, out_c = 0, h = 0, w = 0, kh = 0, kw = 0;
};

struct Node {
  OpKind kind;
  int a = -1, b = -1;  // operand node ids (b unused for unary ops)
  double c = 0.0;      // scalar payload for kScale/kOffset
  Tensor value;        // payload for kConst
  Shape shape;         // output shape, fixed at build time
  ConvSpec conv;
};

// A recorded static graph with fixed input shapes. Nodes are stored in
// construction order, which is a topological order by construction.
class DifferentiableFn {
 public:
  int arity() const { return static_cast<int>(inputs_.size()); }
  const Shape& input_shape(int i) const;
  const Shape& output_shape() const;

  Tensor evaluate(std::span<const Tensor> xs) const;
  // Tangent of the output when input `wrt` moves along v and the others are held.
  Tensor jvp(std::span<const Tensor> xs, int wrt, const Tensor& v) const;
  // Cotangents of all inputs for output cotangent w.
  std::vector<Tensor> vjp_all(std::span<const Tensor> xs, const Tensor& w) const;
  Tensor vjp(std::span<const Tensor> xs, const Tensor& w, int wrt = 0) const;
  // Scalar-output gradient; defined as vjp with the unit scalar cotangent so the
  // two agree bit for bit.
  Tensor grad(std::span<const Tensor> xs, int wrt = 0) const;

  // Single-input conveniences.
  Tensor evaluate(const Tensor& x) const;
  Tensor jvp(const Tensor& x, const Tensor& v) const;
  Tensor vjp(const Tensor& x, const Tensor& w) const;
  Tensor grad(const Tensor& x) const;

 private:
  friend class FnBuilder;
  std::vector<Node> nodes_;
  std::vector<int> inputs_;  // node ids of kInput nodes, in declaration order
  int output_ = -1;

  std::vector<Tensor> forward(std::span<const Tensor> xs) const;
  void check_inputs(std::span<const Tensor> xs) const;
};

// Records a graph. Handles are plain indices; shape checking happens at record
// time so a malformed composition is rejected before any evaluation.
class FnBuilder {
 public:
  struct Expr {
    int id = -1;
  };

  Expr input(const Shape& s);
  Expr constant(Tensor t);
  Expr constant_scalar(double v) { return constant(Tensor::scalar(v)); }

  Expr add(Expr a, Expr b);
  Expr sub(Expr a, Expr b);
  Expr neg(Expr a);
  Expr scale(Expr a, double c);
  Expr offset(Expr a, double c);
  Expr hadamard(Expr a, Expr b);
  Expr matmul(Expr a, Expr b);
  Expr conv2d(Expr x, Expr kernel);
  Expr tanh(Expr a);
  Expr softplus(Expr a);
  Expr square(Expr a);
  Expr sqrt(Expr a);
  Expr sum(Expr a);
  Expr reshape(Expr a, const Shape& s);

  // Masked reduction: sum(x .* mask). Composition of primitives, kept here so
  // callers get consistent diagnostics.
  Expr masked_sum(Expr x, Expr mask) { return sum(hadamard(x, mask)); }

  // Inlines `g` with `args` substituted for its inputs; returns its output.
  Expr apply(const DifferentiableFn& g, std::span<const Expr> args);
  Expr apply(const DifferentiableFn& g, Expr arg);

  DifferentiableFn build(Expr output);

 private:
  std::vector<Node> nodes_;
  std::vector<int> inputs_;
  bool built_ = false;

  const Shape& shape_of(Expr e) const;
  Expr push(Node n);
  void check(Expr e) const;
};

}  // namespace advobj
