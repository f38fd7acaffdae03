#include "advobj/graph.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace advobj {
namespace {

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::kInput: return "input";
    case OpKind::kConst: return "const";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kNeg: return "neg";
    case OpKind::kScale: return "scale";
    case OpKind::kOffset: return "offset";
    case OpKind::kHadamard: return "hadamard";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSoftplus: return "softplus";
    case OpKind::kSquare: return "square";
    case OpKind::kSqrt: return "sqrt";
    case OpKind::kSum: return "sum";
    case OpKind::kReshape: return "reshape";
  }
  return "?";
}

[[noreturn]] void fail(OpKind k, const std::string& msg) {
  throw std::invalid_argument(std::string(op_name(k)) + ": " + msg);
}

double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }
double softplus_val(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// out(m,n) = A(m,k) * B(k,n); B may be rank-1 of length k, giving rank-1 out.
Tensor matmul_eval(const Tensor& a, const Tensor& b) {
  int m = a.shape[0], k = a.shape[1];
  int n = b.shape.size() == 2 ? b.shape[1] : 1;
  Tensor out = Tensor::zeros(b.shape.size() == 2 ? Shape{m, n} : Shape{m});
  for (int i = 0; i < m; ++i)
    for (int l = 0; l < k; ++l) {
      double av = a.data[static_cast<size_t>(i) * k + l];
      for (int j = 0; j < n; ++j)
        out.data[static_cast<size_t>(i) * n + j] += av * b.data[static_cast<size_t>(l) * n + j];
    }
  return out;
}

// dA(m,k) += W(m,n) * B(k,n)^T
void matmul_acc_da(Tensor& da, const Tensor& w, const Tensor& b) {
  int m = da.shape[0], k = da.shape[1];
  int n = b.shape.size() == 2 ? b.shape[1] : 1;
  for (int i = 0; i < m; ++i)
    for (int l = 0; l < k; ++l) {
      double s = 0;
      for (int j = 0; j < n; ++j)
        s += w.data[static_cast<size_t>(i) * n + j] * b.data[static_cast<size_t>(l) * n + j];
      da.data[static_cast<size_t>(i) * k + l] += s;
    }
}

// dB(k,n) += A(m,k)^T * W(m,n)
void matmul_acc_db(Tensor& db, const Tensor& a, const Tensor& w) {
  int m = a.shape[0], k = a.shape[1];
  int n = db.shape.size() == 2 ? db.shape[1] : 1;
  for (int l = 0; l < k; ++l)
    for (int j = 0; j < n; ++j) {
      double s = 0;
      for (int i = 0; i < m; ++i)
        s += a.data[static_cast<size_t>(i) * k + l] * w.data[static_cast<size_t>(i) * n + j];
      db.data[static_cast<size_t>(l) * n + j] += s;
    }
}

enum class ConvTask { kForward, kAccInput, kAccKernel };

// One loop nest serves forward, input-adjoint and kernel-adjoint so all three
// traverse entries in the same deterministic order.
void conv2d_run(const ConvSpec& c, ConvTask task, const Tensor* x, const Tensor* k,
                const Tensor* w, Tensor* out) {
  int ph = c.kh / 2, pw = c.kw / 2;
  auto xi = [&](int ic, int y, int xx) { return (static_cast<size_t>(ic) * c.h + y) * c.w + xx; };
  auto oi = [&](int oc, int y, int xx) { return (static_cast<size_t>(oc) * c.h + y) * c.w + xx; };
  auto ki = [&](int oc, int ic, int dy, int dx) {
    return ((static_cast<size_t>(oc) * c.in_c + ic) * c.kh + dy) * c.kw + dx;
  };
  for (int oc = 0; oc < c.out_c; ++oc)
    for (int y = 0; y < c.h; ++y)
      for (int xx = 0; xx < c.w; ++xx)
        for (int ic = 0; ic < c.in_c; ++ic)
          for (int dy = 0; dy < c.kh; ++dy)
            for (int dx = 0; dx < c.kw; ++dx) {
              int u = y + dy - ph, v = xx + dx - pw;
              if (u < 0 || u >= c.h || v < 0 || v >= c.w) continue;
              switch (task) {
                case ConvTask::kForward:
                  out->data[oi(oc, y, xx)] += x->data[xi(ic, u, v)] * k->data[ki(oc, ic, dy, dx)];
                  break;
                case ConvTask::kAccInput:
                  out->data[xi(ic, u, v)] += w->data[oi(oc, y, xx)] * k->data[ki(oc, ic, dy, dx)];
                  break;
                case ConvTask::kAccKernel:
                  out->data[ki(oc, ic, dy, dx)] += w->data[oi(oc, y, xx)] * x->data[xi(ic, u, v)];
                  break;
              }
            }
}

Tensor conv2d_eval(const ConvSpec& c, const Tensor& x, const Tensor& k) {
  Tensor out = Tensor::zeros({c.out_c, c.h, c.w});
  conv2d_run(c, ConvTask::kForward, &x, &k, nullptr, &out);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// FnBuilder

const Shape& FnBuilder::shape_of(Expr e) const { return nodes_[static_cast<size_t>(e.id)].shape; }

void FnBuilder::check(Expr e) const {
  if (e.id < 0 || e.id >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("graph: expression handle out of range");
}

FnBuilder::Expr FnBuilder::push(Node n) {
  nodes_.push_back(std::move(n));
  return Expr{static_cast<int>(nodes_.size()) - 1};
}

FnBuilder::Expr FnBuilder::input(const Shape& s) {
  shape_numel(s);  // validates positivity
  Node n;
  n.kind = OpKind::kInput;
  n.shape = s;
  Expr e = push(std::move(n));
  inputs_.push_back(e.id);
  return e;
}

FnBuilder::Expr FnBuilder::constant(Tensor t) {
  Node n;
  n.kind = OpKind::kConst;
  n.shape = t.shape;
  n.value = std::move(t);
  return push(std::move(n));
}

FnBuilder::Expr FnBuilder::add(Expr a, Expr b) {
  check(a);
  check(b);
  if (shape_of(a) != shape_of(b))
    fail(OpKind::kAdd, "shape mismatch " + shape_str(shape_of(a)) + " vs " + shape_str(shape_of(b)));
  Node n;
  n.kind = OpKind::kAdd;
  n.a = a.id;
  n.b = b.id;
  n.shape = shape_of(a);
  return push(std::move(n));
}

FnBuilder::Expr FnBuilder::sub(Expr a, Expr b) {
  check(a);
  check(b);
  if (shape_of(a) != shape_of(b))
    fail(OpKind::kSub, "shape mismatch " + shape_str(shape_of(a)) + " vs " + shape_str(shape_of(b)));
  Node n;
  n.kind = OpKind::kSub;
  n.a = a.id;
  n.b = b.id;
  n.shape = shape_of(a);
  return push(std::move(n));
}

FnBuilder::Expr FnBuilder::neg(Expr a) {
  check(a);
  Node n;
  n.kind = OpKind::kNeg;
  n.a = a.id;
  n.shape = shape_of(a);
  return push(std::move(n));
}

FnBuilder::Expr FnBuilder::scale(Expr a, double c) {
  check(a);
  Node n;
  n.kind = OpKind::kScale;
  n.a = a.id;
  n.c = c;
  n.shape = shape_of(a);
  return push(std::move(n));
}

FnBuilder::Expr FnBuilder::offset(Expr a, double c) {
  check(a);
  Node n;
  n.kind = OpKind::kOffset;
  n.a = a.id;
  n.c = c;
  n.shape = shape_of(a);
  return push(std::move(n));
}

FnBuilder::Expr FnBuilder::hadamard(Expr a, Expr b) {
  check(a);
  check(b);
  if (shape_of(a) != shape_of(b))
    fail(OpKind::kHadamard,
         "shape mismatch " + shape_str(shape_of(a)) + " vs " + shape_str(shape_of(b)));
  Node n;
  n.kind = OpKind::kHadamard;
  n.a = a.id;
  n.b = b.id;
  n.shape = shape_of(a);
  return push(std::move(n));
}

FnBuilder::Expr FnBuilder::matmul(Expr a, Expr b) {
  check(a);
  check(b);
  const Shape& sa = shape_of(a);
  const Shape& sb = shape_of(b);
  if (sa.size() != 2) fail(OpKind::kMatMul, "left operand must be rank 2, got " + shape_str(sa));
  if (sb.size() != 1 && sb.size() != 2)
    fail(OpKind::kMatMul, "right operand must be rank 1 or 2, got " + shape_str(sb));
  if (sa[1] != sb[0])
    fail(OpKind::kMatMul, "inner dimensions " + std::to_string(sa[1]) + " vs " + std::to_string(sb[0]));
  Node n;
  n.kind = OpKind::kMatMul;
  n.a = a.id;
  n.b = b.id;
  n.shape = sb.size() == 2 ? Shape{sa[0], sb[1]} : Shape{sa[0]};
  return push(std::move(n));
}

FnBuilder::Expr FnBuilder::conv2d(Expr x, Expr kernel) {
  check(x);
  check(kernel);
  const Shape& sx = shape_of(x);
  const Shape& sk = shape_of(kernel);
  if (sx.size() != 3) fail(OpKind::kConv2d, "image must be rank 3 (C,H,W), got " + shape_str(sx));
  if (sk.size() != 4)
    fail(OpKind::kConv2d, "kernel must be rank 4 (O,C,kh,kw), got " + shape_str(sk));
  if (sk[1] != sx[0])
    fail(OpKind::kConv2d,
         "kernel channels " + std::to_string(sk[1]) + " vs image channels " + std::to_string(sx[0]));
  if (sk[2] % 2 == 0 || sk[3] % 2 == 0)
    fail(OpKind::kConv2d, "kernel sides must be odd for same padding, got " + shape_str(sk));
  Node n;
  n.kind = OpKind::kConv2d;
  n.a = x.id;
  n.b = kernel.id;
  n.conv = ConvSpec{sx[0], sk[0], sx[1], sx[2], sk[2], sk[3]};
  n.shape = Shape{sk[0], sx[1], sx[2]};
  return push(std::move(n));
}

FnBuilder::Expr FnBuilder::tanh(Expr a) {
  check(a);
  Node n;
  n.kind = OpKind::kTanh;
  n.a = a.id;
  n.shape = shape_of(a);
  return push(std::move(n));
}

FnBuilder::Expr FnBuilder::softplus(Expr a) {
  check(a);
  Node n;
  n.kind = OpKind::kSoftplus;
  n.a = a.id;
  n.shape = shape_of(a);
  return push(std::move(n));
}

FnBuilder::Expr FnBuilder::square(Expr a) {
  check(a);
  Node n;
  n.kind = OpKind::kSquare;
  n.a = a.id;
  n.shape = shape_of(a);
  return push(std::move(n));
}

FnBuilder::Expr FnBuilder::sqrt(Expr a) {
  check(a);
  Node n;
  n.kind = OpKind::kSqrt;
  n.a = a.id;
  n.shape = shape_of(a);
  return push(std::move(n));
}

FnBuilder::Expr FnBuilder::sum(Expr a) {
  check(a);
  Node n;
  n.kind = OpKind::kSum;
  n.a = a.id;
  n.shape = Shape{1};
  return push(std::move(n));
}

FnBuilder::Expr FnBuilder::reshape(Expr a, const Shape& s) {
  check(a);
  if (shape_numel(s) != shape_numel(shape_of(a)))
    fail(OpKind::kReshape,
         "element count mismatch " + shape_str(shape_of(a)) + " -> " + shape_str(s));
  Node n;
  n.kind = OpKind::kReshape;
  n.a = a.id;
  n.shape = s;
  return push(std::move(n));
}

FnBuilder::Expr FnBuilder::apply(const DifferentiableFn& g, std::span<const Expr> args) {
  if (static_cast<int>(args.size()) != g.arity())
    throw std::invalid_argument("apply: expected " + std::to_string(g.arity()) + " arguments, got " +
                                std::to_string(args.size()));
  for (int i = 0; i < g.arity(); ++i) {
    check(args[static_cast<size_t>(i)]);
    if (shape_of(args[static_cast<size_t>(i)]) != g.input_shape(i))
      throw std::invalid_argument("apply: argument " + std::to_string(i) + " has shape " +
                                  shape_str(shape_of(args[static_cast<size_t>(i)])) + ", expected " +
                                  shape_str(g.input_shape(i)));
  }
  // Inline g's nodes, remapping ids; its inputs alias the provided expressions.
  std::vector<int> remap(g.nodes_.size(), -1);
  for (size_t i = 0; i < g.nodes_.size(); ++i) {
    const Node& n = g.nodes_[i];
    if (n.kind == OpKind::kInput) {
      for (size_t j = 0; j < g.inputs_.size(); ++j)
        if (g.inputs_[j] == static_cast<int>(i)) remap[i] = args[j].id;
      continue;
    }
    Node copy = n;
    if (copy.a >= 0) copy.a = remap[static_cast<size_t>(copy.a)];
    if (copy.b >= 0) copy.b = remap[static_cast<size_t>(copy.b)];
    remap[i] = push(std::move(copy)).id;
  }
  return Expr{remap[static_cast<size_t>(g.output_)]};
}

FnBuilder::Expr FnBuilder::apply(const DifferentiableFn& g, Expr arg) {
  Expr args[1] = {arg};
  return apply(g, std::span<const Expr>(args, 1));
}

DifferentiableFn FnBuilder::build(Expr output) {
  check(output);
  if (built_) throw std::logic_error("build: builder already consumed");
  built_ = true;
  DifferentiableFn f;
  f.nodes_ = std::move(nodes_);
  f.inputs_ = std::move(inputs_);
  f.output_ = output.id;
  return f;
}

// ---------------------------------------------------------------------------
// DifferentiableFn

const Shape& DifferentiableFn::input_shape(int i) const {
  return nodes_[static_cast<size_t>(inputs_.at(static_cast<size_t>(i)))].shape;
}

const Shape& DifferentiableFn::output_shape() const {
  return nodes_[static_cast<size_t>(output_)].shape;
}

void DifferentiableFn::check_inputs(std::span<const Tensor> xs) const {
  if (static_cast<int>(xs.size()) != arity())
    throw std::invalid_argument("evaluate: expected " + std::to_string(arity()) +
                                " inputs, got " + std::to_string(xs.size()));
  for (int i = 0; i < arity(); ++i)
    if (xs[static_cast<size_t>(i)].shape != input_shape(i))
      throw std::invalid_argument("input: argument " + std::to_string(i) + " has shape " +
                                  shape_str(xs[static_cast<size_t>(i)].shape) + ", expected " +
                                  shape_str(input_shape(i)));
}

std::vector<Tensor> DifferentiableFn::forward(std::span<const Tensor> xs) const {
  check_inputs(xs);
  std::vector<Tensor> val(nodes_.size());
  int next_input = 0;
  for (size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    switch (n.kind) {
      case OpKind::kInput:
        val[i] = xs[static_cast<size_t>(next_input++)];
        break;
      case OpKind::kConst:
        val[i] = n.value;
        break;
      case OpKind::kAdd:
        val[i] = add(val[static_cast<size_t>(n.a)], val[static_cast<size_t>(n.b)]);
        break;
      case OpKind::kSub:
        val[i] = sub(val[static_cast<size_t>(n.a)], val[static_cast<size_t>(n.b)]);
        break;
      case OpKind::kNeg:
        val[i] = scale(val[static_cast<size_t>(n.a)], -1.0);
        break;
      case OpKind::kScale:
        val[i] = scale(val[static_cast<size_t>(n.a)], n.c);
        break;
      case OpKind::kOffset: {
        val[i] = val[static_cast<size_t>(n.a)];
        for (double& v : val[i].data) v += n.c;
        break;
      }
      case OpKind::kHadamard:
        val[i] = hadamard(val[static_cast<size_t>(n.a)], val[static_cast<size_t>(n.b)]);
        break;
      case OpKind::kMatMul:
        val[i] = matmul_eval(val[static_cast<size_t>(n.a)], val[static_cast<size_t>(n.b)]);
        break;
      case OpKind::kConv2d:
        val[i] = conv2d_eval(n.conv, val[static_cast<size_t>(n.a)], val[static_cast<size_t>(n.b)]);
        break;
      case OpKind::kTanh: {
        val[i] = val[static_cast<size_t>(n.a)];
        for (double& v : val[i].data) v = std::tanh(v);
        break;
      }
      case OpKind::kSoftplus: {
        val[i] = val[static_cast<size_t>(n.a)];
        for (double& v : val[i].data) v = softplus_val(v);
        break;
      }
      case OpKind::kSquare: {
        val[i] = val[static_cast<size_t>(n.a)];
        for (double& v : val[i].data) v = v * v;
        break;
      }
      case OpKind::kSqrt: {
        val[i] = val[static_cast<size_t>(n.a)];
        for (double& v : val[i].data) {
          if (v < 0) throw std::domain_error("sqrt: negative operand");
          v = std::sqrt(v);
        }
        break;
      }
      case OpKind::kSum:
        val[i] = Tensor::scalar(sum(val[static_cast<size_t>(n.a)]));
        break;
      case OpKind::kReshape:
        val[i] = val[static_cast<size_t>(n.a)].reshaped(n.shape);
        break;
    }
  }
  return val;
}

Tensor DifferentiableFn::evaluate(std::span<const Tensor> xs) const {
  return forward(xs)[static_cast<size_t>(output_)];
}

Tensor DifferentiableFn::jvp(std::span<const Tensor> xs, int wrt, const Tensor& v) const {
  if (wrt < 0 || wrt >= arity()) throw std::invalid_argument("jvp: wrt index out of range");
  if (v.shape != input_shape(wrt))
    throw std::invalid_argument("jvp: tangent shape " + shape_str(v.shape) + ", expected " +
                                shape_str(input_shape(wrt)));
  std::vector<Tensor> val = forward(xs);
  std::vector<Tensor> tan(nodes_.size());
  int next_input = 0;
  for (size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    switch (n.kind) {
      case OpKind::kInput: {
        int idx = next_input++;
        tan[i] = idx == wrt ? v : Tensor::zeros(n.shape);
        break;
      }
      case OpKind::kConst:
        tan[i] = Tensor::zeros(n.shape);
        break;
      case OpKind::kAdd:
        tan[i] = add(tan[static_cast<size_t>(n.a)], tan[static_cast<size_t>(n.b)]);
        break;
      case OpKind::kSub:
        tan[i] = sub(tan[static_cast<size_t>(n.a)], tan[static_cast<size_t>(n.b)]);
        break;
      case OpKind::kNeg:
        tan[i] = scale(tan[static_cast<size_t>(n.a)], -1.0);
        break;
      case OpKind::kScale:
        tan[i] = scale(tan[static_cast<size_t>(n.a)], n.c);
        break;
      case OpKind::kOffset:
        tan[i] = tan[static_cast<size_t>(n.a)];
        break;
      case OpKind::kHadamard:
        tan[i] = add(hadamard(tan[static_cast<size_t>(n.a)], val[static_cast<size_t>(n.b)]),
                     hadamard(val[static_cast<size_t>(n.a)], tan[static_cast<size_t>(n.b)]));
        break;
      case OpKind::kMatMul:
        tan[i] = add(matmul_eval(tan[static_cast<size_t>(n.a)], val[static_cast<size_t>(n.b)]),
                     matmul_eval(val[static_cast<size_t>(n.a)], tan[static_cast<size_t>(n.b)]));
        break;
      case OpKind::kConv2d:
        tan[i] =
            add(conv2d_eval(n.conv, tan[static_cast<size_t>(n.a)], val[static_cast<size_t>(n.b)]),
                conv2d_eval(n.conv, val[static_cast<size_t>(n.a)], tan[static_cast<size_t>(n.b)]));
        break;
      case OpKind::kTanh: {
        tan[i] = tan[static_cast<size_t>(n.a)];
        const Tensor& y = val[i];
        for (size_t j = 0; j < tan[i].data.size(); ++j)
          tan[i].data[j] *= 1.0 - y.data[j] * y.data[j];
        break;
      }
      case OpKind::kSoftplus: {
        tan[i] = tan[static_cast<size_t>(n.a)];
        const Tensor& x = val[static_cast<size_t>(n.a)];
        for (size_t j = 0; j < tan[i].data.size(); ++j) tan[i].data[j] *= sigmoid(x.data[j]);
        break;
      }
      case OpKind::kSquare: {
        tan[i] = tan[static_cast<size_t>(n.a)];
        const Tensor& x = val[static_cast<size_t>(n.a)];
        for (size_t j = 0; j < tan[i].data.size(); ++j) tan[i].data[j] *= 2.0 * x.data[j];
        break;
      }
      case OpKind::kSqrt: {
        tan[i] = tan[static_cast<size_t>(n.a)];
        const Tensor& y = val[i];
        for (size_t j = 0; j < tan[i].data.size(); ++j) tan[i].data[j] /= 2.0 * y.data[j];
        break;
      }
      case OpKind::kSum:
        tan[i] = Tensor::scalar(sum(tan[static_cast<size_t>(n.a)]));
        break;
      case OpKind::kReshape:
        tan[i] = tan[static_cast<size_t>(n.a)].reshaped(n.shape);
        break;
    }
  }
  return tan[static_cast<size_t>(output_)];
}

std::vector<Tensor> DifferentiableFn::vjp_all(std::span<const Tensor> xs, const Tensor& w) const {
  if (w.shape != output_shape())
    throw std::invalid_argument("vjp: cotangent shape " + shape_str(w.shape) + ", expected " +
                                shape_str(output_shape()));
  std::vector<Tensor> val = forward(xs);
  std::vector<Tensor> cot(nodes_.size());
  for (size_t i = 0; i < nodes_.size(); ++i) cot[i] = Tensor::zeros(nodes_[i].shape);
  cot[static_cast<size_t>(output_)] = w;
  for (size_t ii = nodes_.size(); ii-- > 0;) {
    const Node& n = nodes_[ii];
    const Tensor& g = cot[ii];
    switch (n.kind) {
      case OpKind::kInput:
      case OpKind::kConst:
        break;
      case OpKind::kAdd:
        axpy(cot[static_cast<size_t>(n.a)], 1.0, g);
        axpy(cot[static_cast<size_t>(n.b)], 1.0, g);
        break;
      case OpKind::kSub:
        axpy(cot[static_cast<size_t>(n.a)], 1.0, g);
        axpy(cot[static_cast<size_t>(n.b)], -1.0, g);
        break;
      case OpKind::kNeg:
        axpy(cot[static_cast<size_t>(n.a)], -1.0, g);
        break;
      case OpKind::kScale:
        axpy(cot[static_cast<size_t>(n.a)], n.c, g);
        break;
      case OpKind::kOffset:
        axpy(cot[static_cast<size_t>(n.a)], 1.0, g);
        break;
      case OpKind::kHadamard: {
        Tensor ga = hadamard(g, val[static_cast<size_t>(n.b)]);
        Tensor gb = hadamard(g, val[static_cast<size_t>(n.a)]);
        axpy(cot[static_cast<size_t>(n.a)], 1.0, ga);
        axpy(cot[static_cast<size_t>(n.b)], 1.0, gb);
        break;
      }
      case OpKind::kMatMul:
        matmul_acc_da(cot[static_cast<size_t>(n.a)], g, val[static_cast<size_t>(n.b)]);
        matmul_acc_db(cot[static_cast<size_t>(n.b)], val[static_cast<size_t>(n.a)], g);
        break;
      case OpKind::kConv2d:
        conv2d_run(n.conv, ConvTask::kAccInput, nullptr, &val[static_cast<size_t>(n.b)], &g,
                   &cot[static_cast<size_t>(n.a)]);
        conv2d_run(n.conv, ConvTask::kAccKernel, &val[static_cast<size_t>(n.a)], nullptr, &g,
                   &cot[static_cast<size_t>(n.b)]);
        break;
      case OpKind::kTanh: {
        const Tensor& y = val[ii];
        Tensor& ca = cot[static_cast<size_t>(n.a)];
        for (size_t j = 0; j < ca.data.size(); ++j)
          ca.data[j] += g.data[j] * (1.0 - y.data[j] * y.data[j]);
        break;
      }
      case OpKind::kSoftplus: {
        const Tensor& x = val[static_cast<size_t>(n.a)];
        Tensor& ca = cot[static_cast<size_t>(n.a)];
        for (size_t j = 0; j < ca.data.size(); ++j) ca.data[j] += g.data[j] * sigmoid(x.data[j]);
        break;
      }
      case OpKind::kSquare: {
        const Tensor& x = val[static_cast<size_t>(n.a)];
        Tensor& ca = cot[static_cast<size_t>(n.a)];
        for (size_t j = 0; j < ca.data.size(); ++j) ca.data[j] += g.data[j] * 2.0 * x.data[j];
        break;
      }
      case OpKind::kSqrt: {
        const Tensor& y = val[ii];
        Tensor& ca = cot[static_cast<size_t>(n.a)];
        for (size_t j = 0; j < ca.data.size(); ++j) ca.data[j] += g.data[j] / (2.0 * y.data[j]);
        break;
      }
      case OpKind::kSum: {
        Tensor& ca = cot[static_cast<size_t>(n.a)];
        for (double& v : ca.data) v += g.data[0];
        break;
      }
      case OpKind::kReshape:
        axpy(cot[static_cast<size_t>(n.a)], 1.0, g.reshaped(nodes_[static_cast<size_t>(n.a)].shape));
        break;
    }
  }
  std::vector<Tensor> out;
  out.reserve(inputs_.size());
  for (int id : inputs_) out.push_back(std::move(cot[static_cast<size_t>(id)]));
  return out;
}

Tensor DifferentiableFn::vjp(std::span<const Tensor> xs, const Tensor& w, int wrt) const {
  if (wrt < 0 || wrt >= arity()) throw std::invalid_argument("vjp: wrt index out of range");
  return vjp_all(xs, w)[static_cast<size_t>(wrt)];
}

Tensor DifferentiableFn::grad(std::span<const Tensor> xs, int wrt) const {
  if (output_shape() != Shape{1})
    throw std::invalid_argument("grad: output must be scalar, got " + shape_str(output_shape()));
  return vjp(xs, Tensor::scalar(1.0), wrt);
}

Tensor DifferentiableFn::evaluate(const Tensor& x) const {
  return evaluate(std::span<const Tensor>(&x, 1));
}
Tensor DifferentiableFn::jvp(const Tensor& x, const Tensor& v) const {
  return jvp(std::span<const Tensor>(&x, 1), 0, v);
}
Tensor DifferentiableFn::vjp(const Tensor& x, const Tensor& w) const {
  return vjp(std::span<const Tensor>(&x, 1), w, 0);
}
Tensor DifferentiableFn::grad(const Tensor& x) const {
  return grad(std::span<const Tensor>(&x, 1), 0);
}

}  // namespace advobj
