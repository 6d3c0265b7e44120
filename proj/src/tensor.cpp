#include "duodiff/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "tensor_impl.hpp"

namespace duodiff {

using detail::make_node;
using detail::shape_error;

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kMatmul: return "matmul";
    case Op::kConv2d: return "conv2d";
    case Op::kUpsample2x: return "upsample2x";
    case Op::kAvgPool2x: return "avgpool2x";
    case Op::kGroupNorm: return "groupnorm";
    case Op::kSiLU: return "silu";
    case Op::kSigmoid: return "sigmoid";
    case Op::kLog: return "log";
    case Op::kAbs: return "abs";
    case Op::kSoftmax: return "softmax";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kReshape: return "reshape";
    case Op::kConcat: return "concat";
    case Op::kSlice: return "slice";
    case Op::kScale: return "scale";
  }
  return "?";
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }

template <typename S>
Tensor<S> Tensor<S>::constant(Shape shape, std::vector<S> data) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size()))
    shape_error("tensor: data length " + std::to_string(data.size()) +
                " does not match shape " + shape_str(shape));
  auto n = make_node<S>(Op::kLeaf, std::move(shape), std::move(data), {});
  return Tensor<S>(n);
}

template <typename S>
Tensor<S> Tensor<S>::zeros(Shape shape) {
  return constant(shape, std::vector<S>(shape_numel(shape), S(0)));
}

template <typename S>
Tensor<S> Tensor<S>::full(Shape shape, S v) {
  return constant(shape, std::vector<S>(shape_numel(shape), v));
}

template <typename S>
Tensor<S> Tensor<S>::parameter(Shape shape, std::vector<S> data) {
  Tensor<S> t = constant(std::move(shape), std::move(data));
  t.node()->requires_grad = true;
  return t;
}

template <typename S>
S Tensor<S>::item() const {
  if (numel() != 1)
    shape_error("item: tensor has shape " + shape_str(shape()));
  return n_->value[0];
}

// ---- elementwise binary ----

enum class Bcast { kSame, kScalar, kChanBias, kSampleChanBias, kRowBias };

template <typename S>
static Bcast add_mode(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() == b.shape()) return Bcast::kSame;
  if (b.numel() == 1) return Bcast::kScalar;
  if (a.ndim() == 4 && b.ndim() == 1 && b.dim(0) == a.dim(1))
    return Bcast::kChanBias;
  if (a.ndim() == 4 && b.ndim() == 2 && b.dim(0) == a.dim(0) &&
      b.dim(1) == a.dim(1))
    return Bcast::kSampleChanBias;
  if (a.ndim() == 2 && b.ndim() == 1 && b.dim(0) == a.dim(1))
    return Bcast::kRowBias;
  shape_error("add: cannot broadcast " + shape_str(b.shape()) + " onto " +
              shape_str(a.shape()));
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  const Bcast mode = add_mode(a, b);
  std::vector<S> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  switch (mode) {
    case Bcast::kSame:
      for (size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
      break;
    case Bcast::kScalar:
      for (auto& v : out) v += bd[0];
      break;
    case Bcast::kChanBias: {
      const int64_t C = a.dim(1), hw = a.dim(2) * a.dim(3);
      for (int64_t n = 0; n < a.dim(0); ++n)
        for (int64_t c = 0; c < C; ++c) {
          S* p = out.data() + (n * C + c) * hw;
          for (int64_t i = 0; i < hw; ++i) p[i] += bd[c];
        }
      break;
    }
    case Bcast::kSampleChanBias: {
      const int64_t C = a.dim(1), hw = a.dim(2) * a.dim(3);
      for (int64_t n = 0; n < a.dim(0); ++n)
        for (int64_t c = 0; c < C; ++c) {
          S* p = out.data() + (n * C + c) * hw;
          const S bv = bd[n * C + c];
          for (int64_t i = 0; i < hw; ++i) p[i] += bv;
        }
      break;
    }
    case Bcast::kRowBias: {
      const int64_t C = a.dim(1);
      for (int64_t n = 0; n < a.dim(0); ++n)
        for (int64_t c = 0; c < C; ++c) out[n * C + c] += bd[c];
      break;
    }
  }
  auto n = make_node<S>(Op::kAdd, a.shape(), std::move(out), {a.node(), b.node()});
  n->i0 = static_cast<int64_t>(mode);
  return Tensor<S>(n);
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape() && b.numel() != 1)
    shape_error("sub: shape mismatch " + shape_str(a.shape()) + " vs " +
                shape_str(b.shape()));
  std::vector<S> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  if (b.numel() == 1)
    for (auto& v : out) v -= bd[0];
  else
    for (size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
  auto n = make_node<S>(Op::kSub, a.shape(), std::move(out), {a.node(), b.node()});
  return Tensor<S>(n);
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape() && b.numel() != 1)
    shape_error("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                shape_str(b.shape()));
  std::vector<S> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  if (b.numel() == 1)
    for (auto& v : out) v *= bd[0];
  else
    for (size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
  auto n = make_node<S>(Op::kMul, a.shape(), std::move(out), {a.node(), b.node()});
  return Tensor<S>(n);
}

// ---- elementwise unary ----

template <typename S>
Tensor<S> silu(const Tensor<S>& x) {
  std::vector<S> out(x.numel());
  const auto xd = x.data();
  for (int64_t i = 0; i < x.numel(); ++i) {
    const S s = S(1) / (S(1) + std::exp(-xd[i]));
    out[i] = xd[i] * s;
  }
  return Tensor<S>(make_node<S>(Op::kSiLU, x.shape(), std::move(out), {x.node()}));
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  std::vector<S> out(x.numel());
  const auto xd = x.data();
  for (int64_t i = 0; i < x.numel(); ++i)
    out[i] = S(1) / (S(1) + std::exp(-xd[i]));
  return Tensor<S>(make_node<S>(Op::kSigmoid, x.shape(), std::move(out), {x.node()}));
}

template <typename S>
Tensor<S> log(const Tensor<S>& x) {
  std::vector<S> out(x.numel());
  const auto xd = x.data();
  for (int64_t i = 0; i < x.numel(); ++i) {
    if (!(xd[i] > S(0)))
      throw std::runtime_error("log: non-positive input");
    out[i] = std::log(xd[i]);
  }
  return Tensor<S>(make_node<S>(Op::kLog, x.shape(), std::move(out), {x.node()}));
}

template <typename S>
Tensor<S> abs(const Tensor<S>& x) {
  std::vector<S> out(x.numel());
  const auto xd = x.data();
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = std::fabs(xd[i]);
  return Tensor<S>(make_node<S>(Op::kAbs, x.shape(), std::move(out), {x.node()}));
}

template <typename S>
Tensor<S> scale(const Tensor<S>& x, S c) {
  std::vector<S> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= c;
  auto n = make_node<S>(Op::kScale, x.shape(), std::move(out), {x.node()});
  n->f0 = static_cast<double>(c);
  return Tensor<S>(n);
}

// ---- reductions ----

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
  S acc = 0;
  for (const S v : x.data()) acc += v;
  return Tensor<S>(make_node<S>(Op::kSum, {1}, {acc}, {x.node()}));
}

template <typename S>
Tensor<S> mean(const Tensor<S>& x) {
  S acc = 0;
  for (const S v : x.data()) acc += v;
  acc /= static_cast<S>(x.numel());
  return Tensor<S>(make_node<S>(Op::kMean, {1}, {acc}, {x.node()}));
}

// ---- shape ops ----

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    shape_error("reshape: cannot view " + shape_str(x.shape()) + " as " +
                shape_str(shape));
  std::vector<S> out(x.data().begin(), x.data().end());
  return Tensor<S>(make_node<S>(Op::kReshape, std::move(shape), std::move(out),
                                {x.node()}));
}

template <typename S>
Tensor<S> concat(const Tensor<S>& a, const Tensor<S>& b, int axis) {
  if (a.ndim() != b.ndim() || axis < 0 || axis >= a.ndim())
    shape_error("concat: rank mismatch " + shape_str(a.shape()) + " vs " +
                shape_str(b.shape()));
  for (int i = 0; i < a.ndim(); ++i)
    if (i != axis && a.dim(i) != b.dim(i))
      shape_error("concat: dim " + std::to_string(i) + " differs: " +
                  shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Shape os = a.shape();
  os[axis] += b.dim(axis);
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= a.dim(i);
  for (int i = axis + 1; i < a.ndim(); ++i) inner *= a.dim(i);
  const int64_t wa = a.dim(axis) * inner, wb = b.dim(axis) * inner;
  std::vector<S> out(shape_numel(os));
  const auto ad = a.data(), bd = b.data();
  for (int64_t o = 0; o < outer; ++o) {
    std::copy_n(ad.data() + o * wa, wa, out.data() + o * (wa + wb));
    std::copy_n(bd.data() + o * wb, wb, out.data() + o * (wa + wb) + wa);
  }
  auto n = make_node<S>(Op::kConcat, std::move(os), std::move(out),
                        {a.node(), b.node()});
  n->i0 = axis;
  return Tensor<S>(n);
}

template <typename S>
Tensor<S> concat_all(const std::vector<Tensor<S>>& xs, int axis) {
  if (xs.empty()) shape_error("concat: empty input list");
  Tensor<S> acc = xs[0];
  for (size_t i = 1; i < xs.size(); ++i) acc = concat(acc, xs[i], axis);
  return acc;
}

template <typename S>
Tensor<S> slice(const Tensor<S>& x, int axis, int64_t start, int64_t len) {
  if (axis < 0 || axis >= x.ndim() || start < 0 || len <= 0 ||
      start + len > x.dim(axis))
    shape_error("slice: range [" + std::to_string(start) + "," +
                std::to_string(start + len) + ") out of bounds for axis " +
                std::to_string(axis) + " of " + shape_str(x.shape()));
  Shape os = x.shape();
  os[axis] = len;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < x.ndim(); ++i) inner *= x.dim(i);
  const int64_t wi = x.dim(axis) * inner, wo = len * inner;
  std::vector<S> out(shape_numel(os));
  const auto xd = x.data();
  for (int64_t o = 0; o < outer; ++o)
    std::copy_n(xd.data() + o * wi + start * inner, wo, out.data() + o * wo);
  auto n = make_node<S>(Op::kSlice, std::move(os), std::move(out), {x.node()});
  n->i0 = axis;
  n->i1 = start;
  n->i2 = len;
  return Tensor<S>(n);
}

// ---- dispatcher ----

template <typename S>
Tensor<S> forward_op(const std::string& kind, const std::vector<Tensor<S>>& in,
                     const OpAttrs& a) {
  auto want = [&](size_t n) {
    if (in.size() != n)
      shape_error(kind + ": expected " + std::to_string(n) + " inputs, got " +
                  std::to_string(in.size()));
  };
  if (kind == "add") { want(2); return add(in[0], in[1]); }
  if (kind == "sub") { want(2); return sub(in[0], in[1]); }
  if (kind == "mul") { want(2); return mul(in[0], in[1]); }
  if (kind == "matmul") { want(2); return matmul(in[0], in[1], a.i0 != 0, a.i1 != 0); }
  if (kind == "conv2d") {
    if (in.size() == 2)
      return conv2d(in[0], in[1], Tensor<S>(), static_cast<int>(a.i0 ? a.i0 : 1),
                    static_cast<int>(a.i1));
    want(3);
    return conv2d(in[0], in[1], in[2], static_cast<int>(a.i0 ? a.i0 : 1),
                  static_cast<int>(a.i1));
  }
  if (kind == "upsample2x") { want(1); return upsample_nearest2x(in[0]); }
  if (kind == "avgpool2x") { want(1); return avgpool2x(in[0]); }
  if (kind == "groupnorm") {
    want(3);
    return group_norm(in[0], in[1], in[2], static_cast<int>(a.i0 ? a.i0 : 8),
                      a.f0 > 0 ? a.f0 : 1e-5);
  }
  if (kind == "silu") { want(1); return silu(in[0]); }
  if (kind == "sigmoid") { want(1); return sigmoid(in[0]); }
  if (kind == "log") { want(1); return duodiff::log(in[0]); }
  if (kind == "abs") { want(1); return duodiff::abs(in[0]); }
  if (kind == "softmax") { want(1); return softmax_lastdim(in[0]); }
  if (kind == "sum") { want(1); return sum(in[0]); }
  if (kind == "mean") { want(1); return mean(in[0]); }
  if (kind == "reshape") { want(1); return reshape(in[0], a.shape); }
  if (kind == "concat") { want(2); return concat(in[0], in[1], static_cast<int>(a.i0)); }
  if (kind == "slice") { want(1); return slice(in[0], static_cast<int>(a.i0), a.i1, a.i2); }
  if (kind == "scale") { want(1); return scale(in[0], static_cast<S>(a.f0)); }
  shape_error("unknown op kind '" + kind + "'");
}

// ---- backward ----

namespace detail {
template <typename S>
void backward_step(Node<S>* n);  // defined in tensor_nn.cpp for heavy ops
}

template <typename S>
static void backward_elementwise(Node<S>* n) {
  const auto& g = n->grad;
  switch (n->op) {
    case Op::kAdd: {
      auto& a = *n->inputs[0];
      auto& b = *n->inputs[1];
      if (a.requires_grad) {
        a.ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) a.grad[i] += g[i];
      }
      if (b.requires_grad) {
        b.ensure_grad();
        const Bcast mode = static_cast<Bcast>(n->i0);
        switch (mode) {
          case Bcast::kSame:
            for (size_t i = 0; i < g.size(); ++i) b.grad[i] += g[i];
            break;
          case Bcast::kScalar: {
            S acc = 0;
            for (const S v : g) acc += v;
            b.grad[0] += acc;
            break;
          }
          case Bcast::kChanBias: {
            const int64_t N = n->shape[0], C = n->shape[1],
                          hw = n->shape[2] * n->shape[3];
            for (int64_t nn = 0; nn < N; ++nn)
              for (int64_t c = 0; c < C; ++c) {
                const S* p = g.data() + (nn * C + c) * hw;
                S acc = 0;
                for (int64_t i = 0; i < hw; ++i) acc += p[i];
                b.grad[c] += acc;
              }
            break;
          }
          case Bcast::kSampleChanBias: {
            const int64_t N = n->shape[0], C = n->shape[1],
                          hw = n->shape[2] * n->shape[3];
            for (int64_t nn = 0; nn < N; ++nn)
              for (int64_t c = 0; c < C; ++c) {
                const S* p = g.data() + (nn * C + c) * hw;
                S acc = 0;
                for (int64_t i = 0; i < hw; ++i) acc += p[i];
                b.grad[nn * C + c] += acc;
              }
            break;
          }
          case Bcast::kRowBias: {
            const int64_t N = n->shape[0], C = n->shape[1];
            for (int64_t nn = 0; nn < N; ++nn)
              for (int64_t c = 0; c < C; ++c) b.grad[c] += g[nn * C + c];
            break;
          }
        }
      }
      break;
    }
    case Op::kSub: {
      auto& a = *n->inputs[0];
      auto& b = *n->inputs[1];
      if (a.requires_grad) {
        a.ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) a.grad[i] += g[i];
      }
      if (b.requires_grad) {
        b.ensure_grad();
        if (b.value.size() == 1) {
          S acc = 0;
          for (const S v : g) acc += v;
          b.grad[0] -= acc;
        } else {
          for (size_t i = 0; i < g.size(); ++i) b.grad[i] -= g[i];
        }
      }
      break;
    }
    case Op::kMul: {
      auto& a = *n->inputs[0];
      auto& b = *n->inputs[1];
      if (a.requires_grad) {
        a.ensure_grad();
        if (b.value.size() == 1)
          for (size_t i = 0; i < g.size(); ++i) a.grad[i] += g[i] * b.value[0];
        else
          for (size_t i = 0; i < g.size(); ++i) a.grad[i] += g[i] * b.value[i];
      }
      if (b.requires_grad) {
        b.ensure_grad();
        if (b.value.size() == 1) {
          S acc = 0;
          for (size_t i = 0; i < g.size(); ++i) acc += g[i] * a.value[i];
          b.grad[0] += acc;
        } else {
          for (size_t i = 0; i < g.size(); ++i) b.grad[i] += g[i] * a.value[i];
        }
      }
      break;
    }
    case Op::kSiLU: {
      auto& a = *n->inputs[0];
      if (!a.requires_grad) break;
      a.ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) {
        const S x = a.value[i];
        const S s = S(1) / (S(1) + std::exp(-x));
        a.grad[i] += g[i] * (s + x * s * (S(1) - s));
      }
      break;
    }
    case Op::kSigmoid: {
      auto& a = *n->inputs[0];
      if (!a.requires_grad) break;
      a.ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) {
        const S s = n->value[i];
        a.grad[i] += g[i] * s * (S(1) - s);
      }
      break;
    }
    case Op::kLog: {
      auto& a = *n->inputs[0];
      if (!a.requires_grad) break;
      a.ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) a.grad[i] += g[i] / a.value[i];
      break;
    }
    case Op::kAbs: {
      auto& a = *n->inputs[0];
      if (!a.requires_grad) break;
      a.ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) {
        const S x = a.value[i];
        a.grad[i] += x > S(0) ? g[i] : (x < S(0) ? -g[i] : S(0));
      }
      break;
    }
    case Op::kScale: {
      auto& a = *n->inputs[0];
      if (!a.requires_grad) break;
      a.ensure_grad();
      const S c = static_cast<S>(n->f0);
      for (size_t i = 0; i < g.size(); ++i) a.grad[i] += g[i] * c;
      break;
    }
    case Op::kSum: {
      auto& a = *n->inputs[0];
      if (!a.requires_grad) break;
      a.ensure_grad();
      for (auto& v : a.grad) v += g[0];
      break;
    }
    case Op::kMean: {
      auto& a = *n->inputs[0];
      if (!a.requires_grad) break;
      a.ensure_grad();
      const S c = g[0] / static_cast<S>(a.value.size());
      for (auto& v : a.grad) v += c;
      break;
    }
    case Op::kReshape: {
      auto& a = *n->inputs[0];
      if (!a.requires_grad) break;
      a.ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) a.grad[i] += g[i];
      break;
    }
    case Op::kConcat: {
      auto& a = *n->inputs[0];
      auto& b = *n->inputs[1];
      const int axis = static_cast<int>(n->i0);
      int64_t outer = 1, inner = 1;
      for (int i = 0; i < axis; ++i) outer *= n->shape[i];
      for (int i = axis + 1; i < static_cast<int>(n->shape.size()); ++i)
        inner *= n->shape[i];
      const int64_t wa = a.shape[axis] * inner, wb = b.shape[axis] * inner;
      if (a.requires_grad) {
        a.ensure_grad();
        for (int64_t o = 0; o < outer; ++o) {
          const S* p = g.data() + o * (wa + wb);
          for (int64_t i = 0; i < wa; ++i) a.grad[o * wa + i] += p[i];
        }
      }
      if (b.requires_grad) {
        b.ensure_grad();
        for (int64_t o = 0; o < outer; ++o) {
          const S* p = g.data() + o * (wa + wb) + wa;
          for (int64_t i = 0; i < wb; ++i) b.grad[o * wb + i] += p[i];
        }
      }
      break;
    }
    case Op::kSlice: {
      auto& a = *n->inputs[0];
      if (!a.requires_grad) break;
      a.ensure_grad();
      const int axis = static_cast<int>(n->i0);
      const int64_t start = n->i1, len = n->i2;
      int64_t outer = 1, inner = 1;
      for (int i = 0; i < axis; ++i) outer *= a.shape[i];
      for (int i = axis + 1; i < static_cast<int>(a.shape.size()); ++i)
        inner *= a.shape[i];
      const int64_t wi = a.shape[axis] * inner, wo = len * inner;
      for (int64_t o = 0; o < outer; ++o) {
        S* p = a.grad.data() + o * wi + start * inner;
        const S* q = g.data() + o * wo;
        for (int64_t i = 0; i < wo; ++i) p[i] += q[i];
      }
      break;
    }
    default:
      detail::backward_step(n);
  }
}

template <typename S>
void backward(const Tensor<S>& loss, bool retain_graph) {
  if (loss.numel() != 1)
    shape_error("backward: loss must be scalar, got shape " +
                shape_str(loss.shape()));
  // Reachable subgraph, then strict reverse creation order.
  std::vector<std::shared_ptr<Node<S>>> order;
  std::unordered_set<Node<S>*> seen;
  std::vector<std::shared_ptr<Node<S>>> stack{loss.node()};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto cur = stack.back();
    stack.pop_back();
    order.push_back(cur);
    for (const auto& in : cur->inputs)
      if (seen.insert(in.get()).second) stack.push_back(in);
  }
  std::sort(order.begin(), order.end(),
            [](const auto& a, const auto& b) { return a->seq > b->seq; });

  loss.node()->ensure_grad();
  loss.node()->grad[0] = S(1);
  for (const auto& n : order) {
    if (!n->requires_grad || n->op == Op::kLeaf) continue;
    if (n->grad.empty()) continue;  // no contribution flowed here
    backward_elementwise(n.get());
  }
  if (!retain_graph) {
    for (const auto& n : order) {
      n->inputs.clear();
      n->saved.clear();
      if (n->op != Op::kLeaf) n->grad.clear();
    }
  }
}

#define DUODIFF_INSTANTIATE(S)                                                  \
  template class Tensor<S>;                                                     \
  template Tensor<S> add(const Tensor<S>&, const Tensor<S>&);                   \
  template Tensor<S> sub(const Tensor<S>&, const Tensor<S>&);                   \
  template Tensor<S> mul(const Tensor<S>&, const Tensor<S>&);                   \
  template Tensor<S> silu(const Tensor<S>&);                                    \
  template Tensor<S> sigmoid(const Tensor<S>&);                                 \
  template Tensor<S> log(const Tensor<S>&);                                     \
  template Tensor<S> abs(const Tensor<S>&);                                     \
  template Tensor<S> scale(const Tensor<S>&, S);                                \
  template Tensor<S> sum(const Tensor<S>&);                                     \
  template Tensor<S> mean(const Tensor<S>&);                                    \
  template Tensor<S> reshape(const Tensor<S>&, Shape);                          \
  template Tensor<S> concat(const Tensor<S>&, const Tensor<S>&, int);           \
  template Tensor<S> concat_all(const std::vector<Tensor<S>>&, int);            \
  template Tensor<S> slice(const Tensor<S>&, int, int64_t, int64_t);            \
  template Tensor<S> forward_op(const std::string&, const std::vector<Tensor<S>>&, \
                                const OpAttrs&);                                \
  template void backward(const Tensor<S>&, bool);

DUODIFF_INSTANTIATE(float)
DUODIFF_INSTANTIATE(double)

}  // namespace duodiff
