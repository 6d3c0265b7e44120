#include <Eigen/Core>
#include <cmath>

#include "duodiff/tensor.hpp"
#include "tensor_impl.hpp"

// matmul, conv2d, pooling, upsample, group norm, softmax: the ops whose
// forward or backward is a GEMM or a windowed pass.

namespace duodiff {

using detail::make_node;
using detail::shape_error;

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MapM = Eigen::Map<Mat<S>>;
template <typename S>
using MapC = Eigen::Map<const Mat<S>>;

// ---- matmul ----

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b, bool trans_a,
                 bool trans_b) {
  if (a.ndim() != 2 || b.ndim() != 2)
    shape_error("matmul: expects 2-d operands, got " + shape_str(a.shape()) +
                " and " + shape_str(b.shape()));
  const int64_t m = trans_a ? a.dim(1) : a.dim(0);
  const int64_t k = trans_a ? a.dim(0) : a.dim(1);
  const int64_t k2 = trans_b ? b.dim(1) : b.dim(0);
  const int64_t n = trans_b ? b.dim(0) : b.dim(1);
  if (k != k2)
    shape_error("matmul: inner dims " + std::to_string(k) + " vs " +
                std::to_string(k2) + " (" + shape_str(a.shape()) +
                (trans_a ? "^T" : "") + " x " + shape_str(b.shape()) +
                (trans_b ? "^T" : "") + ")");
  std::vector<S> out(m * n);
  {
    MapC<S> A(a.data().data(), a.dim(0), a.dim(1));
    MapC<S> B(b.data().data(), b.dim(0), b.dim(1));
    MapM<S> C(out.data(), m, n);
    if (!trans_a && !trans_b) C.noalias() = A * B;
    else if (trans_a && !trans_b) C.noalias() = A.transpose() * B;
    else if (!trans_a && trans_b) C.noalias() = A * B.transpose();
    else C.noalias() = A.transpose() * B.transpose();
  }
  auto node = make_node<S>(Op::kMatmul, {m, n}, std::move(out),
                           {a.node(), b.node()});
  node->i0 = trans_a;
  node->i1 = trans_b;
  return Tensor<S>(node);
}

// ---- conv2d ----

template <typename S>
static void im2col(const S* x, int64_t C, int64_t H, int64_t W, int64_t kh,
                   int64_t kw, int64_t s, int64_t p, int64_t Ho, int64_t Wo,
                   S* col) {
  for (int64_t c = 0; c < C; ++c)
    for (int64_t ky = 0; ky < kh; ++ky)
      for (int64_t kx = 0; kx < kw; ++kx) {
        S* dst = col + (((c * kh + ky) * kw) + kx) * Ho * Wo;
        for (int64_t oy = 0; oy < Ho; ++oy) {
          const int64_t iy = oy * s + ky - p;
          if (iy < 0 || iy >= H) {
            std::fill_n(dst + oy * Wo, Wo, S(0));
            continue;
          }
          const S* src = x + (c * H + iy) * W;
          for (int64_t ox = 0; ox < Wo; ++ox) {
            const int64_t ix = ox * s + kx - p;
            dst[oy * Wo + ox] = (ix >= 0 && ix < W) ? src[ix] : S(0);
          }
        }
      }
}

template <typename S>
static void col2im_add(const S* col, int64_t C, int64_t H, int64_t W,
                       int64_t kh, int64_t kw, int64_t s, int64_t p,
                       int64_t Ho, int64_t Wo, S* x) {
  for (int64_t c = 0; c < C; ++c)
    for (int64_t ky = 0; ky < kh; ++ky)
      for (int64_t kx = 0; kx < kw; ++kx) {
        const S* src = col + (((c * kh + ky) * kw) + kx) * Ho * Wo;
        for (int64_t oy = 0; oy < Ho; ++oy) {
          const int64_t iy = oy * s + ky - p;
          if (iy < 0 || iy >= H) continue;
          S* dst = x + (c * H + iy) * W;
          for (int64_t ox = 0; ox < Wo; ++ox) {
            const int64_t ix = ox * s + kx - p;
            if (ix >= 0 && ix < W) dst[ix] += src[oy * Wo + ox];
          }
        }
      }
}

template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias,
                 int stride, int pad) {
  if (x.ndim() != 4 || w.ndim() != 4)
    shape_error("conv2d: expects NCHW input and FCKK weight, got " +
                shape_str(x.shape()) + " and " + shape_str(w.shape()));
  const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t F = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != C)
    shape_error("conv2d: input has " + std::to_string(C) +
                " channels but weight expects " + std::to_string(w.dim(1)));
  if (stride < 1) shape_error("conv2d: stride must be >= 1");
  const int64_t Ho = (H + 2 * pad - kh) / stride + 1;
  const int64_t Wo = (W + 2 * pad - kw) / stride + 1;
  if (Ho <= 0 || Wo <= 0)
    shape_error("conv2d: kernel " + std::to_string(kh) + "x" +
                std::to_string(kw) + " does not fit input " +
                shape_str(x.shape()) + " with pad " + std::to_string(pad));
  const bool has_bias = bias.defined();
  if (has_bias && (bias.ndim() != 1 || bias.dim(0) != F))
    shape_error("conv2d: bias shape " + shape_str(bias.shape()) +
                " does not match " + std::to_string(F) + " filters");

  const int64_t ckk = C * kh * kw;
  std::vector<S> col(ckk * Ho * Wo);
  std::vector<S> out(N * F * Ho * Wo);
  MapC<S> Wm(w.data().data(), F, ckk);
  for (int64_t n = 0; n < N; ++n) {
    im2col(x.data().data() + n * C * H * W, C, H, W, kh, kw, stride, pad, Ho,
           Wo, col.data());
    MapC<S> Cm(col.data(), ckk, Ho * Wo);
    MapM<S> Om(out.data() + n * F * Ho * Wo, F, Ho * Wo);
    Om.noalias() = Wm * Cm;
    if (has_bias)
      for (int64_t f = 0; f < F; ++f)
        Om.row(f).array() += bias.data()[f];
  }
  std::vector<std::shared_ptr<Node<S>>> ins{x.node(), w.node()};
  if (has_bias) ins.push_back(bias.node());
  auto node = make_node<S>(Op::kConv2d, {N, F, Ho, Wo}, std::move(out),
                           std::move(ins));
  node->i0 = stride;
  node->i1 = pad;
  return Tensor<S>(node);
}

// ---- resampling ----

template <typename S>
Tensor<S> upsample_nearest2x(const Tensor<S>& x) {
  if (x.ndim() != 4) shape_error("upsample2x: expects NCHW, got " + shape_str(x.shape()));
  const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  std::vector<S> out(N * C * 4 * H * W);
  const S* src = x.data().data();
  for (int64_t nc = 0; nc < N * C; ++nc)
    for (int64_t y = 0; y < H; ++y)
      for (int64_t xx = 0; xx < W; ++xx) {
        const S v = src[(nc * H + y) * W + xx];
        S* d = out.data() + ((nc * 2 * H + 2 * y) * 2 * W + 2 * xx);
        d[0] = v;
        d[1] = v;
        d[2 * W] = v;
        d[2 * W + 1] = v;
      }
  return Tensor<S>(make_node<S>(Op::kUpsample2x, {N, C, 2 * H, 2 * W},
                                std::move(out), {x.node()}));
}

template <typename S>
Tensor<S> avgpool2x(const Tensor<S>& x) {
  if (x.ndim() != 4) shape_error("avgpool2x: expects NCHW, got " + shape_str(x.shape()));
  const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % 2 || W % 2)
    shape_error("avgpool2x: spatial dims must be even, got " + shape_str(x.shape()));
  std::vector<S> out(N * C * (H / 2) * (W / 2));
  const S* src = x.data().data();
  for (int64_t nc = 0; nc < N * C; ++nc)
    for (int64_t y = 0; y < H / 2; ++y)
      for (int64_t xx = 0; xx < W / 2; ++xx) {
        const S* s0 = src + (nc * H + 2 * y) * W + 2 * xx;
        out[(nc * (H / 2) + y) * (W / 2) + xx] =
            (s0[0] + s0[1] + s0[W] + s0[W + 1]) * S(0.25);
      }
  return Tensor<S>(make_node<S>(Op::kAvgPool2x, {N, C, H / 2, W / 2},
                                std::move(out), {x.node()}));
}

// ---- group norm ----

template <typename S>
Tensor<S> group_norm(const Tensor<S>& x, const Tensor<S>& gamma,
                     const Tensor<S>& beta, int groups, double eps) {
  if (x.ndim() != 4) shape_error("groupnorm: expects NCHW, got " + shape_str(x.shape()));
  const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (groups < 1 || C % groups)
    shape_error("groupnorm: " + std::to_string(C) + " channels not divisible by " +
                std::to_string(groups) + " groups");
  if (gamma.numel() != C || beta.numel() != C)
    shape_error("groupnorm: affine params must have " + std::to_string(C) +
                " entries, got " + shape_str(gamma.shape()) + " and " +
                shape_str(beta.shape()));
  const int64_t G = groups, Cg = C / G, m = Cg * H * W;
  std::vector<S> out(x.numel());
  std::vector<S> saved(2 * N * G);
  const S* src = x.data().data();
  const S* ga = gamma.data().data();
  const S* be = beta.data().data();
  for (int64_t n = 0; n < N; ++n)
    for (int64_t g = 0; g < G; ++g) {
      const S* xs = src + (n * C + g * Cg) * H * W;
      S mu = 0;
      for (int64_t i = 0; i < m; ++i) mu += xs[i];
      mu /= static_cast<S>(m);
      S var = 0;
      for (int64_t i = 0; i < m; ++i) {
        const S d = xs[i] - mu;
        var += d * d;
      }
      var /= static_cast<S>(m);
      const S inv = S(1) / std::sqrt(var + static_cast<S>(eps));
      saved[n * G + g] = mu;
      saved[N * G + n * G + g] = inv;
      S* ys = out.data() + (n * C + g * Cg) * H * W;
      for (int64_t cc = 0; cc < Cg; ++cc) {
        const S gc = ga[g * Cg + cc], bc = be[g * Cg + cc];
        for (int64_t i = 0; i < H * W; ++i) {
          const int64_t idx = cc * H * W + i;
          ys[idx] = (xs[idx] - mu) * inv * gc + bc;
        }
      }
    }
  auto node = make_node<S>(Op::kGroupNorm, x.shape(), std::move(out),
                           {x.node(), gamma.node(), beta.node()});
  node->i0 = groups;
  node->f0 = eps;
  node->saved = std::move(saved);
  return Tensor<S>(node);
}

// ---- softmax over last dim ----

template <typename S>
Tensor<S> softmax_lastdim(const Tensor<S>& x) {
  const int64_t L = x.dim(x.ndim() - 1);
  const int64_t R = x.numel() / L;
  std::vector<S> out(x.numel());
  const S* src = x.data().data();
  for (int64_t r = 0; r < R; ++r) {
    const S* row = src + r * L;
    S mx = row[0];
    for (int64_t i = 1; i < L; ++i) mx = std::max(mx, row[i]);
    S z = 0;
    for (int64_t i = 0; i < L; ++i) {
      const S e = std::exp(row[i] - mx);
      out[r * L + i] = e;
      z += e;
    }
    for (int64_t i = 0; i < L; ++i) out[r * L + i] /= z;
  }
  return Tensor<S>(make_node<S>(Op::kSoftmax, x.shape(), std::move(out),
                                {x.node()}));
}

// ---- backward for the ops above ----

namespace detail {

template <typename S>
void backward_step(Node<S>* n) {
  const auto& g = n->grad;
  switch (n->op) {
    case Op::kMatmul: {
      auto& a = *n->inputs[0];
      auto& b = *n->inputs[1];
      const bool ta = n->i0, tb = n->i1;
      MapC<S> A(a.value.data(), a.shape[0], a.shape[1]);
      MapC<S> B(b.value.data(), b.shape[0], b.shape[1]);
      MapC<S> G(g.data(), n->shape[0], n->shape[1]);
      if (a.requires_grad) {
        a.ensure_grad();
        MapM<S> dA(a.grad.data(), a.shape[0], a.shape[1]);
        if (!ta) {
          if (!tb) dA.noalias() += G * B.transpose();
          else dA.noalias() += G * B;
        } else {
          if (!tb) dA.noalias() += B * G.transpose();
          else dA.noalias() += B.transpose() * G.transpose();
        }
      }
      if (b.requires_grad) {
        b.ensure_grad();
        MapM<S> dB(b.grad.data(), b.shape[0], b.shape[1]);
        if (!tb) {
          if (!ta) dB.noalias() += A.transpose() * G;
          else dB.noalias() += A * G;
        } else {
          if (!ta) dB.noalias() += G.transpose() * A;
          else dB.noalias() += G.transpose() * A.transpose();
        }
      }
      break;
    }
    case Op::kConv2d: {
      auto& x = *n->inputs[0];
      auto& w = *n->inputs[1];
      Node<S>* bias = n->inputs.size() > 2 ? n->inputs[2].get() : nullptr;
      const int64_t N = x.shape[0], C = x.shape[1], H = x.shape[2],
                    W = x.shape[3];
      const int64_t F = w.shape[0], kh = w.shape[2], kw = w.shape[3];
      const int64_t s = n->i0, p = n->i1;
      const int64_t Ho = n->shape[2], Wo = n->shape[3];
      const int64_t ckk = C * kh * kw;
      std::vector<S> col(ckk * Ho * Wo);
      if (w.requires_grad) w.ensure_grad();
      if (x.requires_grad) x.ensure_grad();
      if (bias && bias->requires_grad) bias->ensure_grad();
      MapC<S> Wm(w.value.data(), F, ckk);
      for (int64_t nn = 0; nn < N; ++nn) {
        MapC<S> G(g.data() + nn * F * Ho * Wo, F, Ho * Wo);
        if (w.requires_grad || bias) {
          if (w.requires_grad) {
            im2col(x.value.data() + nn * C * H * W, C, H, W, kh, kw, s, p, Ho,
                   Wo, col.data());
            MapC<S> Cm(col.data(), ckk, Ho * Wo);
            MapM<S> dW(w.grad.data(), F, ckk);
            dW.noalias() += G * Cm.transpose();
          }
          if (bias && bias->requires_grad)
            for (int64_t f = 0; f < F; ++f) bias->grad[f] += G.row(f).sum();
        }
        if (x.requires_grad) {
          MapM<S> dCol(col.data(), ckk, Ho * Wo);
          dCol.noalias() = Wm.transpose() * G;
          col2im_add(col.data(), C, H, W, kh, kw, s, p, Ho, Wo,
                     x.grad.data() + nn * C * H * W);
        }
      }
      break;
    }
    case Op::kUpsample2x: {
      auto& a = *n->inputs[0];
      if (!a.requires_grad) break;
      a.ensure_grad();
      const int64_t H = a.shape[2], W = a.shape[3];
      for (int64_t nc = 0; nc < a.shape[0] * a.shape[1]; ++nc)
        for (int64_t y = 0; y < H; ++y)
          for (int64_t xx = 0; xx < W; ++xx) {
            const S* src = g.data() + ((nc * 2 * H + 2 * y) * 2 * W + 2 * xx);
            a.grad[(nc * H + y) * W + xx] +=
                src[0] + src[1] + src[2 * W] + src[2 * W + 1];
          }
      break;
    }
    case Op::kAvgPool2x: {
      auto& a = *n->inputs[0];
      if (!a.requires_grad) break;
      a.ensure_grad();
      const int64_t H = a.shape[2], W = a.shape[3];
      for (int64_t nc = 0; nc < a.shape[0] * a.shape[1]; ++nc)
        for (int64_t y = 0; y < H / 2; ++y)
          for (int64_t xx = 0; xx < W / 2; ++xx) {
            const S v = g[(nc * (H / 2) + y) * (W / 2) + xx] * S(0.25);
            S* d = a.grad.data() + (nc * H + 2 * y) * W + 2 * xx;
            d[0] += v;
            d[1] += v;
            d[W] += v;
            d[W + 1] += v;
          }
      break;
    }
    case Op::kGroupNorm: {
      auto& x = *n->inputs[0];
      auto& gamma = *n->inputs[1];
      auto& beta = *n->inputs[2];
      const int64_t N = x.shape[0], C = x.shape[1], H = x.shape[2],
                    W = x.shape[3];
      const int64_t G = n->i0, Cg = C / G, m = Cg * H * W;
      if (x.requires_grad) x.ensure_grad();
      if (gamma.requires_grad) gamma.ensure_grad();
      if (beta.requires_grad) beta.ensure_grad();
      for (int64_t nn = 0; nn < N; ++nn)
        for (int64_t gg = 0; gg < G; ++gg) {
          const S mu = n->saved[nn * G + gg];
          const S inv = n->saved[N * G + nn * G + gg];
          const S* xs = x.value.data() + (nn * C + gg * Cg) * H * W;
          const S* gs = g.data() + (nn * C + gg * Cg) * H * W;
          S s1 = 0, s2 = 0;
          for (int64_t cc = 0; cc < Cg; ++cc) {
            const S gc = gamma.value[gg * Cg + cc];
            for (int64_t i = 0; i < H * W; ++i) {
              const int64_t idx = cc * H * W + i;
              const S xhat = (xs[idx] - mu) * inv;
              const S dxhat = gs[idx] * gc;
              s1 += dxhat;
              s2 += dxhat * xhat;
              if (gamma.requires_grad)
                gamma.grad[gg * Cg + cc] += gs[idx] * xhat;
              if (beta.requires_grad) beta.grad[gg * Cg + cc] += gs[idx];
            }
          }
          if (x.requires_grad) {
            const S inv_m = S(1) / static_cast<S>(m);
            S* dx = x.grad.data() + (nn * C + gg * Cg) * H * W;
            for (int64_t cc = 0; cc < Cg; ++cc) {
              const S gc = gamma.value[gg * Cg + cc];
              for (int64_t i = 0; i < H * W; ++i) {
                const int64_t idx = cc * H * W + i;
                const S xhat = (xs[idx] - mu) * inv;
                const S dxhat = gs[idx] * gc;
                dx[idx] += inv * (dxhat - s1 * inv_m - xhat * s2 * inv_m);
              }
            }
          }
        }
      break;
    }
    case Op::kSoftmax: {
      auto& a = *n->inputs[0];
      if (!a.requires_grad) break;
      a.ensure_grad();
      const int64_t L = n->shape.back();
      const int64_t R = static_cast<int64_t>(n->value.size()) / L;
      for (int64_t r = 0; r < R; ++r) {
        const S* y = n->value.data() + r * L;
        const S* gy = g.data() + r * L;
        S dot = 0;
        for (int64_t i = 0; i < L; ++i) dot += gy[i] * y[i];
        S* dx = a.grad.data() + r * L;
        for (int64_t i = 0; i < L; ++i) dx[i] += y[i] * (gy[i] - dot);
      }
      break;
    }
    default:
      throw std::runtime_error(std::string("backward: unhandled op ") +
                               op_name(n->op));
  }
}

template void backward_step(Node<float>*);
template void backward_step(Node<double>*);

}  // namespace detail

#define DUODIFF_INSTANTIATE_NN(S)                                            \
  template Tensor<S> matmul(const Tensor<S>&, const Tensor<S>&, bool, bool); \
  template Tensor<S> conv2d(const Tensor<S>&, const Tensor<S>&,              \
                            const Tensor<S>&, int, int);                     \
  template Tensor<S> upsample_nearest2x(const Tensor<S>&);                   \
  template Tensor<S> avgpool2x(const Tensor<S>&);                            \
  template Tensor<S> group_norm(const Tensor<S>&, const Tensor<S>&,          \
                                const Tensor<S>&, int, double);              \
  template Tensor<S> softmax_lastdim(const Tensor<S>&);

DUODIFF_INSTANTIATE_NN(float)
DUODIFF_INSTANTIATE_NN(double)

}  // namespace duodiff
