#pragma once

#include <cmath>
#include <vector>

#include "cdet/autograd.hpp"
#include "cdet/gemm.hpp"

namespace cdet {

namespace detail {

inline std::int64_t conv_out_dim(std::int64_t in, std::int64_t k, std::int64_t s, std::int64_t p) {
  return (in + 2 * p - k) / s + 1;
}

// Unpacks one image (C,H,W) into columns (C*kh*kw, Ho*Wo). Out-of-bounds
// samples are zero (zero padding).
template <typename T>
void im2col(const T* x, std::int64_t C, std::int64_t H, std::int64_t W, std::int64_t kh,
            std::int64_t kw, std::int64_t sh, std::int64_t sw, std::int64_t ph, std::int64_t pw,
            std::int64_t Ho, std::int64_t Wo, T* cols) {
  const std::int64_t P = Ho * Wo;
  for (std::int64_t c = 0; c < C; ++c)
    for (std::int64_t ky = 0; ky < kh; ++ky)
      for (std::int64_t kx = 0; kx < kw; ++kx) {
        T* row = cols + ((c * kh + ky) * kw + kx) * P;
        const T* src = x + c * H * W;
        for (std::int64_t oy = 0; oy < Ho; ++oy) {
          const std::int64_t iy = oy * sh - ph + ky;
          if (iy < 0 || iy >= H) {
            std::fill_n(row + oy * Wo, Wo, T(0));
            continue;
          }
          for (std::int64_t ox = 0; ox < Wo; ++ox) {
            const std::int64_t ix = ox * sw - pw + kx;
            row[oy * Wo + ox] = (ix >= 0 && ix < W) ? src[iy * W + ix] : T(0);
          }
        }
      }
}

// Scatter-add of columns back into an image; adjoint of im2col.
template <typename T>
void col2im(const T* cols, std::int64_t C, std::int64_t H, std::int64_t W, std::int64_t kh,
            std::int64_t kw, std::int64_t sh, std::int64_t sw, std::int64_t ph, std::int64_t pw,
            std::int64_t Ho, std::int64_t Wo, T* x) {
  const std::int64_t P = Ho * Wo;
  for (std::int64_t c = 0; c < C; ++c)
    for (std::int64_t ky = 0; ky < kh; ++ky)
      for (std::int64_t kx = 0; kx < kw; ++kx) {
        const T* row = cols + ((c * kh + ky) * kw + kx) * P;
        T* dst = x + c * H * W;
        for (std::int64_t oy = 0; oy < Ho; ++oy) {
          const std::int64_t iy = oy * sh - ph + ky;
          if (iy < 0 || iy >= H) continue;
          for (std::int64_t ox = 0; ox < Wo; ++ox) {
            const std::int64_t ix = ox * sw - pw + kx;
            if (ix >= 0 && ix < W) dst[iy * W + ix] += row[oy * Wo + ox];
          }
        }
      }
}

}  // namespace detail

// Dense cross-correlation via im2col + GEMM. x (N,Cin,H,W), w (Cout,Cin,kh,kw),
// optional bias (Cout). This is the fast path; conv2d_reference below is the
// independent oracle it is tested against.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, std::int64_t stride,
              std::int64_t pad) {
  const auto& xs = x->value.shape();
  const auto& ws = w->value.shape();
  if (xs.size() != 4 || ws.size() != 4) throw std::invalid_argument("conv2d: expects 4D x and w");
  if (xs[1] != ws[1])
    throw std::invalid_argument("conv2d: channel mismatch " + x->value.shape_str() + " vs " +
                                w->value.shape_str());
  const std::int64_t N = xs[0], Cin = xs[1], H = xs[2], W = xs[3];
  const std::int64_t Cout = ws[0], kh = ws[2], kw = ws[3];
  const std::int64_t Ho = detail::conv_out_dim(H, kh, stride, pad);
  const std::int64_t Wo = detail::conv_out_dim(W, kw, stride, pad);
  if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("conv2d: output would be empty");
  const std::int64_t K = Cin * kh * kw, P = Ho * Wo;

  Tensor<T> out({N, Cout, Ho, Wo});
  {
    std::vector<T> cols(static_cast<std::size_t>(K * P));
    for (std::int64_t n = 0; n < N; ++n) {
      detail::im2col(x->value.data() + n * Cin * H * W, Cin, H, W, kh, kw, stride, stride, pad,
                     pad, Ho, Wo, cols.data());
      gemm(w->value.data(), cols.data(), out.data() + n * Cout * P, Cout, K, P);
    }
    if (b) {
      T* po = out.data();
      const T* pb = b->value.data();
#pragma omp parallel for collapse(2)
      for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t c = 0; c < Cout; ++c) {
          T* p = po + (n * Cout + c) * P;
          for (std::int64_t i = 0; i < P; ++i) p[i] += pb[c];
        }
    }
  }

  std::vector<Var<T>> parents = b ? std::vector<Var<T>>{x, w, b} : std::vector<Var<T>>{x, w};
  return make_node<T>(
      std::move(out), parents,
      [x, w, b, N, Cin, H, W, Cout, kh, kw, stride, pad, Ho, Wo, K, P](VarNode<T>& node) {
        const T* g = node.grad.data();
        std::vector<T> cols(static_cast<std::size_t>(K * P));
        Tensor<T>* gx = x->needs_grad ? &ensure_grad(*x) : nullptr;
        Tensor<T>* gw = w->needs_grad ? &ensure_grad(*w) : nullptr;
        std::vector<T> gcols(x->needs_grad ? static_cast<std::size_t>(K * P) : 0);
        for (std::int64_t n = 0; n < N; ++n) {
          const T* gn = g + n * Cout * P;
          if (gw || gx) {
            if (gw) {
              detail::im2col(x->value.data() + n * Cin * H * W, Cin, H, W, kh, kw, stride, stride,
                             pad, pad, Ho, Wo, cols.data());
              gemm(gn, cols.data(), gw->data(), Cout, P, K, false, true, true);
            }
            if (gx) {
              gemm(w->value.data(), gn, gcols.data(), K, Cout, P, true, false, false);
              detail::col2im(gcols.data(), Cin, H, W, kh, kw, stride, stride, pad, pad, Ho, Wo,
                             gx->data() + n * Cin * H * W);
            }
          }
        }
        if (b && b->needs_grad) {
          T* gb = ensure_grad(*b).data();
          for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t c = 0; c < Cout; ++c) {
              T acc = T(0);
              const T* p = g + (n * Cout + c) * P;
              for (std::int64_t i = 0; i < P; ++i) acc += p[i];
              gb[c] += acc;
            }
        }
      });
}

// Transposed convolution (fractionally strided). x (N,Cin,H,W),
// w (Cin,Cout,kh,kw), output (N,Cout,(H-1)*s-2p+kh,(W-1)*s-2p+kw).
template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, std::int64_t stride,
                        std::int64_t pad) {
  const auto& xs = x->value.shape();
  const auto& ws = w->value.shape();
  if (xs.size() != 4 || ws.size() != 4)
    throw std::invalid_argument("conv_transpose2d: expects 4D x and w");
  if (xs[1] != ws[0]) throw std::invalid_argument("conv_transpose2d: channel mismatch");
  const std::int64_t N = xs[0], Cin = xs[1], H = xs[2], W = xs[3];
  const std::int64_t Cout = ws[1], kh = ws[2], kw = ws[3];
  const std::int64_t Ho = (H - 1) * stride - 2 * pad + kh;
  const std::int64_t Wo = (W - 1) * stride - 2 * pad + kw;
  if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("conv_transpose2d: output would be empty");
  const std::int64_t K = Cout * kh * kw, Pin = H * W;

  Tensor<T> out = Tensor<T>::zeros({N, Cout, Ho, Wo});
  {
    std::vector<T> cols(static_cast<std::size_t>(K * Pin));
    for (std::int64_t n = 0; n < N; ++n) {
      // cols = w^T (K x Cin) * x_n (Cin x Pin), then scatter to the output.
      gemm(w->value.data(), x->value.data() + n * Cin * Pin, cols.data(), K, Cin, Pin, true,
           false, false);
      detail::col2im(cols.data(), Cout, Ho, Wo, kh, kw, stride, stride, pad, pad, H, W,
                     out.data() + n * Cout * Ho * Wo);
    }
    if (b) {
      T* po = out.data();
      const T* pb = b->value.data();
      const std::int64_t P = Ho * Wo;
#pragma omp parallel for collapse(2)
      for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t c = 0; c < Cout; ++c) {
          T* p = po + (n * Cout + c) * P;
          for (std::int64_t i = 0; i < P; ++i) p[i] += pb[c];
        }
    }
  }

  std::vector<Var<T>> parents = b ? std::vector<Var<T>>{x, w, b} : std::vector<Var<T>>{x, w};
  return make_node<T>(
      std::move(out), parents,
      [x, w, b, N, Cin, H, W, Cout, kh, kw, stride, pad, Ho, Wo, K, Pin](VarNode<T>& node) {
        const T* g = node.grad.data();
        const std::int64_t Pout = Ho * Wo;
        std::vector<T> gcols(static_cast<std::size_t>(K * Pin));
        Tensor<T>* gx = x->needs_grad ? &ensure_grad(*x) : nullptr;
        Tensor<T>* gw = w->needs_grad ? &ensure_grad(*w) : nullptr;
        for (std::int64_t n = 0; n < N; ++n) {
          const T* gn = g + n * Cout * Pout;
          detail::im2col(gn, Cout, Ho, Wo, kh, kw, stride, stride, pad, pad, H, W, gcols.data());
          if (gx)
            gemm(w->value.data(), gcols.data(), gx->data() + n * Cin * Pin, Cin, K, Pin, false,
                 false, true);
          if (gw)
            gemm(x->value.data() + n * Cin * Pin, gcols.data(), gw->data(), Cin, Pin, K, false,
                 true, true);
        }
        if (b && b->needs_grad) {
          T* gb = ensure_grad(*b).data();
          for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t c = 0; c < Cout; ++c) {
              T acc = T(0);
              const T* p = g + (n * Cout + c) * Pout;
              for (std::int64_t i = 0; i < Pout; ++i) acc += p[i];
              gb[c] += acc;
            }
        }
      });
}

// Max pooling; ties resolve to the first (row-major) maximum.
template <typename T>
Var<T> maxpool2d(const Var<T>& x, std::int64_t k, std::int64_t stride, std::int64_t pad) {
  const auto& xs = x->value.shape();
  const std::int64_t N = xs[0], C = xs[1], H = xs[2], W = xs[3];
  const std::int64_t Ho = detail::conv_out_dim(H, k, stride, pad);
  const std::int64_t Wo = detail::conv_out_dim(W, k, stride, pad);
  Tensor<T> out({N, C, Ho, Wo});
  auto argmax = std::make_shared<std::vector<std::int64_t>>(N * C * Ho * Wo);
  const T* px = x->value.data();
  T* po = out.data();
#pragma omp parallel for collapse(2)
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c) {
      const T* src = px + (n * C + c) * H * W;
      for (std::int64_t oy = 0; oy < Ho; ++oy)
        for (std::int64_t ox = 0; ox < Wo; ++ox) {
          T best = -std::numeric_limits<T>::infinity();
          std::int64_t best_idx = -1;
          for (std::int64_t ky = 0; ky < k; ++ky) {
            const std::int64_t iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= H) continue;
            for (std::int64_t kx = 0; kx < k; ++kx) {
              const std::int64_t ix = ox * stride - pad + kx;
              if (ix < 0 || ix >= W) continue;
              if (src[iy * W + ix] > best) {
                best = src[iy * W + ix];
                best_idx = iy * W + ix;
              }
            }
          }
          const std::int64_t oi = ((n * C + c) * Ho + oy) * Wo + ox;
          po[oi] = best;
          (*argmax)[oi] = best_idx;
        }
    }
  return make_node<T>(std::move(out), {x}, [x, argmax, N, C, H, W, Ho, Wo](VarNode<T>& node) {
    if (!x->needs_grad) return;
    T* d = ensure_grad(*x).data();
    const T* g = node.grad.data();
#pragma omp parallel for collapse(2)
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t c = 0; c < C; ++c) {
        T* dst = d + (n * C + c) * H * W;
        const std::int64_t base = (n * C + c) * Ho * Wo;
        for (std::int64_t i = 0; i < Ho * Wo; ++i) {
          const std::int64_t a = (*argmax)[base + i];
          if (a >= 0) dst[a] += g[base + i];
        }
      }
  });
}

// x2 bilinear upsampling, align_corners=false, border-replicating sampling.
template <typename T>
Var<T> upsample_bilinear2x(const Var<T>& x) {
  const auto& xs = x->value.shape();
  const std::int64_t N = xs[0], C = xs[1], H = xs[2], W = xs[3];
  const std::int64_t Ho = 2 * H, Wo = 2 * W;
  Tensor<T> out({N, C, Ho, Wo});

  // Precompute the 1D sampling lattice; identical for forward and backward.
  auto lattice = [](std::int64_t out_dim, std::int64_t in_dim, std::vector<std::int64_t>& i0,
                    std::vector<std::int64_t>& i1, std::vector<T>& frac) {
    i0.resize(out_dim);
    i1.resize(out_dim);
    frac.resize(out_dim);
    for (std::int64_t o = 0; o < out_dim; ++o) {
      const T src = (static_cast<T>(o) + T(0.5)) / T(2) - T(0.5);
      const std::int64_t lo = static_cast<std::int64_t>(std::floor(src));
      frac[o] = src - static_cast<T>(lo);
      i0[o] = std::clamp<std::int64_t>(lo, 0, in_dim - 1);
      i1[o] = std::clamp<std::int64_t>(lo + 1, 0, in_dim - 1);
    }
  };
  std::vector<std::int64_t> y0, y1, x0, x1;
  std::vector<T> fy, fx;
  lattice(Ho, H, y0, y1, fy);
  lattice(Wo, W, x0, x1, fx);

  {
    const T* px = x->value.data();
    T* po = out.data();
#pragma omp parallel for collapse(2)
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t c = 0; c < C; ++c) {
        const T* src = px + (n * C + c) * H * W;
        T* dst = po + (n * C + c) * Ho * Wo;
        for (std::int64_t oy = 0; oy < Ho; ++oy)
          for (std::int64_t ox = 0; ox < Wo; ++ox) {
            const T a = src[y0[oy] * W + x0[ox]], bb = src[y0[oy] * W + x1[ox]];
            const T cc = src[y1[oy] * W + x0[ox]], dd = src[y1[oy] * W + x1[ox]];
            const T top = a + (bb - a) * fx[ox];
            const T bot = cc + (dd - cc) * fx[ox];
            dst[oy * Wo + ox] = top + (bot - top) * fy[oy];
          }
      }
  }

  return make_node<T>(std::move(out), {x},
                      [x, N, C, H, W, Ho, Wo, y0, y1, x0, x1, fy, fx](VarNode<T>& node) {
                        if (!x->needs_grad) return;
                        T* d = ensure_grad(*x).data();
                        const T* g = node.grad.data();
#pragma omp parallel for collapse(2)
                        for (std::int64_t n = 0; n < N; ++n)
                          for (std::int64_t c = 0; c < C; ++c) {
                            T* dst = d + (n * C + c) * H * W;
                            const T* gn = g + (n * C + c) * Ho * Wo;
                            for (std::int64_t oy = 0; oy < Ho; ++oy)
                              for (std::int64_t ox = 0; ox < Wo; ++ox) {
                                const T gv = gn[oy * Wo + ox];
                                const T wy1 = fy[oy], wy0 = T(1) - wy1;
                                const T wx1 = fx[ox], wx0 = T(1) - wx1;
                                dst[y0[oy] * W + x0[ox]] += gv * wy0 * wx0;
                                dst[y0[oy] * W + x1[ox]] += gv * wy0 * wx1;
                                dst[y1[oy] * W + x0[ox]] += gv * wy1 * wx0;
                                dst[y1[oy] * W + x1[ox]] += gv * wy1 * wx1;
                              }
                          }
                      });
}

// Reference convolution: the direct dense sum, no im2col, no GEMM. Slow by
// design; the fast conv2d and deform_conv2d are verified against it.
template <typename T>
Tensor<T> conv2d_reference(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                           std::int64_t stride, std::int64_t pad) {
  if (x.ndim() != 3 || w.ndim() != 4)
    throw std::invalid_argument("conv2d_reference: expects x (C,H,W), w (Cout,Cin,kh,kw)");
  const std::int64_t Cin = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (w.dim(1) != Cin) throw std::invalid_argument("conv2d_reference: channel mismatch");
  const std::int64_t Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const std::int64_t Ho = detail::conv_out_dim(H, kh, stride, pad);
  const std::int64_t Wo = detail::conv_out_dim(W, kw, stride, pad);
  if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("conv2d_reference: empty output");
  Tensor<T> out({Cout, Ho, Wo});
  for (std::int64_t co = 0; co < Cout; ++co)
    for (std::int64_t oy = 0; oy < Ho; ++oy)
      for (std::int64_t ox = 0; ox < Wo; ++ox) {
        T acc = b.defined() ? b[co] : T(0);
        for (std::int64_t ci = 0; ci < Cin; ++ci)
          for (std::int64_t ky = 0; ky < kh; ++ky)
            for (std::int64_t kx = 0; kx < kw; ++kx) {
              const std::int64_t iy = oy * stride - pad + ky;
              const std::int64_t ix = ox * stride - pad + kx;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              acc += w.at(co, ci, ky, kx) * x.at(ci, iy, ix);
            }
        out.at(co, oy, ox) = acc;
      }
  return out;
}

}  // namespace cdet
