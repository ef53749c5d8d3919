#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "cdet/autograd.hpp"

namespace cdet {

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  if (!a->value.same_shape(b->value))
    throw std::invalid_argument("add: shape mismatch " + a->value.shape_str() + " vs " +
                                b->value.shape_str());
  Tensor<T> out(a->value.shape());
  const T* pa = a->value.data();
  const T* pb = b->value.data();
  T* po = out.data();
  const std::int64_t n = out.numel();
#pragma omp parallel for
  for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  return make_node<T>(std::move(out), {a, b}, [a, b](VarNode<T>& node) {
    if (a->needs_grad) accumulate_grad(*a, node.grad);
    if (b->needs_grad) accumulate_grad(*b, node.grad);
  });
}

// y = sum_i coeff_i * v_i, elementwise over same-shape inputs.
template <typename T>
Var<T> affine_combine(const std::vector<Var<T>>& vs, const std::vector<T>& coeffs) {
  if (vs.empty() || vs.size() != coeffs.size())
    throw std::invalid_argument("affine_combine: need matching non-empty inputs");
  Tensor<T> out = Tensor<T>::zeros(vs[0]->value.shape());
  T* po = out.data();
  const std::int64_t n = out.numel();
  for (std::size_t i = 0; i < vs.size(); ++i) {
    const T* pv = vs[i]->value.data();
    const T c = coeffs[i];
    for (std::int64_t j = 0; j < n; ++j) po[j] += c * pv[j];
  }
  std::vector<Var<T>> parents(vs.begin(), vs.end());
  return make_node<T>(std::move(out), parents, [vs, coeffs](VarNode<T>& node) {
    const T* g = node.grad.data();
    for (std::size_t i = 0; i < vs.size(); ++i) {
      if (!vs[i]->needs_grad) continue;
      Tensor<T>& dst = ensure_grad(*vs[i]);
      T* d = dst.data();
      const T c = coeffs[i];
      for (std::int64_t j = 0; j < dst.numel(); ++j) d[j] += c * g[j];
    }
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out(x->value.shape());
  const T* px = x->value.data();
  T* po = out.data();
  const std::int64_t n = out.numel();
#pragma omp parallel for
  for (std::int64_t i = 0; i < n; ++i) po[i] = px[i] > T(0) ? px[i] : T(0);
  return make_node<T>(std::move(out), {x}, [x](VarNode<T>& node) {
    if (!x->needs_grad) return;
    Tensor<T>& dst = ensure_grad(*x);
    const T* px = x->value.data();
    const T* g = node.grad.data();
    T* d = dst.data();
#pragma omp parallel for
    for (std::int64_t i = 0; i < dst.numel(); ++i)
      if (px[i] > T(0)) d[i] += g[i];
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> out(x->value.shape());
  const T* px = x->value.data();
  T* po = out.data();
  const std::int64_t n = out.numel();
#pragma omp parallel for
  for (std::int64_t i = 0; i < n; ++i) po[i] = T(1) / (T(1) + std::exp(-px[i]));
  Tensor<T> saved = out;
  return make_node<T>(std::move(out), {x}, [x, saved](VarNode<T>& node) {
    if (!x->needs_grad) return;
    Tensor<T>& dst = ensure_grad(*x);
    const T* y = saved.data();
    const T* g = node.grad.data();
    T* d = dst.data();
#pragma omp parallel for
    for (std::int64_t i = 0; i < dst.numel(); ++i) d[i] += g[i] * y[i] * (T(1) - y[i]);
  });
}

// Piecewise-linear sigmoid: clamp((x+3)/6, 0, 1).
template <typename T>
Var<T> h_sigmoid(const Var<T>& x) {
  Tensor<T> out(x->value.shape());
  const T* px = x->value.data();
  T* po = out.data();
  const std::int64_t n = out.numel();
#pragma omp parallel for
  for (std::int64_t i = 0; i < n; ++i)
    po[i] = std::clamp((px[i] + T(3)) / T(6), T(0), T(1));
  return make_node<T>(std::move(out), {x}, [x](VarNode<T>& node) {
    if (!x->needs_grad) return;
    Tensor<T>& dst = ensure_grad(*x);
    const T* px = x->value.data();
    const T* g = node.grad.data();
    T* d = dst.data();
#pragma omp parallel for
    for (std::int64_t i = 0; i < dst.numel(); ++i)
      if (px[i] > T(-3) && px[i] < T(3)) d[i] += g[i] / T(6);
  });
}

// Straight-through inside [lo, hi], zero gradient outside.
template <typename T>
Var<T> clamp(const Var<T>& x, T lo, T hi) {
  Tensor<T> out(x->value.shape());
  const T* px = x->value.data();
  T* po = out.data();
  const std::int64_t n = out.numel();
#pragma omp parallel for
  for (std::int64_t i = 0; i < n; ++i) po[i] = std::clamp(px[i], lo, hi);
  return make_node<T>(std::move(out), {x}, [x, lo, hi](VarNode<T>& node) {
    if (!x->needs_grad) return;
    Tensor<T>& dst = ensure_grad(*x);
    const T* px = x->value.data();
    const T* g = node.grad.data();
    T* d = dst.data();
#pragma omp parallel for
    for (std::int64_t i = 0; i < dst.numel(); ++i)
      if (px[i] > lo && px[i] < hi) d[i] += g[i];
  });
}

namespace detail {
inline std::int64_t bcast_stride(std::int64_t dim, std::int64_t stride) {
  return dim == 1 ? 0 : stride;
}
}  // namespace detail

// Elementwise product of a 4D tensor with a gate whose dims are each equal to
// x's or 1 (e.g. channel gate (N,C,1,1), spatial gate (N,1,H,W)).
template <typename T>
Var<T> mul_bcast(const Var<T>& x, const Var<T>& g) {
  const auto& xs = x->value.shape();
  const auto& gs = g->value.shape();
  if (xs.size() != 4 || gs.size() != 4)
    throw std::invalid_argument("mul_bcast: expects 4D tensors");
  for (int i = 0; i < 4; ++i)
    if (gs[i] != xs[i] && gs[i] != 1)
      throw std::invalid_argument("mul_bcast: incompatible gate shape " + g->value.shape_str());

  const std::int64_t N = xs[0], C = xs[1], H = xs[2], W = xs[3];
  const std::int64_t gsw = detail::bcast_stride(gs[3], 1);
  const std::int64_t gsh = detail::bcast_stride(gs[2], gs[3]);
  const std::int64_t gsc = detail::bcast_stride(gs[1], gs[2] * gs[3]);
  const std::int64_t gsn = detail::bcast_stride(gs[0], gs[1] * gs[2] * gs[3]);

  Tensor<T> out(xs);
  {
    const T* px = x->value.data();
    const T* pg = g->value.data();
    T* po = out.data();
#pragma omp parallel for collapse(2)
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t c = 0; c < C; ++c) {
        const std::int64_t xoff = (n * C + c) * H * W;
        const std::int64_t goff = n * gsn + c * gsc;
        for (std::int64_t h = 0; h < H; ++h)
          for (std::int64_t w = 0; w < W; ++w)
            po[xoff + h * W + w] = px[xoff + h * W + w] * pg[goff + h * gsh + w * gsw];
      }
  }

  return make_node<T>(std::move(out), {x, g}, [x, g, N, C, H, W, gsn, gsc, gsh, gsw](VarNode<T>& node) {
    const T* px = x->value.data();
    const T* pg = g->value.data();
    const T* go = node.grad.data();
    if (x->needs_grad) {
      T* d = ensure_grad(*x).data();
#pragma omp parallel for collapse(2)
      for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t c = 0; c < C; ++c) {
          const std::int64_t xoff = (n * C + c) * H * W;
          const std::int64_t goff = n * gsn + c * gsc;
          for (std::int64_t h = 0; h < H; ++h)
            for (std::int64_t w = 0; w < W; ++w)
              d[xoff + h * W + w] += go[xoff + h * W + w] * pg[goff + h * gsh + w * gsw];
        }
    }
    if (g->needs_grad) {
      T* d = ensure_grad(*g).data();
      // One writer per gate element: iterate gate coordinates, reduce over
      // the broadcast region serially for determinism.
      const auto& gs2 = g->value.shape();
      const std::int64_t GN = gs2[0], GC = gs2[1], GH = gs2[2], GW = gs2[3];
#pragma omp parallel for collapse(2)
      for (std::int64_t gn = 0; gn < GN; ++gn)
        for (std::int64_t gc = 0; gc < GC; ++gc) {
          for (std::int64_t gh = 0; gh < GH; ++gh)
            for (std::int64_t gw = 0; gw < GW; ++gw) {
              T acc = T(0);
              const std::int64_t n0 = (GN == 1) ? 0 : gn, n1 = (GN == 1) ? N : gn + 1;
              const std::int64_t c0 = (GC == 1) ? 0 : gc, c1 = (GC == 1) ? C : gc + 1;
              const std::int64_t h0 = (GH == 1) ? 0 : gh, h1 = (GH == 1) ? H : gh + 1;
              const std::int64_t w0 = (GW == 1) ? 0 : gw, w1 = (GW == 1) ? W : gw + 1;
              for (std::int64_t n = n0; n < n1; ++n)
                for (std::int64_t c = c0; c < c1; ++c)
                  for (std::int64_t h = h0; h < h1; ++h)
                    for (std::int64_t w = w0; w < w1; ++w) {
                      const std::int64_t xi = ((n * C + c) * H + h) * W + w;
                      acc += go[xi] * px[xi];
                    }
              d[((gn * GC + gc) * GH + gh) * GW + gw] += acc;
            }
        }
    }
  });
}

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const auto& as = a->value.shape();
  const auto& bs = b->value.shape();
  if (as.size() != 4 || bs.size() != 4 || as[0] != bs[0] || as[2] != bs[2] || as[3] != bs[3])
    throw std::invalid_argument("concat_channels: incompatible shapes");
  const std::int64_t N = as[0], Ca = as[1], Cb = bs[1], H = as[2], W = as[3];
  Tensor<T> out({N, Ca + Cb, H, W});
  const std::int64_t plane = H * W;
  for (std::int64_t n = 0; n < N; ++n) {
    std::copy_n(a->value.data() + n * Ca * plane, Ca * plane, out.data() + n * (Ca + Cb) * plane);
    std::copy_n(b->value.data() + n * Cb * plane, Cb * plane,
                out.data() + (n * (Ca + Cb) + Ca) * plane);
  }
  return make_node<T>(std::move(out), {a, b}, [a, b, N, Ca, Cb, plane](VarNode<T>& node) {
    const T* g = node.grad.data();
    if (a->needs_grad) {
      T* d = ensure_grad(*a).data();
      for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t i = 0; i < Ca * plane; ++i)
          d[n * Ca * plane + i] += g[n * (Ca + Cb) * plane + i];
    }
    if (b->needs_grad) {
      T* d = ensure_grad(*b).data();
      for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t i = 0; i < Cb * plane; ++i)
          d[n * Cb * plane + i] += g[(n * (Ca + Cb) + Ca) * plane + i];
    }
  });
}

// (N,C,H,W) -> (N,C,1,1) spatial mean.
template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  const auto& s = x->value.shape();
  const std::int64_t N = s[0], C = s[1], plane = s[2] * s[3];
  Tensor<T> out({N, C, 1, 1});
  const T* px = x->value.data();
  T* po = out.data();
#pragma omp parallel for collapse(2)
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c) {
      T acc = T(0);
      const T* p = px + (n * C + c) * plane;
      for (std::int64_t i = 0; i < plane; ++i) acc += p[i];
      po[n * C + c] = acc / static_cast<T>(plane);
    }
  return make_node<T>(std::move(out), {x}, [x, N, C, plane](VarNode<T>& node) {
    if (!x->needs_grad) return;
    T* d = ensure_grad(*x).data();
    const T* g = node.grad.data();
#pragma omp parallel for collapse(2)
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t c = 0; c < C; ++c) {
        const T gv = g[n * C + c] / static_cast<T>(plane);
        T* p = d + (n * C + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) p[i] += gv;
      }
  });
}

// (N,C,H,W) -> (N,C,1,1) spatial max; gradient routes to the first argmax.
template <typename T>
Var<T> global_max_pool(const Var<T>& x) {
  const auto& s = x->value.shape();
  const std::int64_t N = s[0], C = s[1], plane = s[2] * s[3];
  Tensor<T> out({N, C, 1, 1});
  auto argmax = std::make_shared<std::vector<std::int64_t>>(N * C);
  const T* px = x->value.data();
  T* po = out.data();
#pragma omp parallel for collapse(2)
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c) {
      const T* p = px + (n * C + c) * plane;
      std::int64_t best = 0;
      for (std::int64_t i = 1; i < plane; ++i)
        if (p[i] > p[best]) best = i;
      po[n * C + c] = p[best];
      (*argmax)[n * C + c] = best;
    }
  return make_node<T>(std::move(out), {x}, [x, argmax, N, C, plane](VarNode<T>& node) {
    if (!x->needs_grad) return;
    T* d = ensure_grad(*x).data();
    const T* g = node.grad.data();
    for (std::int64_t i = 0; i < N * C; ++i) d[i * plane + (*argmax)[i]] += g[i];
  });
}

// (N,C,H,W) -> (N,1,H,W) mean over channels.
template <typename T>
Var<T> channel_mean(const Var<T>& x) {
  const auto& s = x->value.shape();
  const std::int64_t N = s[0], C = s[1], plane = s[2] * s[3];
  Tensor<T> out({N, 1, s[2], s[3]});
  const T* px = x->value.data();
  T* po = out.data();
#pragma omp parallel for
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t i = 0; i < plane; ++i) {
      T acc = T(0);
      for (std::int64_t c = 0; c < C; ++c) acc += px[(n * C + c) * plane + i];
      po[n * plane + i] = acc / static_cast<T>(C);
    }
  return make_node<T>(std::move(out), {x}, [x, N, C, plane](VarNode<T>& node) {
    if (!x->needs_grad) return;
    T* d = ensure_grad(*x).data();
    const T* g = node.grad.data();
#pragma omp parallel for
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t i = 0; i < plane; ++i) {
        const T gv = g[n * plane + i] / static_cast<T>(C);
        for (std::int64_t c = 0; c < C; ++c) d[(n * C + c) * plane + i] += gv;
      }
  });
}

// (N,C,H,W) -> (N,1,H,W) max over channels; gradient to the first argmax.
template <typename T>
Var<T> channel_max(const Var<T>& x) {
  const auto& s = x->value.shape();
  const std::int64_t N = s[0], C = s[1], plane = s[2] * s[3];
  Tensor<T> out({N, 1, s[2], s[3]});
  auto argmax = std::make_shared<std::vector<std::int32_t>>(N * plane);
  const T* px = x->value.data();
  T* po = out.data();
#pragma omp parallel for
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t i = 0; i < plane; ++i) {
      std::int64_t best = 0;
      for (std::int64_t c = 1; c < C; ++c)
        if (px[(n * C + c) * plane + i] > px[(n * C + best) * plane + i]) best = c;
      po[n * plane + i] = px[(n * C + best) * plane + i];
      (*argmax)[n * plane + i] = static_cast<std::int32_t>(best);
    }
  return make_node<T>(std::move(out), {x}, [x, argmax, N, C, plane](VarNode<T>& node) {
    if (!x->needs_grad) return;
    T* d = ensure_grad(*x).data();
    const T* g = node.grad.data();
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t i = 0; i < plane; ++i)
        d[(n * C + (*argmax)[n * plane + i]) * plane + i] += g[n * plane + i];
  });
}

}  // namespace cdet
