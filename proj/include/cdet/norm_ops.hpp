#pragma once

#include <cmath>

#include "cdet/autograd.hpp"

namespace cdet {

// Running statistics owned by a BatchNorm layer. Plain tensors: they are
// state, not differentiated.
template <typename T>
struct BnRunningStats {
  Tensor<T> mean;
  Tensor<T> var;

  explicit BnRunningStats(std::int64_t channels = 0) {
    if (channels > 0) {
      mean = Tensor<T>::zeros({channels});
      var = Tensor<T>::full({channels}, T(1));
    }
  }
};

// Batch normalization over (N,H,W) per channel.
//  - training=true: normalize with batch statistics; optionally update the
//    running estimates (update_running=false during frozen training).
//  - training=false: normalize with running statistics.
template <typename T>
Var<T> batchnorm2d(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                   BnRunningStats<T>& stats, bool training, bool update_running,
                   T momentum = T(0.1), T eps = T(1e-5)) {
  const auto& xs = x->value.shape();
  if (xs.size() != 4) throw std::invalid_argument("batchnorm2d: expects 4D input");
  const std::int64_t N = xs[0], C = xs[1], H = xs[2], W = xs[3];
  if (gamma->value.numel() != C || beta->value.numel() != C)
    throw std::invalid_argument("batchnorm2d: gamma/beta size mismatch");
  const std::int64_t plane = H * W;
  const std::int64_t M = N * plane;

  Tensor<T> out(xs);
  Tensor<T> xhat(xs);
  Tensor<T> invstd({C});
  const T* px = x->value.data();
  const T* pg = gamma->value.data();
  const T* pb = beta->value.data();
  T* po = out.data();
  T* ph = xhat.data();
  T* pinv = invstd.data();

  if (training) {
#pragma omp parallel for
    for (std::int64_t c = 0; c < C; ++c) {
      T sum = T(0), sq = T(0);
      for (std::int64_t n = 0; n < N; ++n) {
        const T* p = px + (n * C + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
          sum += p[i];
          sq += p[i] * p[i];
        }
      }
      const T mean = sum / static_cast<T>(M);
      T var = sq / static_cast<T>(M) - mean * mean;
      if (var < T(0)) var = T(0);
      const T inv = T(1) / std::sqrt(var + eps);
      pinv[c] = inv;
      for (std::int64_t n = 0; n < N; ++n) {
        const T* p = px + (n * C + c) * plane;
        T* h = ph + (n * C + c) * plane;
        T* o = po + (n * C + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
          h[i] = (p[i] - mean) * inv;
          o[i] = pg[c] * h[i] + pb[c];
        }
      }
      if (update_running) {
        const T unbiased = M > 1 ? var * static_cast<T>(M) / static_cast<T>(M - 1) : var;
        stats.mean[c] = (T(1) - momentum) * stats.mean[c] + momentum * mean;
        stats.var[c] = (T(1) - momentum) * stats.var[c] + momentum * unbiased;
      }
    }
  } else {
#pragma omp parallel for
    for (std::int64_t c = 0; c < C; ++c) {
      const T inv = T(1) / std::sqrt(stats.var[c] + eps);
      pinv[c] = inv;
      const T mean = stats.mean[c];
      for (std::int64_t n = 0; n < N; ++n) {
        const T* p = px + (n * C + c) * plane;
        T* h = ph + (n * C + c) * plane;
        T* o = po + (n * C + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
          h[i] = (p[i] - mean) * inv;
          o[i] = pg[c] * h[i] + pb[c];
        }
      }
    }
  }

  return make_node<T>(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat, invstd, training, N, C, plane, M](VarNode<T>& node) {
        const T* g = node.grad.data();
        const T* ph = xhat.data();
        const T* pg = gamma->value.data();
        const T* pinv = invstd.data();
        Tensor<T>* gx = x->needs_grad ? &ensure_grad(*x) : nullptr;
        Tensor<T>* gga = gamma->needs_grad ? &ensure_grad(*gamma) : nullptr;
        Tensor<T>* gbe = beta->needs_grad ? &ensure_grad(*beta) : nullptr;
#pragma omp parallel for
        for (std::int64_t c = 0; c < C; ++c) {
          T sum_g = T(0), sum_gh = T(0);
          for (std::int64_t n = 0; n < N; ++n) {
            const T* gp = g + (n * C + c) * plane;
            const T* hp = ph + (n * C + c) * plane;
            for (std::int64_t i = 0; i < plane; ++i) {
              sum_g += gp[i];
              sum_gh += gp[i] * hp[i];
            }
          }
          if (gga) (*gga)[c] += sum_gh;
          if (gbe) (*gbe)[c] += sum_g;
          if (gx) {
            if (training) {
              // Batch statistics participate in the forward value, so they
              // appear in the gradient.
              const T k = pg[c] * pinv[c] / static_cast<T>(M);
              for (std::int64_t n = 0; n < N; ++n) {
                const T* gp = g + (n * C + c) * plane;
                const T* hp = ph + (n * C + c) * plane;
                T* dp = gx->data() + (n * C + c) * plane;
                for (std::int64_t i = 0; i < plane; ++i)
                  dp[i] += k * (static_cast<T>(M) * gp[i] - sum_g - hp[i] * sum_gh);
              }
            } else {
              const T k = pg[c] * pinv[c];
              for (std::int64_t n = 0; n < N; ++n) {
                const T* gp = g + (n * C + c) * plane;
                T* dp = gx->data() + (n * C + c) * plane;
                for (std::int64_t i = 0; i < plane; ++i) dp[i] += k * gp[i];
              }
            }
          }
        }
      });
}

}  // namespace cdet
