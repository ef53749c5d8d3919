#pragma once

#include <cmath>

#include "cdet/autograd.hpp"
#include "cdet/config.hpp"
#include "cdet/ops.hpp"
#include "cdet/targets.hpp"

namespace cdet {

template <typename T = float>
struct LossBreakdown {
  T l_cls = T(0);
  T l_off = T(0);
  T l_reg = T(0);
  T l_det = T(0);
};

// Penalty-reduced focal loss over the class heatmaps. Positives (Y == 1)
// contribute (1-Yhat)^alpha log Yhat, negatives (1-Y)^beta Yhat^alpha
// log(1-Yhat); the sum is negated and divided by max(N, 1).
//
// Predictions must lie strictly inside (0,1); clamp upstream before calling.
template <typename T>
Var<T> focal_loss(const Var<T>& pred, const Tensor<T>& target, std::int64_t n_objects,
                  T alpha = T(2), T beta = T(4)) {
  if (!pred->value.same_shape(target))
    throw std::invalid_argument("focal_loss: shape mismatch");
  const std::int64_t n = pred->value.numel();
  const T* py = pred->value.data();
  const T* pt = target.data();
  const T norm = T(1) / static_cast<T>(std::max<std::int64_t>(n_objects, 1));

  T loss = T(0);
  for (std::int64_t i = 0; i < n; ++i) {
    const T yhat = py[i];
    if (!(yhat > T(0) && yhat < T(1)))
      throw NumericError("focal_loss: prediction outside (0,1); clamp upstream");
    if (pt[i] == T(1))
      loss -= std::pow(T(1) - yhat, alpha) * std::log(yhat);
    else
      loss -= std::pow(T(1) - pt[i], beta) * std::pow(yhat, alpha) * std::log(T(1) - yhat);
  }
  loss *= norm;

  Tensor<T> out = Tensor<T>::from_vector({1}, {loss});
  Tensor<T> saved_target = target;
  return make_node<T>(std::move(out), {pred},
                      [pred, saved_target, n, norm, alpha, beta](VarNode<T>& node) {
                        if (!pred->needs_grad) return;
                        const T g = node.grad[0] * norm;
                        const T* py = pred->value.data();
                        const T* pt = saved_target.data();
                        T* d = ensure_grad(*pred).data();
#pragma omp parallel for
                        for (std::int64_t i = 0; i < n; ++i) {
                          const T yhat = py[i];
                          T dl;
                          if (pt[i] == T(1)) {
                            // d/dy[(1-y)^a log y] = -a(1-y)^(a-1) log y + (1-y)^a / y
                            dl = -alpha * std::pow(T(1) - yhat, alpha - T(1)) * std::log(yhat) +
                                 std::pow(T(1) - yhat, alpha) / yhat;
                          } else {
                            // d/dy[(1-Y)^b y^a log(1-y)]
                            dl = std::pow(T(1) - pt[i], beta) *
                                 (alpha * std::pow(yhat, alpha - T(1)) * std::log(T(1) - yhat) -
                                  std::pow(yhat, alpha) / (T(1) - yhat));
                          }
                          d[i] -= g * dl;
                        }
                      });
}

namespace detail {

// Masked mean-over-objects L1. pred (B,2,H,W), target (B,2,H,W),
// mask (B,1,H,W); both channels of every masked position contribute.
template <typename T>
Var<T> masked_l1_loss(const Var<T>& pred, const Tensor<T>& target, const Tensor<T>& mask,
                      std::int64_t n_objects, const char* what) {
  if (!pred->value.same_shape(target)) throw std::invalid_argument(std::string(what) + ": shape mismatch");
  const auto& s = pred->value.shape();
  const std::int64_t B = s[0], C = s[1], plane = s[2] * s[3];
  const T norm = T(1) / static_cast<T>(std::max<std::int64_t>(n_objects, 1));
  const T* py = pred->value.data();
  const T* pt = target.data();
  const T* pm = mask.data();

  T loss = T(0);
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t i = 0; i < plane; ++i) {
      if (pm[b * plane + i] == T(0)) continue;
      for (std::int64_t c = 0; c < C; ++c)
        loss += std::abs(py[(b * C + c) * plane + i] - pt[(b * C + c) * plane + i]);
    }
  loss *= norm;

  Tensor<T> out = Tensor<T>::from_vector({1}, {loss});
  Tensor<T> saved_t = target, saved_m = mask;
  return make_node<T>(std::move(out), {pred},
                      [pred, saved_t, saved_m, B, C, plane, norm](VarNode<T>& node) {
                        if (!pred->needs_grad) return;
                        const T g = node.grad[0] * norm;
                        const T* py = pred->value.data();
                        const T* pt = saved_t.data();
                        const T* pm = saved_m.data();
                        T* d = ensure_grad(*pred).data();
                        for (std::int64_t b = 0; b < B; ++b)
                          for (std::int64_t i = 0; i < plane; ++i) {
                            if (pm[b * plane + i] == T(0)) continue;
                            for (std::int64_t c = 0; c < C; ++c) {
                              const std::int64_t k = (b * C + c) * plane + i;
                              const T diff = py[k] - pt[k];
                              if (diff > T(0))
                                d[k] += g;
                              else if (diff < T(0))
                                d[k] -= g;
                            }
                          }
                      });
}

}  // namespace detail

template <typename T>
Var<T> offset_loss(const Var<T>& pred, const BatchTargets<T>& targets) {
  return detail::masked_l1_loss(pred, targets.offset, targets.mask, targets.n_objects,
                                "offset_loss");
}

template <typename T>
Var<T> size_loss(const Var<T>& pred, const BatchTargets<T>& targets) {
  return detail::masked_l1_loss(pred, targets.size, targets.mask, targets.n_objects, "size_loss");
}

// L_det = L_cls + lambda_reg * L_reg + lambda_off * L_off
template <typename T>
Var<T> total_loss(const Var<T>& l_cls, const Var<T>& l_reg, const Var<T>& l_off, T lambda_reg,
                  T lambda_off) {
  return affine_combine<T>({l_cls, l_reg, l_off}, {T(1), lambda_reg, lambda_off});
}

template <typename T>
LossBreakdown<T> breakdown(const Var<T>& l_cls, const Var<T>& l_reg, const Var<T>& l_off,
                           T lambda_reg, T lambda_off) {
  LossBreakdown<T> b;
  b.l_cls = scalar_value(l_cls);
  b.l_reg = scalar_value(l_reg);
  b.l_off = scalar_value(l_off);
  b.l_det = b.l_cls + lambda_reg * b.l_reg + lambda_off * b.l_off;
  return b;
}

}  // namespace cdet
