#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cdet/nn_blocks.hpp"

namespace cdet {

// Adam (default) or SGD with momentum over a parameter registry. L2 weight
// decay applies to >=2D tensors only (convolution kernels), never to biases,
// norm scales, or activation parameters. Frozen leaves (requires_grad=false)
// are skipped entirely.
template <typename T>
class Optimizer {
 public:
  enum class Kind { Adam, SgdMomentum };

  Optimizer() = default;

  Optimizer(Kind kind, const ParamRegistry<T>& params, T weight_decay, T momentum = T(0.9),
            T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8))
      : kind_(kind),
        params_(params),
        weight_decay_(weight_decay),
        momentum_(momentum),
        beta1_(beta1),
        beta2_(beta2),
        eps_(eps) {
    for (const auto& [name, v] : params_.items) {
      m_.push_back(Tensor<T>::zeros(v->value.shape()));
      v_.push_back(Tensor<T>::zeros(v->value.shape()));
    }
  }

  // Global-norm gradient clipping; returns the pre-clip norm.
  T clip_gradients(T max_norm) {
    T sq = T(0);
    for (const auto& [name, p] : params_.items) {
      if (!p->grad.defined()) continue;
      const T* g = p->grad.data();
      for (std::int64_t i = 0; i < p->grad.numel(); ++i) sq += g[i] * g[i];
    }
    const T norm = std::sqrt(sq);
    if (norm > max_norm && norm > T(0)) {
      const T scale = max_norm / norm;
      for (auto& [name, p] : params_.items) {
        if (!p->grad.defined()) continue;
        T* g = p->grad.data();
        for (std::int64_t i = 0; i < p->grad.numel(); ++i) g[i] *= scale;
      }
    }
    return norm;
  }

  void step(T lr) {
    ++t_;
    for (std::size_t k = 0; k < params_.items.size(); ++k) {
      auto& p = params_.items[k].second;
      if (!p->requires_grad || !p->grad.defined()) continue;
      T* w = p->value.data();
      T* g = p->grad.data();
      const std::int64_t n = p->value.numel();
      const bool decay = weight_decay_ > T(0) && p->value.ndim() >= 2;
      if (kind_ == Kind::Adam) {
        T* m = m_[k].data();
        T* v = v_[k].data();
        const T bc1 = T(1) - std::pow(beta1_, static_cast<T>(t_));
        const T bc2 = T(1) - std::pow(beta2_, static_cast<T>(t_));
#pragma omp parallel for
        for (std::int64_t i = 0; i < n; ++i) {
          T gi = g[i] + (decay ? weight_decay_ * w[i] : T(0));
          m[i] = beta1_ * m[i] + (T(1) - beta1_) * gi;
          v[i] = beta2_ * v[i] + (T(1) - beta2_) * gi * gi;
          const T mhat = m[i] / bc1;
          const T vhat = v[i] / bc2;
          w[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
      } else {
        T* m = m_[k].data();
#pragma omp parallel for
        for (std::int64_t i = 0; i < n; ++i) {
          T gi = g[i] + (decay ? weight_decay_ * w[i] : T(0));
          m[i] = momentum_ * m[i] + gi;
          w[i] -= lr * m[i];
        }
      }
    }
  }

  void zero_grad() {
    for (auto& [name, p] : params_.items) p->grad = Tensor<T>();
  }

  std::int64_t step_count() const { return t_; }
  void set_step_count(std::int64_t t) { t_ = t; }

  // Slot state exposed for checkpointing.
  std::vector<Tensor<T>>& slot_m() { return m_; }
  std::vector<Tensor<T>>& slot_v() { return v_; }
  const ParamRegistry<T>& params() const { return params_; }

 private:
  Kind kind_ = Kind::Adam;
  ParamRegistry<T> params_;
  std::vector<Tensor<T>> m_, v_;
  T weight_decay_ = T(0);
  T momentum_ = T(0.9);
  T beta1_ = T(0.9), beta2_ = T(0.999), eps_ = T(1e-8);
  std::int64_t t_ = 0;
};

}  // namespace cdet
