#pragma once

#include <Eigen/Core>
#include <cstdint>

namespace cdet {

// C (m x n) = op(A) * op(B) on raw row-major buffers, optionally accumulating
// into C. Backed by Eigen so the same code path serves float and double.
template <typename T>
void gemm(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n,
          bool trans_a = false, bool trans_b = false, bool accumulate = false) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using CMap = Eigen::Map<const Mat>;
  using MMap = Eigen::Map<Mat>;
  MMap C(c, m, n);
  auto run = [&](const auto& A, const auto& B) {
    if (accumulate)
      C.noalias() += A * B;
    else
      C.noalias() = A * B;
  };
  if (!trans_a && !trans_b)
    run(CMap(a, m, k), CMap(b, k, n));
  else if (trans_a && !trans_b)
    run(CMap(a, k, m).transpose(), CMap(b, k, n));
  else if (!trans_a && trans_b)
    run(CMap(a, m, k), CMap(b, n, k).transpose());
  else
    run(CMap(a, k, m).transpose(), CMap(b, n, k).transpose());
}

}  // namespace cdet
