#pragma once

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "cdet/rng.hpp"

namespace cdet {

// Dense row-major tensor. Copies are shallow (shared storage); use clone()
// for a deep copy. Feature maps are laid out (N, C, H, W) or (C, H, W).
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::int64_t> shape) : shape_(std::move(shape)) {
    buf_ = std::make_shared<std::vector<T>>(compute_numel(shape_), T(0));
  }

  Tensor(std::initializer_list<std::int64_t> shape)
      : Tensor(std::vector<std::int64_t>(shape)) {}

  static Tensor zeros(std::vector<std::int64_t> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<std::int64_t> shape, T value) {
    Tensor t(std::move(shape));
    std::fill(t.buf_->begin(), t.buf_->end(), value);
    return t;
  }

  static Tensor from_vector(std::vector<std::int64_t> shape, std::vector<T> data) {
    Tensor t;
    t.shape_ = std::move(shape);
    if (static_cast<std::int64_t>(data.size()) != compute_numel(t.shape_))
      throw std::invalid_argument("Tensor::from_vector: size does not match shape");
    t.buf_ = std::make_shared<std::vector<T>>(std::move(data));
    return t;
  }

  static Tensor randn(std::vector<std::int64_t> shape, Rng& rng, T stddev = T(1)) {
    Tensor t(std::move(shape));
    for (auto& v : *t.buf_) v = static_cast<T>(rng.normal()) * stddev;
    return t;
  }

  static Tensor rand_uniform(std::vector<std::int64_t> shape, Rng& rng, T lo, T hi) {
    Tensor t(std::move(shape));
    for (auto& v : *t.buf_) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
  }

  bool defined() const { return buf_ != nullptr; }
  std::int64_t numel() const { return buf_ ? static_cast<std::int64_t>(buf_->size()) : 0; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  std::int64_t dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  const std::vector<std::int64_t>& shape() const { return shape_; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  T* data() { return buf_->data(); }
  const T* data() const { return buf_->data(); }

  T& operator[](std::int64_t i) { return (*buf_)[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return (*buf_)[static_cast<std::size_t>(i)]; }

  T& at(std::int64_t y, std::int64_t x) {
    assert(ndim() == 2);
    return (*buf_)[static_cast<std::size_t>(y * shape_[1] + x)];
  }
  const T& at(std::int64_t y, std::int64_t x) const {
    return const_cast<Tensor*>(this)->at(y, x);
  }
  T& at(std::int64_t c, std::int64_t y, std::int64_t x) {
    assert(ndim() == 3);
    return (*buf_)[static_cast<std::size_t>((c * shape_[1] + y) * shape_[2] + x)];
  }
  const T& at(std::int64_t c, std::int64_t y, std::int64_t x) const {
    return const_cast<Tensor*>(this)->at(c, y, x);
  }
  T& at(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) {
    assert(ndim() == 4);
    return (*buf_)[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x)];
  }
  const T& at(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) const {
    return const_cast<Tensor*>(this)->at(n, c, y, x);
  }

  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.buf_ = std::make_shared<std::vector<T>>(*buf_);
    return t;
  }

  // Same storage, new shape with identical element count.
  Tensor reshaped(std::vector<std::int64_t> shape) const {
    if (compute_numel(shape) != numel())
      throw std::invalid_argument("Tensor::reshaped: element count mismatch");
    Tensor t;
    t.shape_ = std::move(shape);
    t.buf_ = buf_;
    return t;
  }

  void fill(T value) { std::fill(buf_->begin(), buf_->end(), value); }
  void zero() { fill(T(0)); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> t(shape_);
    const T* src = data();
    U* dst = t.data();
    for (std::int64_t i = 0; i < numel(); ++i) dst[i] = static_cast<U>(src[i]);
    return t;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << ')';
    return os.str();
  }

 private:
  template <typename U>
  friend class Tensor;

  static std::int64_t compute_numel(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
      if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  std::vector<std::int64_t> shape_;
  std::shared_ptr<std::vector<T>> buf_;
};

}  // namespace cdet
