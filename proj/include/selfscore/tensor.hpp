// Copyright (C) 2026 The selfscore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <complex>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace selfscore {

template <typename T> struct scalar_traits {
  using real_type = T;
  static constexpr bool is_complex = false;
};
template <typename T> struct scalar_traits<std::complex<T>> {
  using real_type = T;
  static constexpr bool is_complex = true;
};

/* 64-byte-aligned storage keeps vectorized kernels on one code path
   regardless of where a buffer happens to land, which in turn keeps
   repeated runs bit-identical. */
template <typename T, std::size_t Align = 64> struct AlignedAllocator {
  using value_type = T;
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U, Align>&) noexcept {}
  T* allocate(std::size_t n) {
    if (n == 0) return nullptr;
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(Align)));
  }
  void deallocate(T* p, std::size_t) noexcept {
    ::operator delete(p, std::align_val_t(Align));
  }
  template <typename U> struct rebind {
    using other = AlignedAllocator<U, Align>;
  };
  bool operator==(const AlignedAllocator&) const noexcept { return true; }
  bool operator!=(const AlignedAllocator&) const noexcept { return false; }
};

/* Dense row-major N-d array. A rank-0 tensor holds exactly one element
   (the empty product of extents). */
template <typename T> class Tensor {
public:
  using Storage = std::vector<T, AlignedAllocator<T>>;

  Tensor() : dims_{}, data_(1, T{}) {}

  explicit Tensor(std::vector<std::size_t> dims)
      : dims_(std::move(dims)), data_(checked_numel(dims_), T{}) {}

  Tensor(std::vector<std::size_t> dims, Storage data)
      : dims_(std::move(dims)), data_(std::move(data)) {
    if (data_.size() != checked_numel(dims_))
      throw std::invalid_argument("Tensor: data length does not match dims");
  }

  static Tensor full(std::vector<std::size_t> dims, T value) {
    Tensor t(std::move(dims));
    for (auto& v : t.data_) v = value;
    return t;
  }

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t rank() const { return dims_.size(); }
  std::size_t numel() const { return data_.size(); }
  std::size_t dim(std::size_t i) const { return dims_.at(i); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  Storage& storage() { return data_; }
  const Storage& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at2(std::size_t i, std::size_t j) { return data_[i * dims_[1] + j]; }
  const T& at2(std::size_t i, std::size_t j) const {
    return data_[i * dims_[1] + j];
  }
  T& at3(std::size_t c, std::size_t i, std::size_t j) {
    return data_[(c * dims_[1] + i) * dims_[2] + j];
  }
  const T& at3(std::size_t c, std::size_t i, std::size_t j) const {
    return data_[(c * dims_[1] + i) * dims_[2] + j];
  }

  bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }

private:
  static std::size_t checked_numel(const std::vector<std::size_t>& dims) {
    std::size_t n = 1;
    for (std::size_t d : dims) {
      if (d == 0) throw std::invalid_argument("Tensor: zero extent");
      if (d > (std::size_t(1) << 48) / n)
        throw std::invalid_argument("Tensor: extent overflow");
      n *= d;
    }
    return n;
  }

  std::vector<std::size_t> dims_;
  Storage data_;
};

using RealTensor = Tensor<float>;
using ComplexTensor = Tensor<std::complex<float>>;

// Accumulations below run in double regardless of the element type.

template <typename T>
double norm2_sq(const Tensor<T>& t) {
  double s = 0;
  for (std::size_t i = 0; i < t.numel(); ++i) {
    if constexpr (scalar_traits<T>::is_complex)
      s += double(t[i].real()) * t[i].real() + double(t[i].imag()) * t[i].imag();
    else
      s += double(t[i]) * t[i];
  }
  return s;
}

template <typename T>
double norm2(const Tensor<T>& t) {
  return std::sqrt(norm2_sq(t));
}

/* Standard complex inner product <a,b> = sum conj(a_i) b_i. */
template <typename T>
std::complex<double> cdot(const Tensor<std::complex<T>>& a,
                          const Tensor<std::complex<T>>& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("cdot: shape mismatch");
  std::complex<double> s{0, 0};
  for (std::size_t i = 0; i < a.numel(); ++i)
    s += std::conj(std::complex<double>(a[i])) * std::complex<double>(b[i]);
  return s;
}

template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("dot: shape mismatch");
  double s = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += double(a[i]) * double(b[i]);
  return s;
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (std::size_t i = 0; i < t.numel(); ++i) {
    if constexpr (scalar_traits<T>::is_complex) {
      if (!std::isfinite(t[i].real()) || !std::isfinite(t[i].imag()))
        return false;
    } else {
      if (!std::isfinite(t[i])) return false;
    }
  }
  return true;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("max_abs_diff: shape mismatch");
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    m = std::max(m, double(std::abs(a[i] - b[i])));
  return m;
}

/* Relative l2 distance ||a-b|| / max(||b||, tiny). */
template <typename T>
double rel_error(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("rel_error: shape mismatch");
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    double d = std::abs(std::complex<double>(a[i]) - std::complex<double>(b[i]));
    num += d * d;
    den += std::norm(std::complex<double>(b[i]));
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

template <typename Dst, typename Src>
Tensor<Dst> tensor_cast(const Tensor<Src>& t) {
  Tensor<Dst> out(t.dims());
  for (std::size_t i = 0; i < t.numel(); ++i) out[i] = Dst(t[i]);
  return out;
}

template <typename T>
Tensor<std::complex<T>> to_complex(const Tensor<T>& t) {
  Tensor<std::complex<T>> out(t.dims());
  for (std::size_t i = 0; i < t.numel(); ++i) out[i] = {t[i], T(0)};
  return out;
}

template <typename T>
Tensor<typename scalar_traits<T>::real_type> magnitude(const Tensor<T>& t) {
  Tensor<typename scalar_traits<T>::real_type> out(t.dims());
  for (std::size_t i = 0; i < t.numel(); ++i) out[i] = std::abs(t[i]);
  return out;
}

}  // namespace selfscore
