// Copyright (C) 2026 The selfscore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <complex>
#include <stdexcept>
#include <vector>

#include "selfscore/tensor.hpp"

namespace selfscore {
namespace detail {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

/* In-place iterative radix-2 transform (unnormalized). */
inline void fft_pow2(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * 3.14159265358979323846 / double(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

/* O(n^2) fallback for non-power-of-two extents (unnormalized). */
inline void dft_naive(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  std::vector<std::complex<double>> out(n);
  const double sgn = inverse ? 2.0 : -2.0;
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> s{0, 0};
    for (std::size_t t = 0; t < n; ++t) {
      double ang = sgn * 3.14159265358979323846 * double((k * t) % n) / double(n);
      s += a[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = s;
  }
  a.swap(out);
}

inline void fft_1d(std::vector<std::complex<double>>& a, bool inverse) {
  if (is_pow2(a.size()))
    fft_pow2(a, inverse);
  else
    dft_naive(a, inverse);
}

/* Centered orthonormal 2-D transform on a double buffer of shape h x w.
   The DC component sits at (h/2, w/2): ifftshift before the core
   transform, fftshift after, 1/sqrt(hw) scaling in both directions. */
inline void fft2c_core(std::vector<std::complex<double>>& buf, std::size_t h,
                       std::size_t w, bool inverse) {
  std::vector<std::complex<double>> line;
  std::vector<std::complex<double>> tmp(buf.size());

  // ifftshift: out[j] = in[(j + floor(n/2)) mod n] along both axes
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      tmp[i * w + j] = buf[((i + h / 2) % h) * w + ((j + w / 2) % w)];

  line.resize(w);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) line[j] = tmp[i * w + j];
    fft_1d(line, inverse);
    for (std::size_t j = 0; j < w; ++j) tmp[i * w + j] = line[j];
  }
  line.resize(h);
  for (std::size_t j = 0; j < w; ++j) {
    for (std::size_t i = 0; i < h; ++i) line[i] = tmp[i * w + j];
    fft_1d(line, inverse);
    for (std::size_t i = 0; i < h; ++i) tmp[i * w + j] = line[i];
  }

  const double scale = 1.0 / std::sqrt(double(h) * double(w));
  // fftshift: out[j] = in[(j + ceil(n/2)) mod n]
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      buf[i * w + j] =
          tmp[((i + (h + 1) / 2) % h) * w + ((j + (w + 1) / 2) % w)] * scale;
}

template <typename T>
Tensor<std::complex<T>> fft2c_impl(const Tensor<std::complex<T>>& x,
                                   bool inverse, const char* name) {
  if (x.rank() != 2)
    throw std::invalid_argument(std::string(name) + ": expected a 2-D tensor");
  const std::size_t h = x.dim(0), w = x.dim(1);
  std::vector<std::complex<double>> buf(h * w);
  for (std::size_t i = 0; i < h * w; ++i)
    buf[i] = std::complex<double>(x[i]);
  fft2c_core(buf, h, w, inverse);
  Tensor<std::complex<T>> out({h, w});
  for (std::size_t i = 0; i < h * w; ++i)
    out[i] = {T(buf[i].real()), T(buf[i].imag())};
  return out;
}

}  // namespace detail

/* image -> k-space, unitary. */
template <typename T>
Tensor<std::complex<T>> fft2c(const Tensor<std::complex<T>>& img) {
  return detail::fft2c_impl(img, false, "fft2c");
}

/* k-space -> image, exact inverse of fft2c. */
template <typename T>
Tensor<std::complex<T>> ifft2c(const Tensor<std::complex<T>>& ksp) {
  return detail::fft2c_impl(ksp, true, "ifft2c");
}

}  // namespace selfscore
