// Copyright (C) 2026 The selfscore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>

#include "selfscore/tensor.hpp"

namespace selfscore {

namespace detail {
/* splitmix64 finalizer; a bijective 64-bit mix with full avalanche. */
inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace detail

/* Counter-based random stream: every draw is a pure hash of
   (seed, stream_id, counter), so replaying a stream from the same state
   reproduces the sequence bit-exactly under any evaluation order. */
struct RandomStream {
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
  std::uint64_t counter = 0;

  RandomStream() = default;
  RandomStream(std::uint64_t seed_, std::uint64_t stream_id_ = 0,
               std::uint64_t counter_ = 0)
      : seed(seed_), stream_id(stream_id_), counter(counter_) {}

  /* Derived stream with an independent id; does not disturb this stream. */
  RandomStream substream(std::uint64_t id) const {
    return RandomStream(seed, detail::mix64(stream_id + 0x9e3779b97f4a7c15ULL) ^ id);
  }

  std::uint64_t next_u64() {
    std::uint64_t h = detail::mix64(seed + 0x9e3779b97f4a7c15ULL);
    h = detail::mix64(h ^ (stream_id + 0xbf58476d1ce4e5b9ULL));
    h = detail::mix64(h ^ counter);
    ++counter;
    return h;
  }

  /* Uniform on [0,1) with 53 random bits. */
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  /* Uniform on (0,1]; safe as a log argument. */
  double uniform_pos() { return double((next_u64() >> 11) + 1) * 0x1.0p-53; }

  /* Standard normal via Box-Muller (cosine branch; two draws consumed). */
  double normal() {
    double u1 = uniform_pos();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  /* Complex with independent N(0,1) real and imaginary parts. */
  std::complex<double> cnormal() {
    double re = normal();
    double im = normal();
    return {re, im};
  }
};

template <typename T>
Tensor<T> gaussian_real(RandomStream& rs, std::vector<std::size_t> dims) {
  Tensor<T> t(std::move(dims));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = T(rs.normal());
  return t;
}

template <typename T>
Tensor<std::complex<T>> gaussian_complex(RandomStream& rs,
                                         std::vector<std::size_t> dims) {
  Tensor<std::complex<T>> t(std::move(dims));
  for (std::size_t i = 0; i < t.numel(); ++i) {
    double re = rs.normal();
    double im = rs.normal();
    t[i] = {T(re), T(im)};
  }
  return t;
}

/* Deterministic in-place Fisher-Yates shuffle. */
template <typename V>
void shuffle(V& v, RandomStream& rs) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = std::size_t(rs.next_u64() % i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace selfscore
