// Copyright (C) 2026 The selfscore authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "selfscore/fft.hpp"
#include "selfscore/random.hpp"
#include "selfscore/tensor.hpp"

using namespace selfscore;

TEST_CASE("tensor invariants") {
  Tensor<float> t({2, 3});
  REQUIRE(t.numel() == 6);
  REQUIRE_THROWS_AS(Tensor<float>({2, 0}), std::invalid_argument);
  Tensor<float> scalar;  // rank 0, one element
  REQUIRE(scalar.numel() == 1);
  REQUIRE(scalar.rank() == 0);
}

TEST_CASE("random stream reproducibility") {
  RandomStream a(7, 0), b(7, 0);
  for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());

  RandomStream c(7, 0);
  auto d1 = gaussian_complex<float>(c, {4, 4});
  RandomStream c2(7, 0);
  auto d2 = gaussian_complex<float>(c2, {4, 4});
  for (std::size_t i = 0; i < d1.numel(); ++i) REQUIRE(d1[i] == d2[i]);

  // replay from a saved state
  RandomStream e(3, 5);
  e.normal();
  RandomStream saved = e;
  double x1 = e.normal();
  double x2 = saved.normal();
  REQUIRE(x1 == x2);
}

TEST_CASE("random stream moments", "[stat]") {
  RandomStream rs(2026, 1);
  const int n = 1000000;
  double sum = 0, sumsq = 0;
  for (int i = 0; i < n; ++i) {
    double v = rs.normal();
    sum += v;
    sumsq += v * v;
  }
  double mean = sum / n;
  double var = sumsq / n - mean * mean;
  REQUIRE(std::abs(mean) < 0.01);
  REQUIRE(std::abs(var - 1.0) < 0.01);
}

TEST_CASE("distinct streams are uncorrelated", "[stat]") {
  RandomStream a(11, 0), b(11, 1);
  const int n = 100000;
  double sab = 0, sa = 0, sb = 0, saa = 0, sbb = 0;
  for (int i = 0; i < n; ++i) {
    double x = a.normal(), y = b.normal();
    sab += x * y;
    sa += x;
    sb += y;
    saa += x * x;
    sbb += y * y;
  }
  double cov = sab / n - (sa / n) * (sb / n);
  double corr = cov / std::sqrt((saa / n - sa / n * sa / n) * (sbb / n - sb / n * sb / n));
  REQUIRE(std::abs(corr) < 0.01);
}

TEST_CASE("fft2c of centered impulse is flat") {
  ComplexTensor x({4, 4});
  x.at2(2, 2) = {1.0f, 0.0f};
  auto k = fft2c(x);
  for (std::size_t i = 0; i < k.numel(); ++i) {
    REQUIRE(k[i].real() == Catch::Approx(0.25).margin(1e-7));
    REQUIRE(k[i].imag() == Catch::Approx(0.0).margin(1e-7));
  }
  // and back
  auto x2 = ifft2c(ComplexTensor::full({4, 4}, {0.25f, 0.0f}));
  REQUIRE(std::abs(x2.at2(2, 2) - std::complex<float>(1.f, 0.f)) < 1e-6);
  for (std::size_t i = 0; i < x2.numel(); ++i)
    if (i != 2 * 4 + 2) REQUIRE(std::abs(x2[i]) < 1e-6);
}

TEST_CASE("fft2c unitarity and inversion") {
  RandomStream rs(5, 0);
  for (auto hw : {std::pair<std::size_t, std::size_t>{8, 8},
                  {16, 16},
                  {32, 32},
                  {6, 10},   // non power of two path
                  {9, 7}}) {
    auto x = gaussian_complex<float>(rs, {hw.first, hw.second});
    auto k = fft2c(x);
    REQUIRE(std::abs(norm2(k) - norm2(x)) <= 1e-6 * norm2(x));
    auto back = ifft2c(k);
    REQUIRE(rel_error(back, x) <= 1e-6);
    auto k2 = fft2c(ifft2c(k));
    REQUIRE(rel_error(k2, k) <= 1e-6);
  }
}

TEST_CASE("fft2c of zero is zero") {
  ComplexTensor z({16, 16});
  auto k = ifft2c(z);
  for (std::size_t i = 0; i < k.numel(); ++i) REQUIRE(std::abs(k[i]) == 0.0f);
}

TEST_CASE("fft2c rejects non-2D input") {
  Tensor<std::complex<float>> bad({2, 3, 4});
  REQUIRE_THROWS_AS(fft2c(bad), std::invalid_argument);
  REQUIRE_THROWS_AS(ifft2c(Tensor<std::complex<float>>({5})), std::invalid_argument);
}
