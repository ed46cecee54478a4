// Copyright (C) 2026 The selfscore authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "selfscore/metrics.hpp"
#include "selfscore/random.hpp"

using namespace selfscore;

TEST_CASE("evaluate on an exact match") {
  RandomStream rs(1, 0);
  auto ref = gaussian_real<float>(rs, {16, 16});
  for (std::size_t i = 0; i < ref.numel(); ++i) ref[i] = std::abs(ref[i]);
  auto r = evaluate(ref, ref);
  REQUIRE(r.nmse == 0.0);
  REQUIRE(std::isinf(r.psnr_db));
  REQUIRE(r.ssim == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("nmse scale law") {
  RandomStream rs(2, 0);
  auto ref = gaussian_real<float>(rs, {16, 16});
  for (float alpha : {1.1f, 0.7f, 2.0f}) {
    Tensor<float> recon(ref.dims());
    for (std::size_t i = 0; i < ref.numel(); ++i) recon[i] = alpha * ref[i];
    auto r = evaluate(recon, ref);
    REQUIRE(r.nmse == Catch::Approx(double(alpha - 1.0f) * double(alpha - 1.0f))
                          .epsilon(1e-5));
  }
}

TEST_CASE("psnr example at 20 dB") {
  // max(ref) = 1 and mse = 0.01 -> psnr = 10 log10(1/0.01) = 20
  const std::size_t n = 16;
  Tensor<float> ref({n, n}), recon({n, n});
  for (std::size_t i = 0; i < ref.numel(); ++i) ref[i] = 0.5f;
  ref[0] = 1.0f;
  for (std::size_t i = 0; i < recon.numel(); ++i) recon[i] = ref[i] + 0.1f;
  auto r = evaluate(recon, ref);
  REQUIRE(r.psnr_db == Catch::Approx(20.0).epsilon(1e-6));
}

TEST_CASE("evaluate error paths") {
  Tensor<float> a({16, 16}), b({16, 8});
  REQUIRE_THROWS_AS(evaluate(a, b), std::invalid_argument);
  Tensor<float> zero({16, 16}), recon({16, 16});
  recon[0] = 1.0f;
  REQUIRE_THROWS_AS(evaluate(recon, zero), std::invalid_argument);
}

TEST_CASE("ssim symmetry with a fixed dynamic range") {
  RandomStream rs(3, 0);
  auto a = gaussian_real<float>(rs, {20, 20});
  auto b = gaussian_real<float>(rs, {20, 20});
  for (std::size_t i = 0; i < a.numel(); ++i) {
    a[i] = std::abs(a[i]);
    b[i] = std::abs(b[i]);
  }
  REQUIRE(ssim(a, b, 2.0) == Catch::Approx(ssim(b, a, 2.0)).epsilon(1e-12));
}

TEST_CASE("ssim degrades monotonically with noise", "[stat]") {
  RandomStream rs(4, 0);
  Tensor<float> ref({24, 24});
  for (std::size_t i = 0; i < ref.numel(); ++i) {
    const double y = double(i / 24), x = double(i % 24);
    ref[i] = float(std::sin(x / 4.0) * std::cos(y / 5.0) + 1.5);
  }
  double prev = 1.0;
  for (double noise : {0.05, 0.2, 0.6}) {
    Tensor<float> recon(ref.dims());
    RandomStream rs2(4, 1);
    for (std::size_t i = 0; i < ref.numel(); ++i)
      recon[i] = ref[i] + float(noise * rs2.normal());
    const double s = ssim(recon, ref, 2.5);
    REQUIRE(s < prev);
    prev = s;
  }
}

TEST_CASE("aggregate and csv") {
  std::vector<MetricsReport> slices{{0.01, 20.0, 0.9}, {0.03, 26.0, 0.8}};
  auto agg = aggregate(slices);
  REQUIRE(agg.mean.nmse == Catch::Approx(0.02));
  REQUIRE(agg.mean.psnr_db == Catch::Approx(23.0));
  REQUIRE(agg.stddev.psnr_db == Catch::Approx(3.0));
  auto csv = metrics_csv(agg);
  REQUIRE(csv.find("slice,nmse,psnr,ssim\n") == 0);
  REQUIRE(csv.find("aggregate,0.02,23,") != std::string::npos);
  REQUIRE(median({3.0, 1.0, 2.0}) == 2.0);
  REQUIRE(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
}
