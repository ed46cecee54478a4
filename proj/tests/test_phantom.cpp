// Copyright (C) 2026 The selfscore authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "selfscore/phantom.hpp"

using namespace selfscore;

TEST_CASE("gen_phantom basics") {
  PhantomSpec spec{16, 16, 0, 0.4f, 1.0f, 0.2f};
  auto zero = gen_phantom<float>(spec, RandomStream(1, 0));
  for (std::size_t i = 0; i < zero.numel(); ++i) REQUIRE(zero[i] == std::complex<float>{});

  spec.ellipses = 6;
  auto img = gen_phantom<float>(spec, RandomStream(1, 1));
  double mx = 0;
  for (std::size_t i = 0; i < img.numel(); ++i) mx = std::max(mx, double(std::abs(img[i])));
  REQUIRE(mx == Catch::Approx(1.0).margin(1e-6));

  auto again = gen_phantom<float>(spec, RandomStream(1, 1));
  for (std::size_t i = 0; i < img.numel(); ++i) REQUIRE(img[i] == again[i]);

  REQUIRE_THROWS_AS(gen_phantom<float>({4, 16, 1, 0.4f, 1.0f, 0.1f}, RandomStream(0, 0)),
                    std::invalid_argument);
}

TEST_CASE("gen_coil_maps normalization") {
  auto sens = gen_coil_maps<float>(5, 12, 20, RandomStream(2, 0));
  for (std::size_t i = 0; i < 12 * 20; ++i) {
    double s = 0;
    for (std::size_t c = 0; c < 5; ++c)
      s += std::norm(std::complex<double>(sens.maps[c * 12 * 20 + i]));
    REQUIRE(s == Catch::Approx(1.0).margin(1e-6));
  }

  auto one = gen_coil_maps<float>(1, 8, 8, RandomStream(2, 1));
  for (std::size_t i = 0; i < 64; ++i)
    REQUIRE(std::abs(one.maps[i]) == Catch::Approx(1.0).margin(1e-6));

  auto again = gen_coil_maps<float>(5, 12, 20, RandomStream(2, 0));
  for (std::size_t i = 0; i < sens.maps.numel(); ++i)
    REQUIRE(sens.maps[i] == again.maps[i]);
}

TEST_CASE("build_dataset") {
  DatasetParams p;
  p.phantom = PhantomSpec{16, 16, 4, 0.4f, 1.0f, 0.2f};
  p.coils = 2;
  p.acs = 4;

  SECTION("noise free full mask reproduces the truth") {
    DatasetParams q = p;
    q.mask_kind = MaskKind::uniform;
    q.acceleration = 1;
    q.noise_scale = 0.0f;
    q.keep_fraction = 1.0;
    auto recs = build_dataset<float>(1, q, 99);
    auto rec = recs.at(0);
    auto zf = zero_filled_combine(rec.pair.y, rec.sens);
    REQUIRE(rel_error(zf, rec.truth) < 1e-5);
  }

  SECTION("records satisfy pair invariants and masks vary") {
    p.mask_kind = MaskKind::random;
    p.acceleration = 2;
    auto recs = build_dataset<float>(4, p, 7);
    bool any_mask_differs = false;
    for (const auto& r : recs) {
      for (std::size_t j = 0; j < 16; ++j)
        if (r.pair.submask.sampled(j)) REQUIRE(r.pair.y.mask.sampled(j));
      for (std::size_t i = 0; i < r.pair.y.data.numel(); ++i) {
        std::size_t j = i % 16;
        if (r.pair.submask.sampled(j))
          REQUIRE(r.pair.yprime.data[i] == r.pair.y.data[i]);
        else
          REQUIRE(r.pair.yprime.data[i] == std::complex<float>{});
      }
      if (r.pair.y.mask.lines != recs[0].pair.y.mask.lines) any_mask_differs = true;
    }
    REQUIRE(any_mask_differs);
  }

  SECTION("determinism") {
    auto a = build_dataset<float>(3, p, 123);
    auto b = build_dataset<float>(3, p, 123);
    for (std::size_t r = 0; r < 3; ++r) {
      for (std::size_t i = 0; i < a[r].truth.numel(); ++i)
        REQUIRE(a[r].truth[i] == b[r].truth[i]);
      for (std::size_t i = 0; i < a[r].pair.y.data.numel(); ++i)
        REQUIRE(a[r].pair.y.data[i] == b[r].pair.y.data[i]);
      REQUIRE(a[r].pair.submask.lines == b[r].pair.submask.lines);
    }
  }
}
