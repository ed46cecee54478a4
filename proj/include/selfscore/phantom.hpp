// Copyright (C) 2026 The selfscore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <vector>

#include "selfscore/mri.hpp"
#include "selfscore/random.hpp"
#include "selfscore/tensor.hpp"

namespace selfscore {

struct PhantomSpec {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t ellipses = 8;
  float intensity_lo = 0.4f;
  float intensity_hi = 1.0f;
  float phase_roughness = 0.3f;
};

/* Sum of randomly placed ellipses with random complex amplitudes and a
   smooth low-frequency phase field, normalized to max magnitude 1. */
template <typename T = float>
Tensor<std::complex<T>> gen_phantom(const PhantomSpec& spec, RandomStream stream) {
  if (spec.height < 8 || spec.width < 8)
    throw std::invalid_argument("gen_phantom: extents must be at least 8");
  if (!(spec.intensity_lo < spec.intensity_hi))
    throw std::invalid_argument("gen_phantom: intensity range empty");
  const std::size_t h = spec.height, w = spec.width;
  Tensor<std::complex<T>> img({h, w});

  for (std::size_t e = 0; e < spec.ellipses; ++e) {
    const double cy = (0.2 + 0.6 * stream.uniform()) * double(h);
    const double cx = (0.2 + 0.6 * stream.uniform()) * double(w);
    const double ry = (0.06 + 0.22 * stream.uniform()) * double(h);
    const double rx = (0.06 + 0.22 * stream.uniform()) * double(w);
    const double ang = 2.0 * 3.14159265358979323846 * stream.uniform();
    const double mag = spec.intensity_lo +
                       (spec.intensity_hi - spec.intensity_lo) * stream.uniform();
    const double ph = 2.0 * 3.14159265358979323846 * stream.uniform();
    const std::complex<double> amp = std::polar(mag, ph);
    const double ca = std::cos(ang), sa = std::sin(ang);
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const double dy = double(i) - cy, dx = double(j) - cx;
        const double u = (ca * dx + sa * dy) / rx;
        const double v = (-sa * dx + ca * dy) / ry;
        if (u * u + v * v <= 1.0) {
          auto& p = img.at2(i, j);
          p = std::complex<T>(std::complex<double>(p) + amp);
        }
      }
  }

  // Low-frequency phase modulation from a few random sinusoids.
  struct Wave { double fy, fx, ph, a; };
  std::vector<Wave> waves;
  for (int k = 0; k < 3; ++k) {
    Wave ww;
    ww.fy = (stream.uniform() * 2.0 - 1.0) * 2.0 / double(h);
    ww.fx = (stream.uniform() * 2.0 - 1.0) * 2.0 / double(w);
    ww.ph = 2.0 * 3.14159265358979323846 * stream.uniform();
    ww.a = stream.uniform();
    waves.push_back(ww);
  }
  if (spec.phase_roughness > 0) {
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        double phi = 0;
        for (const auto& ww : waves)
          phi += ww.a * std::sin(2.0 * 3.14159265358979323846 *
                                     (ww.fy * double(i) + ww.fx * double(j)) +
                                 ww.ph);
        phi *= double(spec.phase_roughness);
        const std::complex<double> rot(std::cos(phi), std::sin(phi));
        img.at2(i, j) = std::complex<T>(std::complex<double>(img.at2(i, j)) * rot);
      }
  }

  double mx = 0;
  for (std::size_t i = 0; i < img.numel(); ++i)
    mx = std::max(mx, double(std::abs(img[i])));
  if (mx > 0) {
    const double inv = 1.0 / mx;
    for (std::size_t i = 0; i < img.numel(); ++i)
      img[i] = std::complex<T>(std::complex<double>(img[i]) * inv);
  }
  return img;
}

/* Smooth complex Gaussian-bump coil profiles with distinct centers placed
   on a circle, normalized per pixel so sum_c |S_c|^2 = 1. */
template <typename T = float>
CoilSensitivitiesT<T> gen_coil_maps(std::size_t coils, std::size_t h,
                                    std::size_t w, RandomStream stream) {
  if (coils < 1) throw std::invalid_argument("gen_coil_maps: need at least one coil");
  CoilSensitivitiesT<T> sens;
  sens.maps = Tensor<std::complex<T>>({coils, h, w});
  const double radius = 0.45 * double(std::min(h, w));
  const double spread = 0.6 * double(std::min(h, w));
  const double base_ang = 2.0 * 3.14159265358979323846 * stream.uniform();
  for (std::size_t c = 0; c < coils; ++c) {
    const double ang = base_ang + 2.0 * 3.14159265358979323846 * double(c) / double(coils);
    const double cy = double(h) / 2.0 + radius * std::sin(ang);
    const double cx = double(w) / 2.0 + radius * std::cos(ang);
    const double ph0 = 2.0 * 3.14159265358979323846 * stream.uniform();
    const double phy = 0.5 * (stream.uniform() - 0.5) / double(h);
    const double phx = 0.5 * (stream.uniform() - 0.5) / double(w);
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const double dy = double(i) - cy, dx = double(j) - cx;
        const double mag = std::exp(-(dy * dy + dx * dx) / (2.0 * spread * spread));
        const double phi = ph0 + 2.0 * 3.14159265358979323846 *
                                     (phy * double(i) + phx * double(j));
        sens.maps.at3(c, i, j) =
            std::complex<T>(std::polar(mag, phi));
      }
  }
  for (std::size_t i = 0; i < h * w; ++i) {
    double s = 0;
    for (std::size_t c = 0; c < coils; ++c)
      s += std::norm(std::complex<double>(sens.maps[c * h * w + i]));
    const double inv = 1.0 / std::sqrt(s);  // Gaussian bumps never vanish
    for (std::size_t c = 0; c < coils; ++c)
      sens.maps[c * h * w + i] =
          std::complex<T>(std::complex<double>(sens.maps[c * h * w + i]) * inv);
  }
  return sens;
}

template <typename T = float> struct DatasetRecord {
  Tensor<std::complex<T>> truth;  // [H,W]
  CoilSensitivitiesT<T> sens;
  PairedMeasurementT<T> pair;
};

struct DatasetParams {
  PhantomSpec phantom;
  std::size_t coils = 4;
  MaskKind mask_kind = MaskKind::random;
  std::size_t acceleration = 4;
  std::size_t acs = 8;
  float noise_scale = 0.01f;
  double keep_fraction = 0.7;
};

/* n records, each a fresh phantom measured through apply_A with a fresh
   mask instance, noised, and further subsampled into a training pair.
   Coil maps are generated once and shared across records. Stream ids:
   maps=0, record r uses 1+3r (phantom), 2+3r (mask), 3+3r (noise/pair). */
template <typename T = float>
std::vector<DatasetRecord<T>> build_dataset(std::size_t n,
                                            const DatasetParams& p,
                                            std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("build_dataset: need at least one record");
  std::vector<DatasetRecord<T>> out;
  out.reserve(n);
  CoilSensitivitiesT<T> sens = gen_coil_maps<T>(
      p.coils, p.phantom.height, p.phantom.width, RandomStream(seed, 0));
  for (std::size_t r = 0; r < n; ++r) {
    DatasetRecord<T> rec;
    rec.truth = gen_phantom<T>(p.phantom, RandomStream(seed, 1 + 3 * r));
    rec.sens = sens;
    SamplingMask mask = gen_mask(p.mask_kind, p.phantom.width, p.acceleration,
                                 p.acs, RandomStream(seed, 2 + 3 * r));
    MultiCoilKSpaceT<T> y;
    y.data = apply_A(rec.truth, sens, mask);
    y.mask = mask;
    y.noise_scale = T(0);
    RandomStream noise_stream(seed, 3 + 3 * r);
    y = add_noise(y, T(p.noise_scale), noise_stream);
    noise_stream.counter += 1u << 20;  // disjoint draws for the subsample
    rec.pair = derive_pair_subsample(y, p.keep_fraction, p.acs, noise_stream);
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace selfscore
