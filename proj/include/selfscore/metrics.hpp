// Copyright (C) 2026 The selfscore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "selfscore/tensor.hpp"

namespace selfscore {

struct MetricsReport {
  double nmse = 0;
  double psnr_db = 0;
  double ssim = 0;
};

struct AggregateMetrics {
  std::vector<MetricsReport> slices;
  MetricsReport mean;
  MetricsReport stddev;
};

namespace metrics_detail {

/* 11x11 Gaussian window, sigma 1.5, normalized to unit sum. */
inline const std::vector<double>& ssim_window() {
  static const std::vector<double> w = [] {
    std::vector<double> v(11 * 11);
    double sum = 0;
    for (int i = 0; i < 11; ++i)
      for (int j = 0; j < 11; ++j) {
        const double dy = i - 5, dx = j - 5;
        v[std::size_t(i) * 11 + std::size_t(j)] =
            std::exp(-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5));
        sum += v[std::size_t(i) * 11 + std::size_t(j)];
      }
    for (auto& x : v) x /= sum;
    return v;
  }();
  return w;
}

}  // namespace metrics_detail

/* Mean SSIM over the valid (fully covered) window positions, with
   K1 = 0.01, K2 = 0.03 and the given dynamic range. */
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, double dynamic_range) {
  if (!a.same_shape(b)) throw std::invalid_argument("ssim: shape mismatch");
  if (a.rank() != 2) throw std::invalid_argument("ssim: expected 2-D images");
  const std::size_t h = a.dim(0), w = a.dim(1);
  if (h < 11 || w < 11)
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  const auto& win = metrics_detail::ssim_window();
  const double c1 = (0.01 * dynamic_range) * (0.01 * dynamic_range);
  const double c2 = (0.03 * dynamic_range) * (0.03 * dynamic_range);
  double acc = 0;
  std::size_t count = 0;
  for (std::size_t y = 0; y + 11 <= h; ++y)
    for (std::size_t x = 0; x + 11 <= w; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (std::size_t i = 0; i < 11; ++i)
        for (std::size_t j = 0; j < 11; ++j) {
          const double wt = win[i * 11 + j];
          const double va = double(a.at2(y + i, x + j));
          const double vb = double(b.at2(y + i, x + j));
          ma += wt * va;
          mb += wt * vb;
          saa += wt * va * va;
          sbb += wt * vb * vb;
          sab += wt * va * vb;
        }
      const double va = saa - ma * ma;
      const double vb = sbb - mb * mb;
      const double cov = sab - ma * mb;
      acc += ((2 * ma * mb + c1) * (2 * cov + c2)) /
             ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return acc / double(count);
}

/* nmse = ||recon - ref||^2/||ref||^2; psnr = 10 log10(max(ref)^2/mse)
   (+inf for an exact match); ssim as above with range max(ref). */
template <typename T>
MetricsReport evaluate(const Tensor<T>& recon, const Tensor<T>& ref) {
  if (!recon.same_shape(ref))
    throw std::invalid_argument("evaluate: shape mismatch");
  double err = 0, ref_sq = 0, ref_max = 0;
  for (std::size_t i = 0; i < ref.numel(); ++i) {
    const double d = double(recon[i]) - double(ref[i]);
    err += d * d;
    ref_sq += double(ref[i]) * double(ref[i]);
    ref_max = std::max(ref_max, double(ref[i]));
  }
  if (ref_sq == 0)
    throw std::invalid_argument("evaluate: reference is all zero (NMSE undefined)");
  MetricsReport r;
  r.nmse = err / ref_sq;
  const double mse = err / double(ref.numel());
  r.psnr_db = mse == 0 ? std::numeric_limits<double>::infinity()
                       : 10.0 * std::log10(ref_max * ref_max / mse);
  r.ssim = ssim(recon, ref, ref_max);
  return r;
}

inline AggregateMetrics aggregate(std::vector<MetricsReport> slices) {
  AggregateMetrics agg;
  agg.slices = std::move(slices);
  const double n = double(agg.slices.size());
  for (const auto& s : agg.slices) {
    agg.mean.nmse += s.nmse / n;
    agg.mean.psnr_db += s.psnr_db / n;
    agg.mean.ssim += s.ssim / n;
  }
  for (const auto& s : agg.slices) {
    agg.stddev.nmse += (s.nmse - agg.mean.nmse) * (s.nmse - agg.mean.nmse) / n;
    agg.stddev.psnr_db +=
        (s.psnr_db - agg.mean.psnr_db) * (s.psnr_db - agg.mean.psnr_db) / n;
    agg.stddev.ssim += (s.ssim - agg.mean.ssim) * (s.ssim - agg.mean.ssim) / n;
  }
  agg.stddev.nmse = std::sqrt(agg.stddev.nmse);
  agg.stddev.psnr_db = std::sqrt(agg.stddev.psnr_db);
  agg.stddev.ssim = std::sqrt(agg.stddev.ssim);
  return agg;
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median: empty");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/* CSV rows slice,nmse,psnr,ssim plus a final aggregate row of means. */
inline std::string metrics_csv(const AggregateMetrics& agg) {
  std::string out = "slice,nmse,psnr,ssim\n";
  char buf[128];
  for (std::size_t i = 0; i < agg.slices.size(); ++i) {
    const auto& s = agg.slices[i];
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g\n", i, s.nmse, s.psnr_db,
                  s.ssim);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "aggregate,%.9g,%.9g,%.9g\n", agg.mean.nmse,
                agg.mean.psnr_db, agg.mean.ssim);
  out += buf;
  return out;
}

}  // namespace selfscore
