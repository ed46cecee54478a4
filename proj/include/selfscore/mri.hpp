// Copyright (C) 2026 The selfscore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "selfscore/fft.hpp"
#include "selfscore/random.hpp"
#include "selfscore/tensor.hpp"

namespace selfscore {

enum class MaskKind { uniform, random, gaussian_pair };

inline const char* to_string(MaskKind k) {
  switch (k) {
    case MaskKind::uniform: return "uniform";
    case MaskKind::random: return "random";
    case MaskKind::gaussian_pair: return "gaussian-pair";
  }
  return "?";
}

/* Cartesian 1-D undersampling pattern over phase-encode columns. */
struct SamplingMask {
  std::vector<std::uint8_t> lines;  // length W, 0/1 per column
  MaskKind kind = MaskKind::uniform;
  double acceleration = 1.0;

  std::size_t width() const { return lines.size(); }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : lines) n += v != 0;
    return n;
  }
  bool sampled(std::size_t col) const { return lines[col] != 0; }

  std::string to_text() const {
    std::string s;
    s.reserve(lines.size() + 1);
    for (auto v : lines) s.push_back(v ? '1' : '0');
    s.push_back('\n');
    return s;
  }

  static SamplingMask from_text(const std::string& text,
                                MaskKind kind = MaskKind::uniform) {
    SamplingMask m;
    m.kind = kind;
    for (char c : text) {
      if (c == '0') m.lines.push_back(0);
      else if (c == '1') m.lines.push_back(1);
      else if (c == '\n' || c == '\r') break;
      else throw std::invalid_argument("SamplingMask: invalid character in mask text");
    }
    if (m.count() == 0)
      throw std::invalid_argument("SamplingMask: no sampled lines");
    m.acceleration = double(m.width()) / double(m.count());
    return m;
  }
};

template <typename T> struct CoilSensitivitiesT {
  Tensor<std::complex<T>> maps;  // [C,H,W], per pixel sum_c |S_c|^2 = 1

  std::size_t coils() const { return maps.dim(0); }
  std::size_t height() const { return maps.dim(1); }
  std::size_t width() const { return maps.dim(2); }
};
using CoilSensitivities = CoilSensitivitiesT<float>;

template <typename T> struct MultiCoilKSpaceT {
  Tensor<std::complex<T>> data;  // [C,H,W], exactly zero on unsampled lines
  SamplingMask mask;
  T noise_scale = T(0);  // gamma, image-intensity units

  std::size_t coils() const { return data.dim(0); }
  std::size_t height() const { return data.dim(1); }
  std::size_t width() const { return data.dim(2); }
};
using MultiCoilKSpace = MultiCoilKSpaceT<float>;

template <typename T> struct PairedMeasurementT {
  MultiCoilKSpaceT<T> y;       // measurement
  MultiCoilKSpaceT<T> yprime;  // further subsample of y
  SamplingMask submask;        // pattern of yprime, subset of y.mask
};
using PairedMeasurement = PairedMeasurementT<float>;

namespace detail {

template <typename T>
void check_coil_shapes(const Tensor<std::complex<T>>& k,
                       const CoilSensitivitiesT<T>& sens,
                       const SamplingMask& mask, const char* name) {
  if (k.rank() != 3) throw std::invalid_argument(std::string(name) + ": expected [C,H,W]");
  if (!k.same_shape(sens.maps))
    throw std::invalid_argument(std::string(name) + ": coil/sensitivity shape mismatch");
  if (mask.width() != k.dim(2))
    throw std::invalid_argument(std::string(name) + ": mask width mismatch");
}

inline std::pair<std::size_t, std::size_t> acs_range(std::size_t w, std::size_t acs) {
  const std::size_t lo = w / 2 - acs / 2;
  return {lo, lo + acs};  // [lo, hi)
}

}  // namespace detail

/* A x = P F (S_c . x), per coil; zero on unsampled lines. */
template <typename T>
Tensor<std::complex<T>> apply_A(const Tensor<std::complex<T>>& x,
                                const CoilSensitivitiesT<T>& sens,
                                const SamplingMask& mask) {
  if (x.rank() != 2) throw std::invalid_argument("apply_A: expected [H,W] image");
  const std::size_t c = sens.coils(), h = sens.height(), w = sens.width();
  if (x.dim(0) != h || x.dim(1) != w || mask.width() != w)
    throw std::invalid_argument("apply_A: shape mismatch");
  Tensor<std::complex<T>> out({c, h, w});
  Tensor<std::complex<T>> coil({h, w});
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j)
        coil.at2(i, j) = sens.maps.at3(ci, i, j) * x.at2(i, j);
    auto k = fft2c(coil);
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j)
        out.at3(ci, i, j) = mask.sampled(j) ? k.at2(i, j) : std::complex<T>{};
  }
  return out;
}

/* A* k = sum_c conj(S_c) . F^-1 (P k_c); exact adjoint of apply_A. */
template <typename T>
Tensor<std::complex<T>> apply_Ah(const Tensor<std::complex<T>>& k,
                                 const CoilSensitivitiesT<T>& sens,
                                 const SamplingMask& mask) {
  detail::check_coil_shapes(k, sens, mask, "apply_Ah");
  const std::size_t c = sens.coils(), h = sens.height(), w = sens.width();
  Tensor<std::complex<T>> out({h, w});
  Tensor<std::complex<T>> coil({h, w});
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j)
        coil.at2(i, j) = mask.sampled(j) ? k.at3(ci, i, j) : std::complex<T>{};
    auto img = ifft2c(coil);
    for (std::size_t i = 0; i < h * w; ++i)
      out[i] += std::conj(sens.maps[ci * h * w + i]) * img[i];
  }
  return out;
}

/* Equispaced or variable-density Cartesian line mask with a centered ACS
   block. The random kind draws without replacement with weights from a
   truncated Gaussian over column index (sigma = W/4, centered at DC) until
   ceil(W/R) lines are selected in total. */
inline SamplingMask gen_mask(MaskKind kind, std::size_t w, std::size_t accel,
                             std::size_t acs, RandomStream stream) {
  if (accel < 1 || accel > w) throw std::invalid_argument("gen_mask: acceleration out of range");
  if (acs > w) throw std::invalid_argument("gen_mask: acs wider than k-space");
  SamplingMask m;
  m.kind = kind;
  m.lines.assign(w, 0);
  auto [acs_lo, acs_hi] = detail::acs_range(w, acs);
  for (std::size_t j = acs_lo; j < acs_hi; ++j) m.lines[j] = 1;

  if (kind == MaskKind::uniform || accel == 1) {
    for (std::size_t j = 0; j < w; j += accel) m.lines[j] = 1;
  } else {
    const std::size_t target = (w + accel - 1) / accel;  // ceil(W/R)
    const double center = double(w / 2);
    const double sigma = double(w) / 4.0;
    std::vector<std::size_t> cand;
    std::vector<double> weight;
    for (std::size_t j = 0; j < w; ++j) {
      if (m.lines[j]) continue;
      cand.push_back(j);
      double d = (double(j) - center) / sigma;
      weight.push_back(std::exp(-0.5 * d * d));
    }
    std::size_t need = target > acs ? target - acs : 0;
    need = std::min(need, cand.size());
    for (std::size_t pick = 0; pick < need; ++pick) {
      double total = 0;
      for (double wt : weight) total += wt;
      double r = stream.uniform() * total;
      std::size_t sel = cand.size() - 1;
      double acc = 0;
      for (std::size_t t = 0; t < cand.size(); ++t) {
        acc += weight[t];
        if (r < acc) { sel = t; break; }
      }
      m.lines[cand[sel]] = 1;
      cand.erase(cand.begin() + long(sel));
      weight.erase(weight.begin() + long(sel));
    }
  }
  if (m.count() == 0) throw std::invalid_argument("gen_mask: empty mask");
  m.acceleration = double(w) / double(m.count());
  return m;
}

/* Keep the ACS block plus a Gaussian-density subset of y's sampled lines;
   y' equals y on the kept lines and is zero elsewhere. */
template <typename T>
PairedMeasurementT<T> derive_pair_subsample(const MultiCoilKSpaceT<T>& y,
                                            double keep_fraction,
                                            std::size_t acs,
                                            RandomStream stream) {
  if (!(keep_fraction > 0.0) || keep_fraction > 1.0)
    throw std::invalid_argument("derive_pair_subsample: keep fraction must be in (0,1]");
  const std::size_t w = y.width();
  const std::size_t sampled = y.mask.count();
  if (sampled < acs)
    throw std::invalid_argument("derive_pair_subsample: mask has fewer sampled lines than acs");
  auto [acs_lo, acs_hi] = detail::acs_range(w, acs);
  for (std::size_t j = acs_lo; j < acs_hi; ++j)
    if (!y.mask.sampled(j))
      throw std::invalid_argument("derive_pair_subsample: ACS block not fully sampled in y");

  std::size_t keep = std::size_t(std::llround(keep_fraction * double(sampled)));
  keep = std::max(keep, acs);
  keep = std::min(keep, sampled);

  SamplingMask sub;
  sub.kind = MaskKind::gaussian_pair;
  sub.lines.assign(w, 0);
  for (std::size_t j = acs_lo; j < acs_hi; ++j) sub.lines[j] = 1;

  const double center = double(w / 2);
  const double sigma = double(w) / 4.0;
  std::vector<std::size_t> cand;
  std::vector<double> weight;
  for (std::size_t j = 0; j < w; ++j) {
    if (!y.mask.sampled(j) || sub.lines[j]) continue;
    cand.push_back(j);
    double d = (double(j) - center) / sigma;
    weight.push_back(std::exp(-0.5 * d * d));
  }
  std::size_t need = keep - sub.count();
  need = std::min(need, cand.size());
  for (std::size_t pick = 0; pick < need; ++pick) {
    double total = 0;
    for (double wt : weight) total += wt;
    double r = stream.uniform() * total;
    std::size_t sel = cand.size() - 1;
    double acc = 0;
    for (std::size_t t = 0; t < cand.size(); ++t) {
      acc += weight[t];
      if (r < acc) { sel = t; break; }
    }
    sub.lines[cand[sel]] = 1;
    cand.erase(cand.begin() + long(sel));
    weight.erase(weight.begin() + long(sel));
  }
  sub.acceleration = double(w) / double(sub.count());

  PairedMeasurementT<T> pair;
  pair.y = y;
  pair.submask = sub;
  pair.yprime.mask = sub;
  pair.yprime.noise_scale = y.noise_scale;
  pair.yprime.data = Tensor<std::complex<T>>(y.data.dims());
  const std::size_t c = y.coils(), h = y.height();
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j)
        if (sub.sampled(j))
          pair.yprime.data.at3(ci, i, j) = y.data.at3(ci, i, j);
  return pair;
}

/* Complex Gaussian noise with per-component std gamma on sampled lines. */
template <typename T>
MultiCoilKSpaceT<T> add_noise(const MultiCoilKSpaceT<T>& k, T gamma,
                              RandomStream stream) {
  if (gamma < T(0)) throw std::invalid_argument("add_noise: negative noise scale");
  MultiCoilKSpaceT<T> out = k;
  out.noise_scale = gamma;
  if (gamma == T(0)) return out;
  const std::size_t c = k.coils(), h = k.height(), w = k.width();
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j)
        if (k.mask.sampled(j)) {
          double re = stream.normal(), im = stream.normal();
          out.data.at3(ci, i, j) += std::complex<T>(T(gamma * re), T(gamma * im));
        }
  return out;
}

/* Square root of sum of squares over the coil axis. */
template <typename T>
Tensor<T> ssos(const Tensor<std::complex<T>>& x) {
  if (x.rank() != 3) throw std::invalid_argument("ssos: expected [C,H,W]");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor<T> out({h, w});
  for (std::size_t i = 0; i < h * w; ++i) {
    double s = 0;
    for (std::size_t ci = 0; ci < c; ++ci) s += std::norm(std::complex<double>(x[ci * h * w + i]));
    out[i] = T(std::sqrt(s));
  }
  return out;
}

/* y-hat = sum_c conj(S_c) . F^-1 y_c, no mask reweighting. */
template <typename T>
Tensor<std::complex<T>> zero_filled_combine(const MultiCoilKSpaceT<T>& y,
                                            const CoilSensitivitiesT<T>& sens) {
  detail::check_coil_shapes(y.data, sens, y.mask, "zero_filled_combine");
  const std::size_t c = y.coils(), h = y.height(), w = y.width();
  Tensor<std::complex<T>> out({h, w});
  Tensor<std::complex<T>> coil({h, w});
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t i = 0; i < h * w; ++i) coil[i] = y.data[ci * h * w + i];
    auto img = ifft2c(coil);
    for (std::size_t i = 0; i < h * w; ++i)
      out[i] += std::conj(sens.maps[ci * h * w + i]) * img[i];
  }
  return out;
}

}  // namespace selfscore
