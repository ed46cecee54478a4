// Copyright (C) 2026 The selfscore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "selfscore/mri.hpp"
#include "selfscore/score.hpp"

namespace selfscore {

enum class DataTermSign {
  gradient_correct,  // -A*(Ax - y) / (gamma^2 + eps^2)
  as_printed         // +A*(Ax - y) / (gamma^2 + eps^2)
};

enum class SamplerInit { gaussian_max_level, zero_filled };

struct SamplerConfig {
  double step_scale = 2e-5;  // epsilon in eta_i = epsilon * eps_i^2 / eps_L^2
  std::size_t inner_steps = 5;
  double gamma = 0.01;  // measurement noise scale of the data term
  DataTermSign data_sign = DataTermSign::gradient_correct;
  SamplerInit init = SamplerInit::gaussian_max_level;
  bool final_denoise = false;  // extra mean step at the smallest level
  std::size_t chains = 1;
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
  bool record_snapshots = false;
};

struct ResidualLogRow {
  std::size_t level;  // 1-based, as annealed (L down to 1)
  std::size_t step;
  double residual;  // ||A x - y||
};

template <typename T> struct SampleTraceT {
  Tensor<std::complex<T>> final_image;
  std::vector<Tensor<std::complex<T>>> snapshots;  // one per level if recorded
  std::vector<ResidualLogRow> residual_log;
};
using SampleTrace = SampleTraceT<float>;

inline std::string residual_log_csv(const std::vector<ResidualLogRow>& rows) {
  std::string out = "level,step,residual\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.9g\n", r.level, r.step, r.residual);
    out += buf;
  }
  return out;
}

template <typename T>
using ScoreFnT =
    std::function<Tensor<std::complex<T>>(const Tensor<std::complex<T>>&, std::size_t)>;
using ScoreFn = ScoreFnT<float>;

/* Score source backed by a net snapshot (EMA weights for sampling). */
template <typename T>
ScoreFnT<T> model_score_fn(const ScoreModelT<T>& model) {
  auto net = std::make_shared<ScoreNetT<T>>(ema_snapshot(model));
  NoiseSchedule sched = model.schedule;
  return [net, sched](const Tensor<std::complex<T>>& x, std::size_t level) {
    return score_apply(*net, sched, x, level);
  };
}

/* eta_i = step_scale * eps_i^2 / eps_L^2 (0-based level index). */
inline double step_size(const SamplerConfig& cfg, const NoiseSchedule& sched,
                        std::size_t level) {
  if (level >= sched.size())
    throw std::invalid_argument("step_size: level out of range");
  const double r = sched.eps(level) / sched.eps_max();
  return cfg.step_scale * r * r;
}

namespace sampler_detail {

/* x <- x + (eta/2) * drift + sqrt(eta) * z, elementwise in double,
   stored back in T precision. The noise is drawn here, row-major,
   one complex normal per pixel. */
template <typename T>
void langevin_update(Tensor<std::complex<T>>& x,
                     const Tensor<std::complex<T>>& drift, double eta,
                     RandomStream& stream) {
  const double half = eta / 2.0;
  const double root = std::sqrt(eta);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const std::complex<double> z = stream.cnormal();
    const std::complex<double> xi =
        std::complex<double>(x[i]) + half * std::complex<double>(drift[i]) + root * z;
    x[i] = {T(xi.real()), T(xi.imag())};
  }
}

}  // namespace sampler_detail

/* Annealed Langevin sampling of the learned prior: levels are walked from
   the largest scale down to the smallest, with inner_steps updates each,
   carrying the state across levels. */
template <typename T>
SampleTraceT<T> langevin_uncond(
    const ScoreFnT<T>& score, const NoiseSchedule& sched,
    const SamplerConfig& cfg, std::vector<std::size_t> dims,
    const std::function<void(std::size_t, std::size_t,
                             const Tensor<std::complex<T>>&)>& on_step = {}) {
  RandomStream stream(cfg.seed, cfg.stream_id);
  SampleTraceT<T> trace;
  Tensor<std::complex<T>> x(dims);
  if (cfg.init == SamplerInit::gaussian_max_level) {
    const double s = sched.eps_max();
    for (std::size_t i = 0; i < x.numel(); ++i) {
      const std::complex<double> z = stream.cnormal();
      x[i] = {T(s * z.real()), T(s * z.imag())};
    }
  }  // zero-filled init without a measurement is the zero image

  Tensor<std::complex<T>> drift(x.dims());
  for (std::size_t li = sched.size(); li-- > 0;) {
    const double eta = step_size(cfg, sched, li);
    for (std::size_t t = 0; t < cfg.inner_steps; ++t) {
      auto s = score(x, li);
      if (!s.same_shape(x))
        throw std::invalid_argument("langevin_uncond: score shape mismatch");
      sampler_detail::langevin_update(x, s, eta, stream);
      if (on_step) on_step(li, t, x);
    }
    if (cfg.record_snapshots) trace.snapshots.push_back(x);
  }
  if (cfg.final_denoise) {
    auto s = score(x, 0);
    const double e0 = sched.eps_min();
    for (std::size_t i = 0; i < x.numel(); ++i)
      x[i] = std::complex<T>(std::complex<double>(x[i]) +
                             e0 * e0 * std::complex<double>(s[i]));
  }
  trace.final_image = std::move(x);
  return trace;
}

/* Conditional reconstruction: the prior score plus the measurement term
   A*(A x - y) / (gamma^2 + eps_i^2), subtracted under the gradient-correct
   sign (default) or added as printed. */
template <typename T>
SampleTraceT<T> langevin_cond(const ScoreFnT<T>& score,
                              const MultiCoilKSpaceT<T>& y,
                              const CoilSensitivitiesT<T>& sens,
                              const NoiseSchedule& sched,
                              const SamplerConfig& cfg) {
  const std::size_t h = y.height(), w = y.width();
  RandomStream stream(cfg.seed, cfg.stream_id);
  SampleTraceT<T> trace;
  Tensor<std::complex<T>> x({h, w});
  if (cfg.init == SamplerInit::gaussian_max_level) {
    const double s = sched.eps_max();
    for (std::size_t i = 0; i < x.numel(); ++i) {
      const std::complex<double> z = stream.cnormal();
      x[i] = {T(s * z.real()), T(s * z.imag())};
    }
  } else {
    x = zero_filled_combine(y, sens);
  }

  const double gamma2 = cfg.gamma * cfg.gamma;
  Tensor<std::complex<T>> drift({h, w});
  for (std::size_t li = sched.size(); li-- > 0;) {
    const double eta = step_size(cfg, sched, li);
    const double eps = sched.eps(li);
    const double denom = gamma2 + eps * eps;
    for (std::size_t t = 0; t < cfg.inner_steps; ++t) {
      auto s = score(x, li);
      auto ax = apply_A(x, sens, y.mask);
      for (std::size_t i = 0; i < ax.numel(); ++i) ax[i] -= y.data[i];
      const double resid = norm2(ax);
      auto corr = apply_Ah(ax, sens, y.mask);
      const double sign = cfg.data_sign == DataTermSign::gradient_correct ? -1.0 : 1.0;
      for (std::size_t i = 0; i < drift.numel(); ++i)
        drift[i] = std::complex<T>(std::complex<double>(s[i]) +
                                   sign * std::complex<double>(corr[i]) / denom);
      sampler_detail::langevin_update(x, drift, eta, stream);
      trace.residual_log.push_back({li + 1, t, resid});
    }
    if (cfg.record_snapshots) trace.snapshots.push_back(x);
  }
  if (cfg.final_denoise) {
    auto s = score(x, 0);
    const double e0 = sched.eps_min();
    for (std::size_t i = 0; i < x.numel(); ++i)
      x[i] = std::complex<T>(std::complex<double>(x[i]) +
                             e0 * e0 * std::complex<double>(s[i]));
  }
  trace.final_image = std::move(x);
  return trace;
}

/* Runs cfg.chains independent conditional chains (stream ids offset per
   chain) and averages the final samples. */
template <typename T>
std::pair<Tensor<std::complex<T>>, std::vector<SampleTraceT<T>>> reconstruct(
    const ScoreFnT<T>& score, const MultiCoilKSpaceT<T>& y,
    const CoilSensitivitiesT<T>& sens, const NoiseSchedule& sched,
    const SamplerConfig& cfg) {
  std::vector<SampleTraceT<T>> traces;
  traces.reserve(cfg.chains);
  Tensor<std::complex<double>> acc({y.height(), y.width()});
  for (std::size_t chain = 0; chain < cfg.chains; ++chain) {
    SamplerConfig chain_cfg = cfg;
    chain_cfg.stream_id = cfg.stream_id + chain;
    auto trace = langevin_cond(score, y, sens, sched, chain_cfg);
    for (std::size_t i = 0; i < acc.numel(); ++i)
      acc[i] += std::complex<double>(trace.final_image[i]);
    traces.push_back(std::move(trace));
  }
  Tensor<std::complex<T>> mean({y.height(), y.width()});
  for (std::size_t i = 0; i < acc.numel(); ++i)
    mean[i] = std::complex<T>(acc[i] / double(cfg.chains));
  return {std::move(mean), std::move(traces)};
}

}  // namespace selfscore
