// Copyright (C) 2026 The selfscore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdarg>
#include <cstdio>
#include <string>
#include <vector>

#include "selfscore/bcnn.hpp"
#include "selfscore/metrics.hpp"
#include "selfscore/oracles.hpp"
#include "selfscore/phantom.hpp"
#include "selfscore/sampler.hpp"
#include "selfscore/score.hpp"

/* The oracle verification suite: every check compares a pipeline component
   against an independent closed-form or brute-force reference. The CLI
   `verify` subcommand and the acceptance harness both run exactly this. */
namespace selfscore::verify {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

namespace detail {

inline std::string fmt(const char* f, ...) {
  char buf[256];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

}  // namespace detail

/* Adjointness of the encoding operator on random inputs at several sizes
   and coil counts. */
inline CheckResult check_adjointness(std::uint64_t seed) {
  RandomStream rs(seed, 0x101);
  double worst = 0;
  int cases = 0;
  for (std::size_t n : {std::size_t(8), std::size_t(16), std::size_t(32)}) {
    for (std::size_t c : {std::size_t(1), std::size_t(4)}) {
      auto sens = gen_coil_maps<float>(c, n, n, rs.substream(cases + 1));
      for (int rep = 0; rep < 9; ++rep) {
        auto mask = gen_mask(rep % 2 ? MaskKind::random : MaskKind::uniform, n,
                             1 + std::size_t(rep % 4), 2, rs.substream(100 + cases));
        auto x = gaussian_complex<float>(rs, {n, n});
        auto y = gaussian_complex<float>(rs, {c, n, n});
        auto ax = apply_A(x, sens, mask);
        auto ahy = apply_Ah(y, sens, mask);
        const auto lhs = cdot(ax, y);
        const auto rhs = cdot(x, ahy);
        const double scale = std::max(norm2(ax) * norm2(y), 1e-30);
        worst = std::max(worst, std::abs(lhs - rhs) / scale);
        ++cases;
      }
    }
  }
  CheckResult r{"operator-adjointness"};
  r.pass = worst <= 1e-5 && cases >= 50;
  r.detail = detail::fmt("%d cases, worst relative mismatch %.3g (tol 1e-5)",
                         cases, worst);
  return r;
}

/* Unitarity and inversion of the centered transforms on random inputs. */
inline CheckResult check_fft(std::uint64_t seed) {
  RandomStream rs(seed, 0x102);
  double worst = 0;
  const std::size_t sizes[] = {8, 16, 32, 12, 9};
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t h = sizes[rep % 5], w = sizes[(rep / 5) % 5];
    auto x = gaussian_complex<float>(rs, {h, w});
    auto k = fft2c(x);
    worst = std::max(worst, std::abs(norm2(k) - norm2(x)) / norm2(x));
    worst = std::max(worst, rel_error(ifft2c(k), x));
  }
  CheckResult r{"fft-unitarity-inversion"};
  r.pass = worst <= 1e-6;
  r.detail = detail::fmt("100 inputs, worst relative error %.3g (tol 1e-6)", worst);
  return r;
}

/* Proposition 1: the closed-form KL term of the ELBO against a Monte-Carlo
   estimate for randomized configurations. */
inline CheckResult check_prop1(std::uint64_t seed, std::size_t n = 1000000) {
  RandomStream rs(seed, 0x103);
  double worst = 0;
  int done = 0;
  while (done < 20) {
    const std::size_t k = 1 + std::size_t(rs.next_u64() % 4);
    std::vector<double> mu(k), sigma(k);
    Tensor<double> mu_t({k}), rho_t({k});
    for (std::size_t i = 0; i < k; ++i) {
      const double sign = rs.uniform() < 0.5 ? -1.0 : 1.0;
      mu[i] = sign * (0.3 + 0.9 * rs.uniform());
      sigma[i] = 0.08 + 0.52 * rs.uniform();
      mu_t[i] = mu[i];
      rho_t[i] = softplus_inverse(sigma[i]);
    }
    const double sb = 0.7 + 0.9 * rs.uniform();
    const double closed = closed_form_kl(mu_t, rho_t, sb);
    if (closed < 0.5) continue;  // keep the 1% gate statistically meaningful
    const double mc = oracles::mc_kl(mu, sigma, sb, n, rs.substream(900 + done));
    worst = std::max(worst, std::abs(mc - closed) / closed);
    ++done;
  }
  CheckResult r{"prop1-kl-vs-monte-carlo"};
  r.pass = worst <= 0.01;
  r.detail = detail::fmt("20 configs at n=%zu, worst relative gap %.3g (tol 0.01)",
                         n, worst);
  return r;
}

/* Proposition 2: the denoising and explicit score-matching objectives share
   their affine least-squares minimizer. */
inline CheckResult check_prop2(std::uint64_t seed, std::size_t n = 1000000) {
  auto data = oracles::stratified_normal(n, RandomStream(seed, 0x104));
  const double eps = 0.1;
  auto res = oracles::affine_dsm_oracle(
      data, eps, [&](double xt) { return -xt / (1.0 + eps * eps); },
      RandomStream(seed, 0x105));
  const double expect = -1.0 / 1.01;
  CheckResult r{"prop2-dsm-equals-esm"};
  const double gap = std::abs(res.a_dsm - res.a_esm);
  const double err_d = std::abs(res.a_dsm - expect);
  const double err_e = std::abs(res.a_esm - expect);
  r.pass = gap <= 1e-3 && err_d <= 2e-3 && err_e <= 2e-3 &&
           std::abs(res.b_dsm) <= 1e-3 && std::abs(res.b_esm) <= 1e-3;
  r.detail = detail::fmt(
      "a_dsm %.6f a_esm %.6f (target %.6f), |gap| %.2g (tol 1e-3)", res.a_dsm,
      res.a_esm, expect, gap);
  return r;
}

/* Discretized OU stationary law of the unconditional update at a single
   level with the analytic standard-normal score. */
inline CheckResult check_langevin_uncond(std::uint64_t seed) {
  NoiseSchedule sched;
  sched.levels = {1.0};
  SamplerConfig cfg;
  cfg.step_scale = 0.01;
  cfg.inner_steps = 201000;
  cfg.seed = seed;
  cfg.stream_id = 0x106;
  ScoreFn score = [](const ComplexTensor& x, std::size_t) {
    ComplexTensor s(x.dims());
    for (std::size_t i = 0; i < x.numel(); ++i) s[i] = -x[i];
    return s;
  };
  double sum = 0, sumsq = 0;
  std::size_t count = 0;
  auto collect = [&](std::size_t, std::size_t t, const ComplexTensor& x) {
    if (t < 1000) return;
    for (std::size_t i = 0; i < x.numel(); ++i) {
      sum += x[i].real() + x[i].imag();
      sumsq += double(x[i].real()) * x[i].real() +
               double(x[i].imag()) * x[i].imag();
      count += 2;
    }
  };
  langevin_uncond<float>(score, sched, cfg, {8, 8}, collect);
  const double mean = sum / double(count);
  const double var = sumsq / double(count) - mean * mean;
  const double target = 1.0 / (1.0 - 0.01 / 4.0);
  CheckResult r{"langevin-ou-stationary"};
  r.pass = std::abs(mean) <= 0.02 && std::abs(var - target) <= 0.02;
  r.detail = detail::fmt("mean %.4f (tol 0.02), var %.4f vs %.4f (tol 0.02)",
                         mean, var, target);
  return r;
}

/* Algorithm conformance: a hand-stepped two-level transcript must be
   reproduced bit-exactly, and on a linear-Gaussian model the
   gradient-correct data term must reach the closed-form posterior while
   the as-printed sign must not. */
inline CheckResult check_algorithm1(std::uint64_t seed) {
  CheckResult r{"alg1-conformance-and-sign"};

  // (a) transcript
  {
    const std::size_t n = 4;
    CoilSensitivities sens;
    sens.maps = Tensor<std::complex<float>>({1, n, n});
    for (std::size_t i = 0; i < n * n; ++i) sens.maps[i] = {1.0f, 0.0f};
    auto mask = gen_mask(MaskKind::uniform, n, 2, 2, RandomStream(seed, 0x107));
    RandomStream data_rs(seed, 0x108);
    auto truth = gaussian_complex<float>(data_rs, {n, n});
    MultiCoilKSpace y;
    y.data = apply_A(truth, sens, mask);
    y.mask = mask;

    NoiseSchedule sched;
    sched.levels = {0.3, 1.7};
    SamplerConfig cfg;
    cfg.step_scale = 0.05;
    cfg.inner_steps = 2;
    cfg.gamma = 0.5;
    cfg.seed = seed;
    cfg.stream_id = 0x109;
    ScoreFn score = [&](const ComplexTensor& x, std::size_t lvl) {
      ComplexTensor s(x.dims());
      const double denom = 1.0 + sched.eps(lvl) * sched.eps(lvl);
      for (std::size_t i = 0; i < x.numel(); ++i)
        s[i] = std::complex<float>(-std::complex<double>(x[i]) / denom);
      return s;
    };
    auto trace = langevin_cond<float>(score, y, sens, sched, cfg);

    RandomStream stream(seed, 0x109);
    ComplexTensor x({n, n});
    for (std::size_t i = 0; i < x.numel(); ++i) {
      const auto z = stream.cnormal();
      x[i] = {float(1.7 * z.real()), float(1.7 * z.imag())};
    }
    for (int li = 1; li >= 0; --li) {
      const double eps = sched.levels[std::size_t(li)];
      const double eta = 0.05 * (eps / 1.7) * (eps / 1.7);
      const double denom = 0.25 + eps * eps;
      for (int t = 0; t < 2; ++t) {
        auto s = score(x, std::size_t(li));
        auto ax = apply_A(x, sens, mask);
        for (std::size_t i = 0; i < ax.numel(); ++i) ax[i] -= y.data[i];
        auto corr = apply_Ah(ax, sens, mask);
        ComplexTensor drift(x.dims());
        for (std::size_t i = 0; i < drift.numel(); ++i)
          drift[i] = std::complex<float>(std::complex<double>(s[i]) -
                                         std::complex<double>(corr[i]) / denom);
        const double half = eta / 2.0, root = std::sqrt(eta);
        for (std::size_t i = 0; i < x.numel(); ++i) {
          const auto z = stream.cnormal();
          const std::complex<double> xi =
              std::complex<double>(x[i]) + half * std::complex<double>(drift[i]) +
              root * z;
          x[i] = {float(xi.real()), float(xi.imag())};
        }
      }
    }
    for (std::size_t i = 0; i < x.numel(); ++i)
      if (trace.final_image[i] != x[i]) {
        r.pass = false;
        r.detail = "transcript mismatch at element " + std::to_string(i);
        return r;
      }
  }

  // (b) posterior convergence and sign discrimination on a 16x16 model
  const std::size_t n = 16;
  CoilSensitivities sens;
  sens.maps = Tensor<std::complex<float>>({1, n, n});
  for (std::size_t i = 0; i < n * n; ++i) sens.maps[i] = {1.0f, 0.0f};
  SamplingMask mask;
  mask.lines.assign(n, 1);
  mask.acceleration = 1.0;
  const double gamma = 0.2;
  RandomStream rs(seed, 0x10a);
  auto truth = gaussian_complex<float>(rs, {n, n});
  MultiCoilKSpace y;
  y.data = apply_A(truth, sens, mask);
  y.mask = mask;
  y = add_noise(y, float(gamma), RandomStream(seed, 0x10b));

  oracles::DoubleModel dm;
  dm.sens = Tensor<std::complex<double>>({1, n, n});
  for (std::size_t i = 0; i < n * n; ++i) dm.sens[i] = {1.0, 0.0};
  dm.mask = mask;
  oracles::GaussianPrior prior;
  prior.mean = Tensor<std::complex<double>>({n, n});
  prior.var = 1.0;
  auto postmean = oracles::gaussian_posterior_mean(
      prior, tensor_cast<std::complex<double>>(y.data), dm, gamma);

  auto sched = make_schedule(0.01, 8.0, 16);
  SamplerConfig cfg;
  cfg.step_scale = 30.0;
  cfg.inner_steps = 5;
  cfg.gamma = gamma;
  cfg.seed = seed;
  cfg.stream_id = 0x10c;
  cfg.chains = 64;
  ScoreFn score = [&](const ComplexTensor& x, std::size_t lvl) {
    ComplexTensor s(x.dims());
    const double denom = 1.0 + sched.eps(lvl) * sched.eps(lvl);
    for (std::size_t i = 0; i < x.numel(); ++i)
      s[i] = std::complex<float>(-std::complex<double>(x[i]) / denom);
    return s;
  };

  auto nmse_of = [&](DataTermSign sign) {
    SamplerConfig c = cfg;
    c.data_sign = sign;
    auto [mean, traces] = reconstruct<float>(score, y, sens, sched, c);
    double err = 0, ref = 0;
    for (std::size_t i = 0; i < mean.numel(); ++i) {
      err += std::norm(std::complex<double>(mean[i]) - postmean[i]);
      ref += std::norm(postmean[i]);
    }
    return err / ref;
  };
  const double nmse_good = nmse_of(DataTermSign::gradient_correct);
  const double nmse_bad = nmse_of(DataTermSign::as_printed);
  r.pass = nmse_good <= 1e-2 && nmse_bad > 1e-2;
  r.detail = detail::fmt(
      "transcript exact; posterior NMSE %.3g (tol 1e-2), printed-sign NMSE %.3g",
      nmse_good, nmse_bad);
  return r;
}

/* Trained score field against the analytic perturbed mixture score over
   the high-density grid. Points are single complex pixels (two real
   degrees of freedom). */
inline CheckResult check_score_learning(std::uint64_t seed,
                                        std::size_t train_points = 1024,
                                        std::size_t epochs = 300) {
  oracles::Mixture2Prior mix;
  mix.m1 = Tensor<std::complex<double>>({1, 1});
  mix.m2 = Tensor<std::complex<double>>({1, 1});
  mix.m1[0] = {-0.8, -0.6};
  mix.m2[0] = {0.8, 0.6};
  mix.var = 0.09;

  RandomStream rs(seed, 0x10d);
  std::vector<std::vector<Tensor<std::complex<float>>>> pools;
  pools.reserve(train_points);
  for (std::size_t i = 0; i < train_points; ++i) {
    const bool first = rs.uniform() < 0.5;
    const auto m = first ? mix.m1[0] : mix.m2[0];
    Tensor<std::complex<float>> pt({1, 1});
    const auto z = rs.cnormal();
    pt[0] = {float(m.real() + 0.3 * z.real()), float(m.imag() + 0.3 * z.imag())};
    pools.push_back({pt});
  }

  auto sched = make_schedule(0.05, 2.0, 10);
  ScoreArch arch{2, 32, 2};
  ScoreTrainConfig cfg;
  cfg.epochs = epochs;
  cfg.learning_rate = 1e-3;
  cfg.ema_rate = 0.999;
  cfg.seed = seed;
  auto model = train_score(pools, arch, sched, cfg);
  auto net = ema_snapshot(model);

  double dot_acc = 0, nn_acc = 0, aa_acc = 0;
  const double eps1 = sched.eps_min();
  for (double re = -2.0; re <= 2.0; re += 0.05) {
    for (double im = -2.0; im <= 2.0; im += 0.05) {
      Tensor<std::complex<double>> p({1, 1});
      p[0] = {re, im};
      if (std::exp(oracles::mixture2_log_density(mix, p, eps1)) <= 1e-3) continue;
      auto sa = oracles::analytic_score(mix, p, eps1);
      Tensor<std::complex<float>> pf({1, 1});
      pf[0] = {float(re), float(im)};
      auto sn = score_apply(net, sched, pf, 0);
      const std::complex<double> a = sa[0];
      const std::complex<double> b{sn[0].real(), sn[0].imag()};
      dot_acc += a.real() * b.real() + a.imag() * b.imag();
      aa_acc += std::norm(a);
      nn_acc += std::norm(b);
    }
  }
  const double cosine = dot_acc / std::sqrt(aa_acc * nn_acc);
  CheckResult r{"score-learning-mixture"};
  r.pass = cosine >= 0.95;
  r.detail = detail::fmt("grid cosine similarity %.4f (tol 0.95)", cosine);
  return r;
}

inline std::vector<CheckResult> run_all(std::uint64_t seed) {
  std::vector<CheckResult> out;
  out.push_back(check_adjointness(seed));
  out.push_back(check_fft(seed));
  out.push_back(check_prop1(seed));
  out.push_back(check_prop2(seed));
  out.push_back(check_langevin_uncond(seed));
  out.push_back(check_algorithm1(seed));
  out.push_back(check_score_learning(seed));
  return out;
}

}  // namespace selfscore::verify
