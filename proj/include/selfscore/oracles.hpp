// Copyright (C) 2026 The selfscore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "selfscore/fft.hpp"
#include "selfscore/mri.hpp"
#include "selfscore/random.hpp"
#include "selfscore/tensor.hpp"

/* Independent closed-form and brute-force references used by tests.
   Everything here runs in double precision and shares only the numerics
   layer with the modules it checks. */
namespace selfscore::oracles {

// ---------------------------------------------------------------------------
// Analytic scores.

/* N(mean, var) perturbed by N(0, eps^2): score at x is
   -(x - mean) / (var + eps^2). Scalar version. */
inline double gaussian_perturbed_score(double mean, double var, double eps,
                                       double x) {
  return -(x - mean) / (var + eps * eps);
}

struct GaussianPrior {
  Tensor<std::complex<double>> mean;
  double var = 1.0;  // per real component
};

/* Complex-image field version: independent real/imag components. */
inline Tensor<std::complex<double>> analytic_score(
    const GaussianPrior& prior, const Tensor<std::complex<double>>& x,
    double eps) {
  if (!x.same_shape(prior.mean))
    throw std::invalid_argument("analytic_score: shape mismatch");
  Tensor<std::complex<double>> s(x.dims());
  const double denom = prior.var + eps * eps;
  for (std::size_t i = 0; i < x.numel(); ++i)
    s[i] = -(x[i] - prior.mean[i]) / denom;
  return s;
}

/* Two-component isotropic Gaussian mixture over a complex image space. */
struct Mixture2Prior {
  double w1 = 0.5, w2 = 0.5;
  Tensor<std::complex<double>> m1, m2;
  double var = 1.0;  // shared, per real component
};

inline Tensor<std::complex<double>> analytic_score(
    const Mixture2Prior& prior, const Tensor<std::complex<double>>& x,
    double eps) {
  if (!x.same_shape(prior.m1) || !x.same_shape(prior.m2))
    throw std::invalid_argument("analytic_score: shape mismatch");
  const double v = prior.var + eps * eps;
  double d1 = 0, d2 = 0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    d1 += std::norm(x[i] - prior.m1[i]);
    d2 += std::norm(x[i] - prior.m2[i]);
  }
  const double l1 = std::log(prior.w1) - d1 / (2 * v);
  const double l2 = std::log(prior.w2) - d2 / (2 * v);
  const double mx = std::max(l1, l2);
  const double r1 = std::exp(l1 - mx), r2 = std::exp(l2 - mx);
  const double z = r1 + r2;
  Tensor<std::complex<double>> s(x.dims());
  for (std::size_t i = 0; i < x.numel(); ++i)
    s[i] = (r1 * (prior.m1[i] - x[i]) + r2 * (prior.m2[i] - x[i])) / (z * v);
  return s;
}

/* Log density of the eps-perturbed mixture (unnormalized constants kept). */
inline double mixture2_log_density(const Mixture2Prior& prior,
                                   const Tensor<std::complex<double>>& x,
                                   double eps) {
  const double v = prior.var + eps * eps;
  double d1 = 0, d2 = 0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    d1 += std::norm(x[i] - prior.m1[i]);
    d2 += std::norm(x[i] - prior.m2[i]);
  }
  const std::size_t dof = 2 * x.numel();
  const double logc = -0.5 * double(dof) * std::log(2 * 3.14159265358979323846 * v);
  const double l1 = std::log(prior.w1) + logc - d1 / (2 * v);
  const double l2 = std::log(prior.w2) + logc - d2 / (2 * v);
  const double mx = std::max(l1, l2);
  return mx + std::log(std::exp(l1 - mx) + std::exp(l2 - mx));
}

// ---------------------------------------------------------------------------
// Linear-Gaussian posterior by conjugate gradient (double precision, with
// its own forward operator so the float pipeline is not in the loop).

struct DoubleModel {
  Tensor<std::complex<double>> sens;  // [C,H,W]
  SamplingMask mask;

  Tensor<std::complex<double>> A(const Tensor<std::complex<double>>& x) const {
    const std::size_t c = sens.dim(0), h = sens.dim(1), w = sens.dim(2);
    Tensor<std::complex<double>> out({c, h, w});
    Tensor<std::complex<double>> coil({h, w});
    for (std::size_t ci = 0; ci < c; ++ci) {
      for (std::size_t i = 0; i < h * w; ++i)
        coil[i] = sens[ci * h * w + i] * x[i];
      auto k = fft2c(coil);
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j)
          out.at3(ci, i, j) =
              mask.sampled(j) ? k.at2(i, j) : std::complex<double>{};
    }
    return out;
  }

  Tensor<std::complex<double>> Ah(const Tensor<std::complex<double>>& k) const {
    const std::size_t c = sens.dim(0), h = sens.dim(1), w = sens.dim(2);
    Tensor<std::complex<double>> out({h, w});
    Tensor<std::complex<double>> coil({h, w});
    for (std::size_t ci = 0; ci < c; ++ci) {
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j)
          coil.at2(i, j) =
              mask.sampled(j) ? k.at3(ci, i, j) : std::complex<double>{};
      auto img = ifft2c(coil);
      for (std::size_t i = 0; i < h * w; ++i)
        out[i] += std::conj(sens[ci * h * w + i]) * img[i];
    }
    return out;
  }
};

/* Posterior mean of x ~ N(prior.mean, var I) given y = A x + n, solving
   (A*A/gamma^2 + I/var) m = A*y/gamma^2 + mean/var by CG to a 1e-10
   relative residual. */
inline Tensor<std::complex<double>> gaussian_posterior_mean(
    const GaussianPrior& prior, const Tensor<std::complex<double>>& y,
    const DoubleModel& model, double gamma) {
  const double g2 = gamma * gamma;
  auto rhs = model.Ah(y);
  for (std::size_t i = 0; i < rhs.numel(); ++i)
    rhs[i] = rhs[i] / g2 + prior.mean[i] / prior.var;

  auto op = [&](const Tensor<std::complex<double>>& v) {
    auto out = model.Ah(model.A(v));
    for (std::size_t i = 0; i < out.numel(); ++i)
      out[i] = out[i] / g2 + v[i] / prior.var;
    return out;
  };

  Tensor<std::complex<double>> x(rhs.dims());
  auto r = rhs;
  auto p = r;
  const double b_norm = norm2(rhs);
  double rr = norm2_sq(r);
  const std::size_t max_iter = 8 * rhs.numel() + 64;
  for (std::size_t it = 0; it < max_iter; ++it) {
    if (std::sqrt(rr) <= 1e-10 * b_norm) return x;
    auto ap = op(p);
    double pap = 0;
    for (std::size_t i = 0; i < p.numel(); ++i)
      pap += (std::conj(p[i]) * ap[i]).real();
    const double alpha = rr / pap;
    for (std::size_t i = 0; i < x.numel(); ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    const double rr_new = norm2_sq(r);
    const double beta = rr_new / rr;
    for (std::size_t i = 0; i < p.numel(); ++i) p[i] = r[i] + beta * p[i];
    rr = rr_new;
  }
  throw std::runtime_error("gaussian_posterior_mean: CG did not converge");
}

// ---------------------------------------------------------------------------
// Monte-Carlo KL for diagonal Gaussians q = N(mu, sigma^2) against the
// prior N(0, sb^2): (1/n) sum [log q(theta) - log p(theta)], theta ~ q.

inline double mc_kl(const std::vector<double>& mu,
                    const std::vector<double>& sigma, double sb, std::size_t n,
                    RandomStream stream) {
  if (mu.size() != sigma.size())
    throw std::invalid_argument("mc_kl: parameter size mismatch");
  double acc = 0;
  for (std::size_t k = 0; k < n; ++k) {
    double term = 0;
    for (std::size_t s = 0; s < mu.size(); ++s) {
      const double z = stream.normal();
      const double theta = mu[s] + sigma[s] * z;
      const double logq = -std::log(sigma[s]) - 0.5 * z * z;
      const double logp = -std::log(sb) - 0.5 * (theta / sb) * (theta / sb);
      term += logq - logp;
    }
    acc += term;
  }
  return acc / double(n);
}

// ---------------------------------------------------------------------------
// Affine score-matching oracle: least-squares minimizers of the denoising
// and explicit objectives over s(x) = a x + b on scalar data.

/* High-accuracy inverse standard-normal CDF (rational initial guess with
   one Halley refinement against erfc). */
inline double inverse_normal_cdf(double p) {
  if (!(p > 0.0) || !(p < 1.0))
    throw std::invalid_argument("inverse_normal_cdf: p outside (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1 - plow;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= phigh) {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    const double q = std::sqrt(-2 * std::log(1 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  // Halley refinement
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2 * 3.14159265358979323846) *
                   std::exp(x * x / 2.0);
  return x - u / (1 + x * u / 2);
}

/* n stratified standard-normal draws: one jittered inverse-CDF point per
   stratum, in random order. Unbiased with strongly reduced moment noise. */
inline std::vector<double> stratified_normal(std::size_t n, RandomStream stream) {
  std::vector<double> x(n);
  for (std::size_t k = 0; k < n; ++k)
    x[k] = inverse_normal_cdf((double(k) + stream.uniform_pos()) / double(n + 0));
  shuffle(x, stream);
  return x;
}

struct AffineDsmResult {
  double a_dsm = 0, b_dsm = 0;
  double a_esm = 0, b_esm = 0;
};

/* Route (i): the denoising objective E || eps s(x~) + (x~-x)/eps ||^2 with
   the perturbation expectation taken in closed form over z ~ N(0,1),
   leaving sample moments of the data only. The normal equations give
     a (M2 + eps^2 - M1^2) = -1,  b = -a M1.
   Route (ii): the explicit objective E || s(x~) - score(x~) ||^2 fit by
   least squares over perturbed samples x~ = x + eps z against the known
   analytic perturbed score. */
template <typename ScoreFn>
AffineDsmResult affine_dsm_oracle(const std::vector<double>& data, double eps,
                                  ScoreFn&& perturbed_score,
                                  RandomStream stream) {
  const std::size_t n = data.size();
  if (n < 2) throw std::invalid_argument("affine_dsm_oracle: need samples");
  double m1 = 0, m2 = 0;
  for (double x : data) {
    m1 += x;
    m2 += x * x;
  }
  m1 /= double(n);
  m2 /= double(n);
  const double var = m2 - m1 * m1;
  if (var + eps * eps <= 0)
    throw std::runtime_error("affine_dsm_oracle: degenerate normal equations");
  AffineDsmResult res;
  res.a_dsm = -1.0 / (var + eps * eps);
  res.b_dsm = -res.a_dsm * m1;

  double sx = 0, sxx = 0, sg = 0, sxg = 0;
  for (double x : data) {
    const double xt = x + eps * stream.normal();
    const double g = perturbed_score(xt);
    sx += xt;
    sxx += xt * xt;
    sg += g;
    sxg += xt * g;
  }
  sx /= double(n);
  sxx /= double(n);
  sg /= double(n);
  sxg /= double(n);
  const double vxt = sxx - sx * sx;
  if (vxt <= 0)
    throw std::runtime_error("affine_dsm_oracle: degenerate perturbed moments");
  res.a_esm = (sxg - sx * sg) / vxt;
  res.b_esm = sg - res.a_esm * sx;
  return res;
}

}  // namespace selfscore::oracles
