// Copyright (C) 2026 The selfscore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <type_traits>
#include <vector>

#include "selfscore/fft.hpp"
#include "selfscore/io.hpp"
#include "selfscore/mri.hpp"
#include "selfscore/nn.hpp"
#include "selfscore/phantom.hpp"

namespace selfscore {

/* Unrolled self-supervised reconstruction network: an image-domain conv
   module and a k-space conv module with residual connections, a hard
   data-consistency projection after each pass, recursed with shared
   weights, and a coil combine at the end. The last convolution of each
   module is Bayesian (mean/spread), all earlier layers deterministic. */
struct FNetArch {
  std::size_t recursions = 10;
  std::size_t layers = 5;
  std::size_t filters = 32;
  bool bayes_last = true;
};

template <typename T> struct BcnnModule {
  std::vector<ParamTensor<T>> det_w, det_b;  // layers 0 .. n-2
  BayesianParam<T> bayes_w, bayes_b;         // layer n-1
};

template <typename T> struct BcnnModelT {
  FNetArch arch;
  std::size_t coils = 1;
  BcnnModule<T> img;
  BcnnModule<T> ksp;

  std::vector<ParamTensor<T>*> all_params() {
    std::vector<ParamTensor<T>*> ps;
    for (auto* m : {&img, &ksp}) {
      for (auto& p : m->det_w) ps.push_back(&p);
      for (auto& p : m->det_b) ps.push_back(&p);
      ps.push_back(&m->bayes_w.mu);
      ps.push_back(&m->bayes_w.rho);
      ps.push_back(&m->bayes_b.mu);
      ps.push_back(&m->bayes_b.rho);
    }
    return ps;
  }

  void zero_grads() {
    for (auto* p : all_params()) p->zero_grad();
  }
};
using BcnnModel = BcnnModelT<float>;

/* One concrete draw theta = mu + softplus(rho) * eps for both modules. */
template <typename T> struct BcnnSample {
  BayesSample<T> img_w, img_b, ksp_w, ksp_b;
};

namespace bcnn_detail {

template <typename T>
void init_module(BcnnModule<T>& m, const std::string& prefix,
                 const FNetArch& arch, std::size_t channels, T init_spread,
                 RandomStream& stream) {
  const std::size_t n = arch.layers;
  m.det_w.clear();
  m.det_b.clear();
  for (std::size_t l = 0; l + 1 < n; ++l) {
    const std::size_t cin = l == 0 ? channels : arch.filters;
    const std::size_t cout = arch.filters;
    m.det_w.emplace_back(prefix + ".l" + std::to_string(l) + ".w",
                         std::vector<std::size_t>{cout, cin, 3, 3});
    m.det_b.emplace_back(prefix + ".l" + std::to_string(l) + ".b",
                         std::vector<std::size_t>{cout});
    he_init(m.det_w.back().values, cin * 9, stream);
    // small nonzero biases keep pre-activations off the relu kink on
    // inputs with exact-zero regions
    for (std::size_t i = 0; i < cout; ++i)
      m.det_b.back().values[i] = T(0.01 * stream.normal());
  }
  const std::string last = prefix + ".l" + std::to_string(n - 1);
  m.bayes_w = BayesianParam<T>(last + ".w",
                               {channels, arch.filters, 3, 3});
  m.bayes_b = BayesianParam<T>(last + ".b", {channels});
  // zero-mean last layer: the residual modules start as the identity
  const T r0 = softplus_inverse(init_spread);
  for (std::size_t i = 0; i < m.bayes_w.rho.values.numel(); ++i)
    m.bayes_w.rho.values[i] = r0;
  for (std::size_t i = 0; i < m.bayes_b.rho.values.numel(); ++i)
    m.bayes_b.rho.values[i] = r0;
}

template <typename T>
std::vector<LayerRef<T>> module_refs(BcnnModule<T>& m,
                                     const BayesSample<T>& w_draw,
                                     const BayesSample<T>& b_draw,
                                     std::type_identity_t<Tensor<T>>* dtheta_w,
                                     std::type_identity_t<Tensor<T>>* dtheta_b,
                                     bool want_grads) {
  std::vector<LayerRef<T>> refs;
  for (std::size_t l = 0; l < m.det_w.size(); ++l)
    refs.push_back({&m.det_w[l].values, &m.det_b[l].values,
                    want_grads ? &m.det_w[l].grad : nullptr,
                    want_grads ? &m.det_b[l].grad : nullptr});
  refs.push_back({&w_draw.theta, &b_draw.theta, dtheta_w, dtheta_b});
  return refs;
}

template <typename T>
Tensor<std::complex<T>> fft_coils(const Tensor<std::complex<T>>& x, bool inverse) {
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2), hw = h * w;
  Tensor<std::complex<T>> out({c, h, w});
  Tensor<std::complex<T>> plane({h, w});
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t i = 0; i < hw; ++i) plane[i] = x[ci * hw + i];
    auto t = inverse ? ifft2c(plane) : fft2c(plane);
    for (std::size_t i = 0; i < hw; ++i) out[ci * hw + i] = t[i];
  }
  return out;
}

}  // namespace bcnn_detail

template <typename T = float>
BcnnModelT<T> make_bcnn(const FNetArch& arch, std::size_t coils, T init_spread,
                        std::uint64_t seed) {
  if (arch.layers < 2) throw std::invalid_argument("make_bcnn: need at least 2 layers");
  BcnnModelT<T> m;
  m.arch = arch;
  m.coils = coils;
  RandomStream stream(seed, 0x6263u);  // weight-init stream
  bcnn_detail::init_module(m.img, "img", arch, 2 * coils, init_spread, stream);
  bcnn_detail::init_module(m.ksp, "ksp", arch, 2 * coils, init_spread, stream);
  return m;
}

template <typename T>
BcnnSample<T> sample_bcnn(BcnnModelT<T>& model, RandomStream& stream) {
  BcnnSample<T> s;
  s.img_w = sample_bayesian(model.img.bayes_w.mu.values,
                            model.img.bayes_w.rho.values, stream);
  s.img_b = sample_bayesian(model.img.bayes_b.mu.values,
                            model.img.bayes_b.rho.values, stream);
  s.ksp_w = sample_bayesian(model.ksp.bayes_w.mu.values,
                            model.ksp.bayes_w.rho.values, stream);
  s.ksp_b = sample_bayesian(model.ksp.bayes_b.mu.values,
                            model.ksp.bayes_b.rho.values, stream);
  return s;
}

/* Mean draw (eps = 0), used when a deterministic realization is wanted. */
template <typename T>
BcnnSample<T> mean_bcnn(BcnnModelT<T>& model) {
  BcnnSample<T> s;
  auto zero_draw = [](const BayesianParam<T>& p) {
    BayesSample<T> d{p.mu.values, Tensor<T>(p.mu.values.dims())};
    return d;
  };
  s.img_w = zero_draw(model.img.bayes_w);
  s.img_b = zero_draw(model.img.bayes_b);
  s.ksp_w = zero_draw(model.ksp.bayes_w);
  s.ksp_b = zero_draw(model.ksp.bayes_b);
  return s;
}

template <typename T> struct BcnnCache {
  struct Rec {
    StackCache<T> img, ksp;
  };
  std::vector<Rec> recs;
};

/* Run the unrolled network on a measurement. The data-consistency step
   replaces sampled lines of the running k-space with y_in's data, so the
   pre-combine k-space always matches the measurement there exactly. */
template <typename T>
Tensor<std::complex<T>> f_forward(BcnnModelT<T>& model, const BcnnSample<T>& draw,
                                  const MultiCoilKSpaceT<T>& y_in,
                                  const CoilSensitivitiesT<T>& sens,
                                  std::type_identity_t<BcnnCache<T>>* cache,
                                  std::type_identity_t<Tensor<std::complex<T>>>*
                                      pre_combine_kspace = nullptr) {
  using bcnn_detail::fft_coils;
  const std::size_t c = y_in.coils(), h = y_in.height(), w = y_in.width();
  if (sens.coils() != c || sens.height() != h || sens.width() != w)
    throw std::invalid_argument("f_forward: sensitivity shape mismatch");

  auto img_refs = bcnn_detail::module_refs(model.img, draw.img_w, draw.img_b,
                                           nullptr, nullptr, false);
  auto ksp_refs = bcnn_detail::module_refs(model.ksp, draw.ksp_w, draw.ksp_b,
                                           nullptr, nullptr, false);
  if (cache) {
    cache->recs.clear();
    cache->recs.resize(model.arch.recursions);
  }

  Tensor<std::complex<T>> k = y_in.data;
  for (std::size_t r = 0; r < model.arch.recursions; ++r) {
    auto x = fft_coils(k, true);
    auto xr = complex_to_channels(x);
    auto u = stack_forward<T>(img_refs, xr, cache ? &cache->recs[r].img : nullptr);
    for (std::size_t i = 0; i < u.numel(); ++i) u[i] += xr[i];  // residual
    auto kmid = fft_coils(channels_to_complex(u), false);
    auto kr = complex_to_channels(kmid);
    auto v = stack_forward<T>(ksp_refs, kr, cache ? &cache->recs[r].ksp : nullptr);
    for (std::size_t i = 0; i < v.numel(); ++i) v[i] += kr[i];  // residual
    k = channels_to_complex(v);
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j)
          if (y_in.mask.sampled(j)) k.at3(ci, i, j) = y_in.data.at3(ci, i, j);
  }
  if (pre_combine_kspace) *pre_combine_kspace = k;
  auto x = fft_coils(k, true);
  Tensor<std::complex<T>> out({h, w});
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t i = 0; i < h * w; ++i)
      out[i] += std::conj(sens.maps[ci * h * w + i]) * x[ci * h * w + i];
  return out;
}

template <typename T>
Tensor<std::complex<T>> f_apply(BcnnModelT<T>& model, const BcnnSample<T>& draw,
                                const MultiCoilKSpaceT<T>& y_in,
                                const CoilSensitivitiesT<T>& sens) {
  return f_forward(model, draw, y_in, sens, nullptr);
}

/* Reverse pass of f_forward; accumulates grads into the deterministic
   layers and, through the frozen draw noise, into (mu, rho). */
template <typename T>
void f_backward(BcnnModelT<T>& model, const BcnnSample<T>& draw,
                const MultiCoilKSpaceT<T>& y_in,
                const CoilSensitivitiesT<T>& sens, BcnnCache<T>& cache,
                const Tensor<std::complex<T>>& dout) {
  using bcnn_detail::fft_coils;
  const std::size_t c = y_in.coils(), h = y_in.height(), w = y_in.width();
  const std::size_t hw = h * w;

  Tensor<T> d_img_w(model.img.bayes_w.mu.values.dims());
  Tensor<T> d_img_b(model.img.bayes_b.mu.values.dims());
  Tensor<T> d_ksp_w(model.ksp.bayes_w.mu.values.dims());
  Tensor<T> d_ksp_b(model.ksp.bayes_b.mu.values.dims());

  auto img_refs = bcnn_detail::module_refs(model.img, draw.img_w, draw.img_b,
                                           &d_img_w, &d_img_b, true);
  auto ksp_refs = bcnn_detail::module_refs(model.ksp, draw.ksp_w, draw.ksp_b,
                                           &d_ksp_w, &d_ksp_b, true);

  // combine backward: dX_c = S_c * g ; ifft adjoint: dK = F dX
  Tensor<std::complex<T>> dx({c, h, w});
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t i = 0; i < hw; ++i)
      dx[ci * hw + i] = sens.maps[ci * hw + i] * dout[i];
  auto dk = fft_coils(dx, false);

  for (std::size_t r = model.arch.recursions; r-- > 0;) {
    // data consistency: sampled lines carry no gradient to the module output
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j)
          if (y_in.mask.sampled(j)) dk.at3(ci, i, j) = std::complex<T>{};
    auto dv = complex_to_channels(dk);
    auto dkr = stack_backward<T>(ksp_refs, cache.recs[r].ksp, dv);
    for (std::size_t i = 0; i < dkr.numel(); ++i) dkr[i] += dv[i];  // residual
    auto du_c = fft_coils(channels_to_complex(dkr), true);  // fft adjoint
    auto du = complex_to_channels(du_c);
    auto dxr = stack_backward<T>(img_refs, cache.recs[r].img, du);
    for (std::size_t i = 0; i < dxr.numel(); ++i) dxr[i] += du[i];  // residual
    dk = fft_coils(channels_to_complex(dxr), false);  // ifft adjoint
  }

  accumulate_bayesian_grads(d_img_w, draw.img_w.eps,
                            model.img.bayes_w.rho.values,
                            model.img.bayes_w.mu.grad,
                            model.img.bayes_w.rho.grad);
  accumulate_bayesian_grads(d_img_b, draw.img_b.eps,
                            model.img.bayes_b.rho.values,
                            model.img.bayes_b.mu.grad,
                            model.img.bayes_b.rho.grad);
  accumulate_bayesian_grads(d_ksp_w, draw.ksp_w.eps,
                            model.ksp.bayes_w.rho.values,
                            model.ksp.bayes_w.mu.grad,
                            model.ksp.bayes_w.rho.grad);
  accumulate_bayesian_grads(d_ksp_b, draw.ksp_b.eps,
                            model.ksp.bayes_b.rho.values,
                            model.ksp.bayes_b.mu.grad,
                            model.ksp.bayes_b.rho.grad);
}

// ---------------------------------------------------------------------------
// ELBO training.

struct BcnnTrainConfig {
  double gamma1 = 0.01;       // residual scale of f(y); ties the score eps_min
  double gamma2 = 1.0;        // data-term noise scale
  double prior_spread = 1.0;  // sigma-bar
  double init_spread = 0.05;
  std::size_t epochs = 200;
  double learning_rate = 1e-4;
  std::size_t batch_size = 1;
  bool kspace_data_term = false;  // compare A f(y') with y instead of images
  std::uint64_t seed = 0;
};

/* Closed-form KL(q || prior) for diagonal Gaussians with prior N(0, sb^2),
   summed over parameters: log(sb/sigma) + (mu^2 + sigma^2)/(2 sb^2) - 1/2. */
template <typename T>
double closed_form_kl(const Tensor<T>& mu, const Tensor<T>& rho, double sb) {
  double kl = 0;
  for (std::size_t i = 0; i < mu.numel(); ++i) {
    const double s = double(softplus(rho[i]));
    kl += std::log(sb / s) +
          (double(mu[i]) * mu[i] + s * s) / (2 * sb * sb) - 0.5;
  }
  return kl;
}

template <typename T>
double bcnn_kl(BcnnModelT<T>& model, double sb) {
  double kl = 0;
  for (auto* m : {&model.img, &model.ksp}) {
    kl += closed_form_kl(m->bayes_w.mu.values, m->bayes_w.rho.values, sb);
    kl += closed_form_kl(m->bayes_b.mu.values, m->bayes_b.rho.values, sb);
  }
  return kl;
}

namespace bcnn_detail {

template <typename T>
void kl_grads(BayesianParam<T>& p, double sb) {
  for (std::size_t i = 0; i < p.mu.values.numel(); ++i) {
    const double s = double(softplus(p.rho.values[i]));
    p.mu.grad[i] += T(double(p.mu.values[i]) / (sb * sb));
    const double ds = s / (sb * sb) - 1.0 / s;
    p.rho.grad[i] += T(ds * double(logistic(p.rho.values[i])));
  }
}

}  // namespace bcnn_detail

struct ElboParts {
  double total = 0;
  double data_term = 0;
  double kl = 0;
};

/* Single-sample reparameterized ELBO over a batch: for each pair, draw
   theta ~ q, run f_theta(y'), and compare with the zero-filled combine of
   the full measurement; add the closed-form KL once. Gradients are
   accumulated into the model. */
template <typename T>
ElboParts elbo_loss(BcnnModelT<T>& model,
                    const std::vector<const PairedMeasurementT<T>*>& batch,
                    const CoilSensitivitiesT<T>& sens,
                    const BcnnTrainConfig& cfg, RandomStream& stream) {
  if (batch.empty()) throw std::invalid_argument("elbo_loss: empty batch");
  ElboParts parts;
  const double g2sq = cfg.gamma2 * cfg.gamma2;
  for (const auto* pm : batch) {
    auto draw = sample_bcnn(model, stream);
    BcnnCache<T> cache;
    auto f = f_forward(model, draw, pm->yprime, sens, &cache);
    if (!cfg.kspace_data_term) {
      auto yhat = zero_filled_combine(pm->y, sens);
      Tensor<std::complex<T>> resid(f.dims());
      for (std::size_t i = 0; i < f.numel(); ++i) resid[i] = f[i] - yhat[i];
      parts.data_term += norm2_sq(resid) / (2 * g2sq);
      for (std::size_t i = 0; i < resid.numel(); ++i)
        resid[i] = std::complex<T>(std::complex<double>(resid[i]) / g2sq);
      f_backward(model, draw, pm->yprime, sens, cache, resid);
    } else {
      auto af = apply_A(f, sens, pm->y.mask);
      Tensor<std::complex<T>> rk(af.dims());
      for (std::size_t i = 0; i < af.numel(); ++i)
        rk[i] = af[i] - pm->y.data[i];
      parts.data_term += norm2_sq(rk) / (2 * g2sq);
      for (std::size_t i = 0; i < rk.numel(); ++i)
        rk[i] = std::complex<T>(std::complex<double>(rk[i]) / g2sq);
      auto g = apply_Ah(rk, sens, pm->y.mask);
      f_backward(model, draw, pm->yprime, sens, cache, g);
    }
  }
  parts.kl = bcnn_kl(model, cfg.prior_spread);
  bcnn_detail::kl_grads(model.img.bayes_w, cfg.prior_spread);
  bcnn_detail::kl_grads(model.img.bayes_b, cfg.prior_spread);
  bcnn_detail::kl_grads(model.ksp.bayes_w, cfg.prior_spread);
  bcnn_detail::kl_grads(model.ksp.bayes_b, cfg.prior_spread);
  parts.total = parts.data_term + parts.kl;
  return parts;
}

struct TrainLog {
  std::vector<double> epoch_data_term;
  std::vector<double> epoch_kl;
};

template <typename T = float>
BcnnModelT<T> train_bcnn(const std::vector<DatasetRecord<T>>& records,
                         const FNetArch& arch, const BcnnTrainConfig& cfg,
                         TrainLog* log = nullptr,
                         bool verbose = false) {
  if (records.empty()) throw std::invalid_argument("train_bcnn: empty dataset");
  const std::size_t coils = records.front().sens.coils();
  auto model = make_bcnn<T>(arch, coils, T(cfg.init_spread), cfg.seed);
  auto params = model.all_params();
  AdamState<T> opt;
  opt.cfg.lr = T(cfg.learning_rate);
  opt.init(params);

  RandomStream order_stream(cfg.seed, 0x6f7264u);
  RandomStream theta_stream(cfg.seed, 0x746874u);
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(order, order_stream);
    double epoch_data = 0, epoch_kl = 0;
    std::size_t steps = 0;
    for (std::size_t pos = 0; pos < order.size(); pos += cfg.batch_size) {
      std::vector<const PairedMeasurementT<T>*> batch;
      for (std::size_t b = pos; b < std::min(pos + cfg.batch_size, order.size()); ++b)
        batch.push_back(&records[order[b]].pair);
      model.zero_grads();
      auto parts = elbo_loss(model, batch, records[order[pos]].sens, cfg,
                             theta_stream);
      opt.step(params);
      epoch_data += parts.data_term;
      epoch_kl = parts.kl;
      ++steps;
    }
    if (log) {
      log->epoch_data_term.push_back(epoch_data / double(steps));
      log->epoch_kl.push_back(epoch_kl);
    }
    if (verbose)
      std::fprintf(stderr, "bcnn epoch %zu/%zu  data %.6f  kl %.1f\n",
                   epoch + 1, cfg.epochs, epoch_data / double(steps), epoch_kl);
  }
  return model;
}

/* n independent theta draws applied to the full-mask measurement y. */
template <typename T>
std::vector<Tensor<std::complex<T>>> sample_f_of_y(
    BcnnModelT<T>& model, const MultiCoilKSpaceT<T>& y,
    const CoilSensitivitiesT<T>& sens, std::size_t n, RandomStream stream) {
  std::vector<Tensor<std::complex<T>>> out;
  out.reserve(n);
  for (std::size_t m = 0; m < n; ++m) {
    RandomStream sub = stream.substream(m);
    auto draw = sample_bcnn(model, sub);
    out.push_back(f_apply(model, draw, y, sens));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence.

template <typename T>
io::WeightsFile bcnn_to_weights(const BcnnModelT<T>& model) {
  io::WeightsFile wf;
  Tensor<float> meta({4});
  meta[0] = float(model.arch.recursions);
  meta[1] = float(model.arch.layers);
  meta[2] = float(model.arch.filters);
  meta[3] = float(model.coils);
  wf.add("meta", meta);
  auto put = [&wf](const ParamTensor<T>& p) {
    wf.add(p.name, tensor_cast<float>(p.values));
  };
  for (const auto* m : {&model.img, &model.ksp}) {
    for (const auto& p : m->det_w) put(p);
    for (const auto& p : m->det_b) put(p);
    put(m->bayes_w.mu);
    put(m->bayes_w.rho);
    put(m->bayes_b.mu);
    put(m->bayes_b.rho);
  }
  return wf;
}

template <typename T = float>
BcnnModelT<T> bcnn_from_weights(const io::WeightsFile& wf) {
  const auto& meta = std::get<Tensor<float>>(wf.get("meta"));
  FNetArch arch;
  arch.recursions = std::size_t(meta[0]);
  arch.layers = std::size_t(meta[1]);
  arch.filters = std::size_t(meta[2]);
  const std::size_t coils = std::size_t(meta[3]);
  auto model = make_bcnn<T>(arch, coils, T(0.05), 0);
  auto fetch = [&wf](ParamTensor<T>& p) {
    p.values = tensor_cast<T>(std::get<Tensor<float>>(wf.get(p.name)));
    p.grad = Tensor<T>(p.values.dims());
  };
  for (auto* m : {&model.img, &model.ksp}) {
    for (auto& p : m->det_w) fetch(p);
    for (auto& p : m->det_b) fetch(p);
    fetch(m->bayes_w.mu);
    fetch(m->bayes_w.rho);
    fetch(m->bayes_b.mu);
    fetch(m->bayes_b.rho);
  }
  return model;
}

}  // namespace selfscore
