// Copyright (C) 2026 The selfscore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <type_traits>
#include <vector>

#include "selfscore/io.hpp"
#include "selfscore/nn.hpp"

namespace selfscore {

/* Geometric ladder eps_1 < ... < eps_L of perturbation scales. */
struct NoiseSchedule {
  std::vector<double> levels;

  std::size_t size() const { return levels.size(); }
  double eps(std::size_t i) const { return levels.at(i); }  // 0-based
  double eps_max() const { return levels.back(); }
  double eps_min() const { return levels.front(); }
};

inline NoiseSchedule make_schedule(double eps1, double epsL, std::size_t L) {
  if (!(eps1 > 0) || !(eps1 < epsL))
    throw std::invalid_argument("make_schedule: need 0 < eps1 < epsL");
  if (L < 2) throw std::invalid_argument("make_schedule: need at least two levels");
  NoiseSchedule s;
  s.levels.resize(L);
  const double ratio = epsL / eps1;
  for (std::size_t i = 0; i < L; ++i)
    s.levels[i] = eps1 * std::pow(ratio, double(i) / double(L - 1));
  s.levels.front() = eps1;  // pin the endpoints exactly
  s.levels.back() = epsL;
  return s;
}

// ---------------------------------------------------------------------------
// Residual conv net on the 2-channel (re/im) combined image.

struct ScoreArch {
  std::size_t blocks = 4;
  std::size_t filters = 32;
  std::size_t channels = 2;
};

template <typename T> struct ScoreNetT {
  ScoreArch arch;
  ParamTensor<T> stem_w, stem_b;
  struct Block {
    ParamTensor<T> w1, b1, w2, b2;
  };
  std::vector<Block> blocks;
  ParamTensor<T> head_w, head_b;

  std::vector<ParamTensor<T>*> all_params() {
    std::vector<ParamTensor<T>*> ps{&stem_w, &stem_b};
    for (auto& b : blocks) {
      ps.push_back(&b.w1);
      ps.push_back(&b.b1);
      ps.push_back(&b.w2);
      ps.push_back(&b.b2);
    }
    ps.push_back(&head_w);
    ps.push_back(&head_b);
    return ps;
  }
  void zero_grads() {
    for (auto* p : all_params()) p->zero_grad();
  }
};
using ScoreNet = ScoreNetT<float>;

template <typename T = float>
ScoreNetT<T> make_score_net(const ScoreArch& arch, std::uint64_t seed) {
  ScoreNetT<T> net;
  net.arch = arch;
  RandomStream rs(seed, 0x73636eu);
  const std::size_t f = arch.filters, ch = arch.channels;
  net.stem_w = ParamTensor<T>("stem.w", {f, ch, 3, 3});
  net.stem_b = ParamTensor<T>("stem.b", {f});
  he_init(net.stem_w.values, ch * 9, rs);
  net.blocks.resize(arch.blocks);
  for (std::size_t k = 0; k < arch.blocks; ++k) {
    auto& b = net.blocks[k];
    const std::string p = "block" + std::to_string(k);
    b.w1 = ParamTensor<T>(p + ".w1", {f, f, 3, 3});
    b.b1 = ParamTensor<T>(p + ".b1", {f});
    b.w2 = ParamTensor<T>(p + ".w2", {f, f, 3, 3});
    b.b2 = ParamTensor<T>(p + ".b2", {f});
    he_init(b.w1.values, f * 9, rs);
    // w2 zero: blocks start as the identity
  }
  net.head_w = ParamTensor<T>("head.w", {ch, f, 3, 3});
  net.head_b = ParamTensor<T>("head.b", {ch});
  // head zero: the initial score is exactly zero
  return net;
}

template <typename T> struct ScoreNetCache {
  Tensor<T> input;                  // stem input
  std::vector<Tensor<T>> block_in;  // h entering each block
  std::vector<Tensor<T>> block_t1;  // relu(conv1(h)) per block
  Tensor<T> head_in;                // relu(h) entering the head
  Tensor<T> pre_head;               // h before the head relu
};

template <typename T>
Tensor<T> score_net_forward(ScoreNetT<T>& net, const Tensor<T>& x,
                            std::type_identity_t<ScoreNetCache<T>>* cache) {
  if (x.rank() != 3 || x.dim(0) != net.arch.channels)
    throw std::invalid_argument("score_net_forward: channel mismatch");
  if (cache) {
    cache->input = x;
    cache->block_in.clear();
    cache->block_t1.clear();
  }
  Tensor<T> h, t, t2;
  conv3x3_forward(net.stem_w.values, net.stem_b.values, x, h);
  for (auto& b : net.blocks) {
    if (cache) cache->block_in.push_back(h);
    conv3x3_forward(b.w1.values, b.b1.values, h, t);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = t[i] > T(0) ? t[i] : T(0);
    if (cache) cache->block_t1.push_back(t);
    conv3x3_forward(b.w2.values, b.b2.values, t, t2);
    for (std::size_t i = 0; i < h.numel(); ++i) h[i] += t2[i];
  }
  if (cache) cache->pre_head = h;
  for (std::size_t i = 0; i < h.numel(); ++i) h[i] = h[i] > T(0) ? h[i] : T(0);
  if (cache) cache->head_in = h;
  Tensor<T> out;
  conv3x3_forward(net.head_w.values, net.head_b.values, h, out);
  return out;
}

template <typename T>
void score_net_backward(ScoreNetT<T>& net, const ScoreNetCache<T>& cache,
                        const Tensor<T>& dout) {
  Tensor<T> g, dt, dt1;
  conv3x3_backward(net.head_w.values, cache.head_in, dout, &net.head_w.grad,
                   &net.head_b.grad, &g);
  for (std::size_t i = 0; i < g.numel(); ++i)
    if (!(cache.pre_head[i] > T(0))) g[i] = T(0);
  for (std::size_t k = net.blocks.size(); k-- > 0;) {
    auto& b = net.blocks[k];
    conv3x3_backward(b.w2.values, cache.block_t1[k], g, &b.w2.grad, &b.b2.grad,
                     &dt);
    for (std::size_t i = 0; i < dt.numel(); ++i)
      if (!(cache.block_t1[k][i] > T(0))) dt[i] = T(0);
    conv3x3_backward(b.w1.values, cache.block_in[k], dt, &b.w1.grad, &b.b1.grad,
                     &dt1);
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += dt1[i];
  }
  Tensor<T> dx;
  conv3x3_backward(net.stem_w.values, cache.input, g, &net.stem_w.grad,
                   &net.stem_b.grad, &dx);
}

/* Noise-conditional score s(x, eps_i) = net(x as channels) / eps_i. */
template <typename T>
Tensor<std::complex<T>> score_apply(ScoreNetT<T>& net,
                                    const NoiseSchedule& schedule,
                                    const Tensor<std::complex<T>>& x,
                                    std::size_t level) {
  if (level >= schedule.size())
    throw std::invalid_argument("score_apply: level out of range");
  if (x.rank() != 2) throw std::invalid_argument("score_apply: expected [H,W]");
  Tensor<std::complex<T>> x3({1, x.dim(0), x.dim(1)});
  for (std::size_t i = 0; i < x.numel(); ++i) x3[i] = x[i];
  auto out = score_net_forward(net, complex_to_channels(x3), nullptr);
  auto oc = channels_to_complex(out);
  Tensor<std::complex<T>> s({x.dim(0), x.dim(1)});
  const T inv = T(1) / T(schedule.eps(level));  // quantized so persisted
                                                // schedules reproduce bits
  for (std::size_t i = 0; i < s.numel(); ++i) s[i] = oc[i] * inv;
  return s;
}

// ---------------------------------------------------------------------------
// Multi-scale denoising score-matching loss.

/* Residual core: r = net_out + z in channel space; loss = ||r||^2 / 2.
   Returns the loss and writes the net-output cotangent when asked. */
template <typename T>
double dsm_residual(const Tensor<T>& net_out, const Tensor<T>& z,
                    std::type_identity_t<Tensor<T>>* dnet) {
  if (!net_out.same_shape(z))
    throw std::invalid_argument("dsm_residual: shape mismatch");
  double loss = 0;
  if (dnet && !dnet->same_shape(net_out)) *dnet = Tensor<T>(net_out.dims());
  for (std::size_t i = 0; i < net_out.numel(); ++i) {
    const double r = double(net_out[i]) + double(z[i]);
    loss += r * r;
    if (dnet) (*dnet)[i] = T(r);
  }
  return 0.5 * loss;
}

/* One multi-scale DSM term per center: draw a uniform level i and
   z ~ CN(0, I), perturb the center, and penalize net(x~) + z (since
   eps_i * s(x~, eps_i) = net(x~) and (x~ - center)/eps_i = z). Averaged
   over the given centers; gradients accumulate into the net. */
template <typename T>
double dsm_loss(ScoreNetT<T>& net,
                const std::vector<const Tensor<std::complex<T>>*>& centers,
                const NoiseSchedule& schedule, RandomStream& stream,
                bool want_grads = true) {
  if (centers.empty()) throw std::invalid_argument("dsm_loss: no centers");
  double total = 0;
  Tensor<T> dnet;
  for (const auto* center : centers) {
    const std::size_t h = center->dim(0), w = center->dim(1);
    const std::size_t level = std::size_t(stream.next_u64() % schedule.size());
    const T eps = T(schedule.eps(level));
    Tensor<T> z({2, h, w});
    for (std::size_t i = 0; i < z.numel(); ++i) z[i] = T(stream.normal());
    Tensor<std::complex<T>> c3({1, h, w});
    for (std::size_t i = 0; i < center->numel(); ++i) c3[i] = (*center)[i];
    auto xt = complex_to_channels(c3);
    for (std::size_t i = 0; i < xt.numel(); ++i) xt[i] += eps * z[i];
    ScoreNetCache<T> cache;
    auto out = score_net_forward(net, xt, want_grads ? &cache : nullptr);
    total += dsm_residual(out, z, want_grads ? &dnet : nullptr);
    if (want_grads) {
      const T scale = T(1.0 / double(centers.size()));
      for (std::size_t i = 0; i < dnet.numel(); ++i) dnet[i] *= scale;
      score_net_backward(net, cache, dnet);
    }
  }
  return total / double(centers.size());
}

/* Self-supervised variant: centers are f_theta(y) draws. */
template <typename T>
double dsm_loss_selfsup(ScoreNetT<T>& net,
                        const std::vector<const Tensor<std::complex<T>>*>& centers,
                        const NoiseSchedule& schedule, RandomStream& stream,
                        bool want_grads = true) {
  return dsm_loss(net, centers, schedule, stream, want_grads);
}

/* Fully supervised variant: centers are ground-truth images. Same code
   path, so it degenerates bit-exactly to the self-supervised loss. */
template <typename T>
double dsm_loss_supervised(ScoreNetT<T>& net,
                           const std::vector<const Tensor<std::complex<T>>*>& centers,
                           const NoiseSchedule& schedule, RandomStream& stream,
                           bool want_grads = true) {
  return dsm_loss(net, centers, schedule, stream, want_grads);
}

// ---------------------------------------------------------------------------
// Training.

template <typename T> struct ScoreModelT {
  ScoreNetT<T> net;
  EmaState<T> ema;
  NoiseSchedule schedule;
};
using ScoreModel = ScoreModelT<float>;

/* Net with the EMA shadow weights materialized (used for sampling). */
template <typename T>
ScoreNetT<T> ema_snapshot(const ScoreModelT<T>& model) {
  ScoreNetT<T> net = model.net;
  auto params = net.all_params();
  if (model.ema.shadow.size() != params.size())
    throw std::invalid_argument("ema_snapshot: ema not initialized");
  for (std::size_t k = 0; k < params.size(); ++k)
    params[k]->values = model.ema.shadow[k];
  return net;
}

struct ScoreTrainConfig {
  std::size_t epochs = 100;
  double learning_rate = 1e-4;
  double ema_rate = 0.999;
  std::uint64_t seed = 0;
};

/* Adam + per-step EMA over a pool of centers per training image. Each
   step perturbs one center drawn from one image's pool. */
template <typename T = float>
ScoreModelT<T> train_score(
    const std::vector<std::vector<Tensor<std::complex<T>>>>& center_pools,
    const ScoreArch& arch, const NoiseSchedule& schedule,
    const ScoreTrainConfig& cfg, std::vector<double>* epoch_losses = nullptr,
    bool verbose = false) {
  if (center_pools.empty())
    throw std::invalid_argument("train_score: empty center source");
  ScoreModelT<T> model;
  model.net = make_score_net<T>(arch, cfg.seed);
  model.schedule = schedule;
  auto params = model.net.all_params();
  AdamState<T> opt;
  opt.cfg.lr = T(cfg.learning_rate);
  opt.init(params);
  model.ema.rate = T(cfg.ema_rate);
  model.ema.init(params);

  RandomStream order_stream(cfg.seed, 0x6f7332u);
  RandomStream noise_stream(cfg.seed, 0x7a7332u);
  std::vector<std::size_t> order(center_pools.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(order, order_stream);
    double sum = 0;
    for (std::size_t idx : order) {
      const auto& pool = center_pools[idx];
      const auto& center =
          pool[pool.size() == 1 ? 0 : std::size_t(noise_stream.next_u64() % pool.size())];
      model.net.zero_grads();
      std::vector<const Tensor<std::complex<T>>*> batch{&center};
      sum += dsm_loss(model.net, batch, schedule, noise_stream, true);
      opt.step(params);
      model.ema.update(params);
    }
    if (epoch_losses) epoch_losses->push_back(sum / double(order.size()));
    if (verbose)
      std::fprintf(stderr, "score epoch %zu/%zu  dsm %.4f\n", epoch + 1,
                   cfg.epochs, sum / double(order.size()));
  }
  return model;
}

// ---------------------------------------------------------------------------
// Persistence (schedule stored alongside the weights).

template <typename T>
io::WeightsFile score_to_weights(const ScoreModelT<T>& model) {
  io::WeightsFile wf;
  Tensor<float> meta({3});
  meta[0] = float(model.net.arch.blocks);
  meta[1] = float(model.net.arch.filters);
  meta[2] = float(model.net.arch.channels);
  wf.add("meta", meta);
  Tensor<float> sched({model.schedule.size()});
  for (std::size_t i = 0; i < sched.numel(); ++i)
    sched[i] = float(model.schedule.levels[i]);
  wf.add("noise_schedule", sched);
  auto& m = const_cast<ScoreModelT<T>&>(model);
  auto params = m.net.all_params();
  for (auto* p : params) wf.add(p->name, tensor_cast<float>(p->values));
  for (std::size_t k = 0; k < params.size(); ++k)
    wf.add("ema." + params[k]->name, tensor_cast<float>(model.ema.shadow[k]));
  return wf;
}

template <typename T = float>
ScoreModelT<T> score_from_weights(const io::WeightsFile& wf) {
  const auto& meta = std::get<Tensor<float>>(wf.get("meta"));
  ScoreArch arch;
  arch.blocks = std::size_t(meta[0]);
  arch.filters = std::size_t(meta[1]);
  arch.channels = std::size_t(meta[2]);
  ScoreModelT<T> model;
  model.net = make_score_net<T>(arch, 0);
  const auto& sched = std::get<Tensor<float>>(wf.get("noise_schedule"));
  model.schedule.levels.resize(sched.numel());
  for (std::size_t i = 0; i < sched.numel(); ++i)
    model.schedule.levels[i] = double(sched[i]);
  auto params = model.net.all_params();
  for (auto* p : params) {
    p->values = tensor_cast<T>(std::get<Tensor<float>>(wf.get(p->name)));
    p->grad = Tensor<T>(p->values.dims());
  }
  model.ema.rate = T(0.999);
  model.ema.shadow.clear();
  for (auto* p : params)
    model.ema.shadow.push_back(
        tensor_cast<T>(std::get<Tensor<float>>(wf.get("ema." + p->name))));
  return model;
}

}  // namespace selfscore
