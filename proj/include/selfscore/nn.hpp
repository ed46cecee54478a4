// Copyright (C) 2026 The selfscore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "selfscore/random.hpp"
#include "selfscore/tensor.hpp"

namespace selfscore {

template <typename T> struct ParamTensor {
  std::string name;
  Tensor<T> values;
  Tensor<T> grad;

  ParamTensor() = default;
  ParamTensor(std::string n, std::vector<std::size_t> dims)
      : name(std::move(n)), values(dims), grad(dims) {}

  void zero_grad() {
    for (std::size_t i = 0; i < grad.numel(); ++i) grad[i] = T(0);
  }
};

/* Mean/pre-spread pair of a Bayesian parameter; spread = softplus(rho). */
template <typename T> struct BayesianParam {
  ParamTensor<T> mu;
  ParamTensor<T> rho;

  BayesianParam() = default;
  BayesianParam(const std::string& n, std::vector<std::size_t> dims)
      : mu(n + ".mu", dims), rho(n + ".rho", dims) {}
};

template <typename T> T softplus(T x) {
  if (x > T(20)) return x;
  if (x < T(-20)) return std::exp(x);
  return std::log1p(std::exp(x));
}
template <typename T> T softplus_inverse(T y) {
  // solves softplus(x) = y for y > 0
  if (y > T(20)) return y;
  return std::log(std::expm1(y));
}
template <typename T> T logistic(T x) { return T(1) / (T(1) + std::exp(-x)); }

/* theta = mu + softplus(rho) * eps with eps ~ N(0,I); eps is kept so the
   reparameterization path can route gradients back to (mu, rho). */
template <typename T> struct BayesSample {
  Tensor<T> theta;
  Tensor<T> eps;
};

template <typename T>
BayesSample<T> sample_bayesian(const Tensor<T>& mu, const Tensor<T>& rho,
                               RandomStream& stream) {
  if (!mu.same_shape(rho))
    throw std::invalid_argument("sample_bayesian: mu/rho shape mismatch");
  BayesSample<T> s{Tensor<T>(mu.dims()), Tensor<T>(mu.dims())};
  for (std::size_t i = 0; i < mu.numel(); ++i) {
    const T e = T(stream.normal());
    s.eps[i] = e;
    s.theta[i] = mu[i] + softplus(rho[i]) * e;
  }
  return s;
}

/* Chain rule through theta = mu + softplus(rho) * eps. */
template <typename T>
void accumulate_bayesian_grads(const Tensor<T>& dtheta, const Tensor<T>& eps,
                               const Tensor<T>& rho, Tensor<T>& dmu,
                               Tensor<T>& drho) {
  for (std::size_t i = 0; i < dtheta.numel(); ++i) {
    dmu[i] += dtheta[i];
    drho[i] += dtheta[i] * eps[i] * logistic(rho[i]);
  }
}

// ---------------------------------------------------------------------------
// 3x3 same-size zero-padded convolution via im2col + GEMM.

namespace nn_detail {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
std::vector<T, AlignedAllocator<T>>& scratch(int which) {
  thread_local std::vector<T, AlignedAllocator<T>> bufs[3];
  return bufs[which];
}

/* Patch matrix: row (c*9 + ky*3 + kx), column (y*W + x) holds
   in[c, y+ky-1, x+kx-1], zero outside the image. */
template <typename T>
void im2col3(const T* in, std::size_t cin, std::size_t h, std::size_t w,
             T* patches) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < cin; ++c) {
    const T* plane = in + c * hw;
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        T* row = patches + ((c * 9) + std::size_t(ky) * 3 + std::size_t(kx)) * hw;
        const int dy = ky - 1, dx = kx - 1;
        for (std::size_t y = 0; y < h; ++y) {
          T* dst = row + y * w;
          const long iy = long(y) + dy;
          if (iy < 0 || iy >= long(h)) {
            std::memset(dst, 0, w * sizeof(T));
            continue;
          }
          const T* src = plane + std::size_t(iy) * w;
          if (dx == 0) {
            std::memcpy(dst, src, w * sizeof(T));
          } else if (dx == -1) {
            dst[0] = T(0);
            std::memcpy(dst + 1, src, (w - 1) * sizeof(T));
          } else {  // dx == +1
            std::memcpy(dst, src + 1, (w - 1) * sizeof(T));
            dst[w - 1] = T(0);
          }
        }
      }
  }
}

/* Adjoint of im2col3: scatter-add patch rows back into the image grid. */
template <typename T>
void col2im3(const T* patches, std::size_t cin, std::size_t h, std::size_t w,
             T* din) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < cin; ++c) {
    T* plane = din + c * hw;
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const T* row = patches + ((c * 9) + std::size_t(ky) * 3 + std::size_t(kx)) * hw;
        const int dy = ky - 1, dx = kx - 1;
        for (std::size_t y = 0; y < h; ++y) {
          const long iy = long(y) + dy;
          if (iy < 0 || iy >= long(h)) continue;
          T* dst = plane + std::size_t(iy) * w;
          const T* src = row + y * w;
          if (dx == 0) {
            for (std::size_t x = 0; x < w; ++x) dst[x] += src[x];
          } else if (dx == -1) {
            for (std::size_t x = 1; x < w; ++x) dst[x - 1] += src[x];
          } else {
            for (std::size_t x = 0; x + 1 < w; ++x) dst[x + 1] += src[x];
          }
        }
      }
  }
}

}  // namespace nn_detail

/* out[o] = b[o] + sum_{c,ky,kx} w[o,c,ky,kx] * in[c, y+ky-1, x+kx-1] */
template <typename T>
void conv3x3_forward(const Tensor<T>& w, const Tensor<T>& b,
                     const Tensor<T>& in, Tensor<T>& out) {
  const std::size_t cout = w.dim(0), cin = w.dim(1);
  if (w.rank() != 4 || w.dim(2) != 3 || w.dim(3) != 3)
    throw std::invalid_argument("conv3x3: weights must be [out,in,3,3]");
  if (in.rank() != 3 || in.dim(0) != cin)
    throw std::invalid_argument("conv3x3: input channel mismatch");
  const std::size_t h = in.dim(1), iw = in.dim(2), hw = h * iw;
  if (out.rank() != 3 || out.dim(0) != cout || out.dim(1) != h || out.dim(2) != iw)
    out = Tensor<T>({cout, h, iw});

  auto& pbuf = nn_detail::scratch<T>(0);
  pbuf.resize(cin * 9 * hw);
  nn_detail::im2col3(in.data(), cin, h, iw, pbuf.data());

  using Mat = nn_detail::EMat<T>;
  Eigen::Map<const Mat> wm(w.data(), cout, cin * 9);
  Eigen::Map<const Mat> pm(pbuf.data(), cin * 9, hw);
  Eigen::Map<Mat> om(out.data(), cout, hw);
  om.noalias() = wm * pm;
  for (std::size_t o = 0; o < cout; ++o) om.row(o).array() += b[o];
}

/* Accumulates dw/db, writes din (overwritten). */
template <typename T>
void conv3x3_backward(const Tensor<T>& w, const Tensor<T>& in,
                      const Tensor<T>& dout, Tensor<T>* dw, Tensor<T>* db,
                      Tensor<T>* din) {
  const std::size_t cout = w.dim(0), cin = w.dim(1);
  const std::size_t h = in.dim(1), iw = in.dim(2), hw = h * iw;
  using Mat = nn_detail::EMat<T>;
  Eigen::Map<const Mat> dom(dout.data(), cout, hw);

  if (dw || db) {
    auto& pbuf = nn_detail::scratch<T>(0);
    pbuf.resize(cin * 9 * hw);
    nn_detail::im2col3(in.data(), cin, h, iw, pbuf.data());
    Eigen::Map<const Mat> pm(pbuf.data(), cin * 9, hw);
    if (dw) {
      Eigen::Map<Mat> dwm(dw->data(), cout, cin * 9);
      dwm.noalias() += dom * pm.transpose();
    }
    if (db)
      for (std::size_t o = 0; o < cout; ++o) (*db)[o] += dom.row(o).sum();
  }
  if (din) {
    auto& dpbuf = nn_detail::scratch<T>(1);
    dpbuf.resize(cin * 9 * hw);
    Eigen::Map<const Mat> wm(w.data(), cout, cin * 9);
    Eigen::Map<Mat> dpm(dpbuf.data(), cin * 9, hw);
    dpm.noalias() = wm.transpose() * dom;
    if (din->rank() != 3 || din->dim(0) != cin || din->dim(1) != h || din->dim(2) != iw)
      *din = Tensor<T>({cin, h, iw});
    std::fill(din->data(), din->data() + din->numel(), T(0));
    nn_detail::col2im3(dpbuf.data(), cin, h, iw, din->data());
  }
}

// ---------------------------------------------------------------------------
// Plain conv stack: conv -> relu -> ... -> conv (linear last layer).

/* One layer of a stack as seen by the forward/backward driver. The weight
   views may point at plain parameters or at sampled Bayesian draws; grad
   sinks may be null when a gradient is not needed. */
template <typename T> struct LayerRef {
  const Tensor<T>* w = nullptr;
  const Tensor<T>* b = nullptr;
  Tensor<T>* dw = nullptr;
  Tensor<T>* db = nullptr;
};

template <typename T> struct StackCache {
  std::vector<Tensor<T>> acts;  // acts[l] = input of conv l
};

template <typename T>
Tensor<T> stack_forward(const std::vector<LayerRef<T>>& layers,
                        const Tensor<T>& in, StackCache<T>* cache) {
  if (cache) {
    cache->acts.clear();
    cache->acts.reserve(layers.size());
  }
  Tensor<T> cur = in;
  Tensor<T> next;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (cache) cache->acts.push_back(cur);
    conv3x3_forward(*layers[l].w, *layers[l].b, cur, next);
    if (l + 1 < layers.size())
      for (std::size_t i = 0; i < next.numel(); ++i)
        next[i] = next[i] > T(0) ? next[i] : T(0);
    std::swap(cur, next);
  }
  return cur;
}

/* Returns the input cotangent; accumulates parameter grads via LayerRef. */
template <typename T>
Tensor<T> stack_backward(const std::vector<LayerRef<T>>& layers,
                         const StackCache<T>& cache, const Tensor<T>& dout) {
  Tensor<T> g = dout;
  Tensor<T> din;
  for (std::size_t li = layers.size(); li-- > 0;) {
    conv3x3_backward(*layers[li].w, cache.acts[li], g, layers[li].dw,
                     layers[li].db, &din);
    if (li > 0) {
      // relu mask from the cached post-activation input of conv li
      const Tensor<T>& act = cache.acts[li];
      for (std::size_t i = 0; i < din.numel(); ++i)
        if (!(act[i] > T(0))) din[i] = T(0);
    }
    std::swap(g, din);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Optimizers.

template <typename T> struct AdamConfig {
  T lr = T(1e-4);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
};

template <typename T> struct AdamState {
  AdamConfig<T> cfg;
  std::vector<Tensor<T>> m, v;
  std::int64_t t = 0;

  void init(const std::vector<ParamTensor<T>*>& params) {
    m.clear();
    v.clear();
    for (auto* p : params) {
      m.emplace_back(p->values.dims());
      v.emplace_back(p->values.dims());
    }
    t = 0;
  }

  /* Standard bias-corrected update from the accumulated grads. */
  void step(const std::vector<ParamTensor<T>*>& params) {
    if (m.size() != params.size())
      throw std::invalid_argument("AdamState: not initialized for these parameters");
    ++t;
    const double c1 = 1.0 - std::pow(double(cfg.beta1), double(t));
    const double c2 = 1.0 - std::pow(double(cfg.beta2), double(t));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& p = params[k]->values;
      auto& g = params[k]->grad;
      for (std::size_t i = 0; i < p.numel(); ++i) {
        m[k][i] = cfg.beta1 * m[k][i] + (T(1) - cfg.beta1) * g[i];
        v[k][i] = cfg.beta2 * v[k][i] + (T(1) - cfg.beta2) * g[i] * g[i];
        const double mh = double(m[k][i]) / c1;
        const double vh = double(v[k][i]) / c2;
        p[i] -= T(double(cfg.lr) * mh / (std::sqrt(vh) + double(cfg.eps)));
      }
    }
  }
};

template <typename T> struct EmaState {
  T rate = T(0.999);
  std::vector<Tensor<T>> shadow;

  void init(const std::vector<ParamTensor<T>*>& params) {
    shadow.clear();
    for (auto* p : params) shadow.push_back(p->values);
  }

  /* shadow <- rate * shadow + (1 - rate) * params */
  void update(const std::vector<ParamTensor<T>*>& params) {
    if (shadow.size() != params.size())
      throw std::invalid_argument("EmaState: not initialized for these parameters");
    for (std::size_t k = 0; k < params.size(); ++k)
      for (std::size_t i = 0; i < shadow[k].numel(); ++i)
        shadow[k][i] = rate * shadow[k][i] + (T(1) - rate) * params[k]->values[i];
  }
};

// ---------------------------------------------------------------------------
// Initialization.

template <typename T>
void he_init(Tensor<T>& w, std::size_t fan_in, RandomStream& stream) {
  const double s = std::sqrt(2.0 / double(fan_in));
  for (std::size_t i = 0; i < w.numel(); ++i) w[i] = T(s * stream.normal());
}

// ---------------------------------------------------------------------------
// Complex image stacks <-> real channel stacks (real/imag interleaved per
// coil: channel 2c is Re of coil c, channel 2c+1 is Im).

template <typename T>
Tensor<T> complex_to_channels(const Tensor<std::complex<T>>& x) {
  if (x.rank() != 3)
    throw std::invalid_argument("complex_to_channels: expected [C,H,W]");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2), hw = h * w;
  Tensor<T> out({2 * c, h, w});
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t i = 0; i < hw; ++i) {
      out[(2 * ci) * hw + i] = x[ci * hw + i].real();
      out[(2 * ci + 1) * hw + i] = x[ci * hw + i].imag();
    }
  return out;
}

template <typename T>
Tensor<std::complex<T>> channels_to_complex(const Tensor<T>& x) {
  if (x.rank() != 3 || x.dim(0) % 2 != 0)
    throw std::invalid_argument("channels_to_complex: expected [2C,H,W]");
  const std::size_t c = x.dim(0) / 2, h = x.dim(1), w = x.dim(2), hw = h * w;
  Tensor<std::complex<T>> out({c, h, w});
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t i = 0; i < hw; ++i)
      out[ci * hw + i] = {x[(2 * ci) * hw + i], x[(2 * ci + 1) * hw + i]};
  return out;
}

}  // namespace selfscore
