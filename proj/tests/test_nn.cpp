// Copyright (C) 2026 The selfscore authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "selfscore/nn.hpp"

using namespace selfscore;

namespace {

/* Central-difference gradient oracle over a closure loss(params...). */
template <typename F>
double central_diff(F&& loss, double& slot, double h = 1e-4) {
  const double keep = slot;
  slot = keep + h;
  const double up = loss();
  slot = keep - h;
  const double dn = loss();
  slot = keep;
  return (up - dn) / (2 * h);
}

template <typename T>
std::vector<LayerRef<T>> refs_of(std::vector<ParamTensor<T>>& ws,
                                 std::vector<ParamTensor<T>>& bs) {
  std::vector<LayerRef<T>> r;
  for (std::size_t i = 0; i < ws.size(); ++i)
    r.push_back({&ws[i].values, &bs[i].values, &ws[i].grad, &bs[i].grad});
  return r;
}

}  // namespace

TEST_CASE("conv3x3 basics") {
  RandomStream rs(31, 0);

  SECTION("zero weights give zero output") {
    Tensor<float> w({2, 3, 3, 3}), b({2});
    auto in = gaussian_real<float>(rs, {3, 6, 6});
    Tensor<float> out;
    conv3x3_forward(w, b, in, out);
    for (std::size_t i = 0; i < out.numel(); ++i) REQUIRE(out[i] == 0.0f);
  }

  SECTION("identity kernel passes the input through") {
    Tensor<float> w({1, 1, 3, 3}), b({1});
    w[4] = 1.0f;  // center tap
    auto in = gaussian_real<float>(rs, {1, 5, 7});
    Tensor<float> out;
    conv3x3_forward(w, b, in, out);
    for (std::size_t i = 0; i < in.numel(); ++i)
      REQUIRE(out[i] == Catch::Approx(in[i]).margin(1e-7));
  }

  SECTION("doubling the input doubles a linear net") {
    std::vector<ParamTensor<float>> ws, bs;
    ws.emplace_back("w0", std::vector<std::size_t>{4, 2, 3, 3});
    bs.emplace_back("b0", std::vector<std::size_t>{4});
    ws.emplace_back("w1", std::vector<std::size_t>{2, 4, 3, 3});
    bs.emplace_back("b1", std::vector<std::size_t>{2});
    he_init(ws[0].values, 2 * 9, rs);
    he_init(ws[1].values, 4 * 9, rs);
    // single layer at a time = linear maps, so compose manually without relu
    auto in = gaussian_real<float>(rs, {2, 6, 6});
    Tensor<float> in2(in.dims());
    for (std::size_t i = 0; i < in.numel(); ++i) in2[i] = 2 * in[i];
    Tensor<float> o1, o2, t;
    conv3x3_forward(ws[0].values, bs[0].values, in, t);
    conv3x3_forward(ws[1].values, bs[1].values, t, o1);
    conv3x3_forward(ws[0].values, bs[0].values, in2, t);
    conv3x3_forward(ws[1].values, bs[1].values, t, o2);
    // biases are zero, so the composition is linear
    for (std::size_t i = 0; i < o1.numel(); ++i)
      REQUIRE(o2[i] == Catch::Approx(2 * o1[i]).margin(1e-5));
  }

  SECTION("channel mismatch raises") {
    Tensor<float> w({2, 3, 3, 3}), b({2});
    Tensor<float> in({4, 5, 5}), out;
    REQUIRE_THROWS_AS(conv3x3_forward(w, b, in, out), std::invalid_argument);
  }
}

TEST_CASE("stack gradients pass central differences") {
  RandomStream rs(32, 0);
  // double instantiation so the finite-difference oracle is meaningful
  std::vector<ParamTensor<double>> ws, bs;
  ws.emplace_back("w0", std::vector<std::size_t>{3, 2, 3, 3});
  bs.emplace_back("b0", std::vector<std::size_t>{3});
  ws.emplace_back("w1", std::vector<std::size_t>{2, 3, 3, 3});
  bs.emplace_back("b1", std::vector<std::size_t>{2});
  he_init(ws[0].values, 18, rs);
  he_init(ws[1].values, 27, rs);
  for (std::size_t i = 0; i < 3; ++i) bs[0].values[i] = 0.1 * rs.normal();

  auto in = gaussian_real<double>(rs, {2, 4, 4});
  auto layers = refs_of(ws, bs);

  auto loss_fn = [&]() {
    auto out = stack_forward<double>(layers, in, nullptr);
    return 0.5 * norm2_sq(out);
  };

  StackCache<double> cache;
  auto out = stack_forward<double>(layers, in, &cache);
  Tensor<double> dout = out;  // d(0.5||out||^2)/dout = out
  for (auto& p : ws) p.zero_grad();
  for (auto& p : bs) p.zero_grad();
  auto din = stack_backward<double>(layers, cache, dout);

  int checked = 0;
  for (auto* group : {&ws, &bs}) {
    for (auto& p : *group) {
      for (std::size_t i = 0; i < p.values.numel(); i += 7) {
        double fd = central_diff(loss_fn, p.values[i]);
        double an = p.grad[i];
        double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
        REQUIRE(std::abs(fd - an) / denom <= 1e-3);
        ++checked;
      }
    }
  }
  REQUIRE(checked > 10);

  // input cotangent too
  for (std::size_t i = 0; i < in.numel(); i += 5) {
    double fd = central_diff(loss_fn, in[i]);
    double denom = std::max({std::abs(fd), std::abs(din[i]), 1e-8});
    REQUIRE(std::abs(fd - din[i]) / denom <= 1e-3);
  }
}

TEST_CASE("zero cotangent gives zero grads") {
  RandomStream rs(33, 0);
  std::vector<ParamTensor<float>> ws, bs;
  ws.emplace_back("w0", std::vector<std::size_t>{2, 2, 3, 3});
  bs.emplace_back("b0", std::vector<std::size_t>{2});
  he_init(ws[0].values, 18, rs);
  auto layers = refs_of(ws, bs);
  auto in = gaussian_real<float>(rs, {2, 4, 4});
  StackCache<float> cache;
  auto out = stack_forward<float>(layers, in, &cache);
  Tensor<float> dout(out.dims());
  ws[0].zero_grad();
  bs[0].zero_grad();
  stack_backward<float>(layers, cache, dout);
  for (std::size_t i = 0; i < ws[0].grad.numel(); ++i) REQUIRE(ws[0].grad[i] == 0.0f);
  for (std::size_t i = 0; i < bs[0].grad.numel(); ++i) REQUIRE(bs[0].grad[i] == 0.0f);
}

TEST_CASE("analytic gradient of a scaled linear layer") {
  // out = a * (k (*) x) for a 1-layer net whose kernel is scaled by a:
  // d(0.5||out||^2)/da at a=1 equals ||k (*) x||^2.
  RandomStream rs(34, 0);
  Tensor<double> w({1, 1, 3, 3}), b({1});
  he_init(w, 9, rs);
  auto in = gaussian_real<double>(rs, {1, 5, 5});
  Tensor<double> base;
  conv3x3_forward(w, b, in, base);
  const double expect = norm2_sq(base);

  // realize the scale as w' = a*w; dL/da = sum_i dL/dw_i * w_i
  Tensor<double> dw(w.dims()), db(b.dims()), din;
  conv3x3_backward(w, in, base, &dw, &db, &din);
  double got = 0;
  for (std::size_t i = 0; i < w.numel(); ++i) got += dw[i] * w[i];
  REQUIRE(got == Catch::Approx(expect).epsilon(1e-9));
}

TEST_CASE("sample_bayesian") {
  SECTION("vanishing spread returns the mean") {
    Tensor<float> mu({4}), rho({4});
    for (int i = 0; i < 4; ++i) {
      mu[i] = 0.5f * float(i);
      rho[i] = -200.0f;  // softplus underflows to exactly zero
    }
    RandomStream rs(35, 0);
    auto s = sample_bayesian(mu, rho, rs);
    for (int i = 0; i < 4; ++i) REQUIRE(s.theta[i] == mu[i]);
  }

  SECTION("moments of a scalar weight", "[stat]") {
    Tensor<double> mu({1}), rho({1});
    mu[0] = 0.5;
    rho[0] = softplus_inverse(0.1);
    RandomStream rs(36, 0);
    double sum = 0, sumsq = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      auto s = sample_bayesian(mu, rho, rs);
      sum += s.theta[0];
      sumsq += s.theta[0] * s.theta[0];
    }
    double mean = sum / n;
    double sd = std::sqrt(sumsq / n - mean * mean);
    REQUIRE(std::abs(mean - 0.5) < 0.002);
    REQUIRE(std::abs(sd - 0.1) < 0.002);
  }

  SECTION("reparameterization grads") {
    Tensor<double> rho({1});
    rho[0] = 0.3;
    Tensor<double> dtheta({1}), eps({1}), dmu({1}), drho({1});
    dtheta[0] = 2.0;
    eps[0] = -1.5;
    accumulate_bayesian_grads(dtheta, eps, rho, dmu, drho);
    REQUIRE(dmu[0] == 2.0);
    REQUIRE(drho[0] == Catch::Approx(2.0 * -1.5 * logistic(0.3)).epsilon(1e-12));
  }
}

TEST_CASE("adam") {
  SECTION("first step moves by about lr against the gradient sign") {
    ParamTensor<float> p("p", {3});
    p.values[0] = 1.0f; p.values[1] = -2.0f; p.values[2] = 0.5f;
    p.grad[0] = 0.3f; p.grad[1] = -0.7f; p.grad[2] = 1e-9f;
    AdamState<float> opt;
    opt.cfg.lr = 0.01f;
    std::vector<ParamTensor<float>*> ps{&p};
    opt.init(ps);
    auto before = p.values;
    opt.step(ps);
    // update = lr * g / (|g| + eps) at t=1
    REQUIRE(before[0] - p.values[0] ==
            Catch::Approx(0.01 * 0.3 / (0.3 + 1e-8)).epsilon(1e-4));
    REQUIRE(before[1] - p.values[1] ==
            Catch::Approx(-0.01 * 0.7 / (0.7 + 1e-8)).epsilon(1e-4));
    REQUIRE(std::abs(before[2] - p.values[2]) < 0.011);
  }

  SECTION("zero grad leaves parameters unchanged") {
    ParamTensor<float> p("p", {2});
    p.values[0] = 3.0f; p.values[1] = -1.0f;
    AdamState<float> opt;
    std::vector<ParamTensor<float>*> ps{&p};
    opt.init(ps);
    for (int i = 0; i < 5; ++i) opt.step(ps);
    REQUIRE(p.values[0] == 3.0f);
    REQUIRE(p.values[1] == -1.0f);
  }

  SECTION("two runs are bit-identical") {
    auto run = [] {
      RandomStream rs(37, 0);
      ParamTensor<float> p("p", {8});
      he_init(p.values, 8, rs);
      AdamState<float> opt;
      std::vector<ParamTensor<float>*> ps{&p};
      opt.init(ps);
      for (int it = 0; it < 20; ++it) {
        for (std::size_t i = 0; i < 8; ++i)
          p.grad[i] = float(rs.normal());
        opt.step(ps);
        p.zero_grad();
      }
      return p.values;
    };
    auto a = run(), b = run();
    for (std::size_t i = 0; i < 8; ++i) REQUIRE(a[i] == b[i]);
  }
}

TEST_CASE("ema") {
  ParamTensor<float> p("p", {2});
  p.values[0] = 4.0f; p.values[1] = -2.0f;
  std::vector<ParamTensor<float>*> ps{&p};

  SECTION("rate zero copies, rate one freezes") {
    EmaState<float> e0{0.0f};
    e0.init(ps);
    p.values[0] = 7.0f;
    e0.update(ps);
    REQUIRE(e0.shadow[0][0] == 7.0f);

    EmaState<float> e1{1.0f};
    e1.init(ps);
    p.values[0] = 9.0f;
    e1.update(ps);
    REQUIRE(e1.shadow[0][0] == 7.0f);  // unchanged from init copy
  }

  SECTION("geometric approach to constant parameters") {
    EmaState<double> e{0.9};
    ParamTensor<double> q("q", {1});
    q.values[0] = 5.0;
    std::vector<ParamTensor<double>*> qs{&q};
    e.init(qs);
    e.shadow[0][0] = 0.0;
    const int k = 12;
    for (int i = 0; i < k; ++i) e.update(qs);
    REQUIRE(e.shadow[0][0] ==
            Catch::Approx((1.0 - std::pow(0.9, k)) * 5.0).epsilon(1e-12));
  }
}
