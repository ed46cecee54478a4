// Copyright (C) 2026 The selfscore authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>
#include <filesystem>

#include "selfscore/score.hpp"

using namespace selfscore;

TEST_CASE("make_schedule") {
  SECTION("paper preset endpoints are exact") {
    auto s = make_schedule(0.0066, 50.0, 266);
    REQUIRE(s.size() == 266);
    REQUIRE(s.levels.front() == 0.0066);
    REQUIRE(s.levels.back() == 50.0);
    for (std::size_t i = 1; i < s.size(); ++i) REQUIRE(s.levels[i] > s.levels[i - 1]);
  }

  SECTION("two levels are the endpoints") {
    auto s = make_schedule(0.1, 2.0, 2);
    REQUIRE(s.levels == std::vector<double>{0.1, 2.0});
  }

  SECTION("constant geometric ratio") {
    auto s = make_schedule(0.01, 16.0, 32);
    const double r0 = s.levels[1] / s.levels[0];
    for (std::size_t i = 1; i + 1 < s.size(); ++i) {
      const double r = s.levels[i + 1] / s.levels[i];
      REQUIRE(std::abs(r - r0) <= 1e-9 * r0);
    }
  }

  SECTION("ordering violations raise") {
    REQUIRE_THROWS_AS(make_schedule(2.0, 1.0, 8), std::invalid_argument);
    REQUIRE_THROWS_AS(make_schedule(0.0, 1.0, 8), std::invalid_argument);
    REQUIRE_THROWS_AS(make_schedule(0.1, 1.0, 1), std::invalid_argument);
  }
}

TEST_CASE("score_apply") {
  auto sched = make_schedule(0.1, 4.0, 6);
  ScoreArch arch{2, 8, 2};

  SECTION("fresh net has an exactly zero score at every level") {
    auto net = make_score_net<float>(arch, 5);  // zero head by construction
    RandomStream rs(5, 1);
    auto x = gaussian_complex<float>(rs, {6, 6});
    for (std::size_t lvl = 0; lvl < sched.size(); ++lvl) {
      auto s = score_apply(net, sched, x, lvl);
      for (std::size_t i = 0; i < s.numel(); ++i) REQUIRE(s[i] == std::complex<float>{});
    }
  }

  SECTION("levels differ only by the conditioning scale") {
    auto net = make_score_net<float>(arch, 6);
    RandomStream rs(6, 1);
    he_init(net.head_w.values, arch.filters * 9, rs);
    auto x = gaussian_complex<float>(rs, {6, 6});
    auto s2 = score_apply(net, sched, x, 2);
    auto s5 = score_apply(net, sched, x, 5);
    const double ratio = sched.eps(5) / sched.eps(2);
    for (std::size_t i = 0; i < s2.numel(); ++i)
      REQUIRE(std::abs(std::complex<double>(s2[i]) -
                       ratio * std::complex<double>(s5[i])) <=
              1e-5 * (1.0 + std::abs(s2[i])));
  }

  SECTION("bit-identical on repeated evaluation") {
    auto net = make_score_net<float>(arch, 7);
    RandomStream rs(7, 1);
    he_init(net.head_w.values, arch.filters * 9, rs);
    auto x = gaussian_complex<float>(rs, {6, 6});
    auto a = score_apply(net, sched, x, 3);
    auto b = score_apply(net, sched, x, 3);
    for (std::size_t i = 0; i < a.numel(); ++i) REQUIRE(a[i] == b[i]);
  }

  SECTION("bad level raises") {
    auto net = make_score_net<float>(arch, 8);
    Tensor<std::complex<float>> x({6, 6});
    REQUIRE_THROWS_AS(score_apply(net, sched, x, 6), std::invalid_argument);
  }
}

TEST_CASE("dsm loss") {
  SECTION("a perfect score gives zero loss") {
    RandomStream rs(8, 0);
    auto z = gaussian_real<float>(rs, {2, 4, 4});
    Tensor<float> out(z.dims());
    for (std::size_t i = 0; i < z.numel(); ++i) out[i] = -z[i];
    REQUIRE(dsm_residual(out, z, nullptr) == 0.0);
  }

  SECTION("zero net loss concentrates at H*W", "[stat]") {
    auto sched = make_schedule(0.05, 2.0, 8);
    ScoreArch arch{1, 4, 2};
    auto net = make_score_net<float>(arch, 9);  // zero head: zero output
    RandomStream rs(9, 1);
    auto center = gaussian_complex<float>(rs, {8, 8});
    std::vector<const Tensor<std::complex<float>>*> batch{&center};
    double total = 0;
    const int reps = 300;
    RandomStream noise(9, 2);
    for (int r = 0; r < reps; ++r)
      total += dsm_loss(net, batch, sched, noise, false);
    const double mean = total / reps;
    REQUIRE(std::abs(mean - 64.0) < 3.0);  // E = H*W, SE ~ 0.46
  }

  SECTION("gradients pass central differences with frozen noise") {
    auto sched = make_schedule(0.1, 1.0, 4);
    ScoreArch arch{1, 4, 2};
    auto net = make_score_net<double>(arch, 10);
    RandomStream rs(10, 1);
    he_init(net.head_w.values, arch.filters * 9, rs);
    auto center = gaussian_complex<double>(rs, {4, 4});
    std::vector<const Tensor<std::complex<double>>*> batch{&center};
    const RandomStream frozen(10, 2);

    auto loss_at = [&]() {
      RandomStream s = frozen;
      return dsm_loss(net, batch, sched, s, false);
    };
    RandomStream s0 = frozen;
    net.zero_grads();
    dsm_loss(net, batch, sched, s0, true);

    auto params = net.all_params();
    int checked = 0;
    for (auto* p : params) {
      const std::size_t stride = std::max<std::size_t>(1, p->values.numel() / 3);
      for (std::size_t i = 0; i < p->values.numel(); i += stride) {
        const double keep = p->values[i];
        const double h = 1e-4;
        p->values[i] = keep + h;
        const double up = loss_at();
        p->values[i] = keep - h;
        const double dn = loss_at();
        p->values[i] = keep;
        const double fd = (up - dn) / (2 * h);
        const double an = p->grad[i];
        const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
        REQUIRE(std::abs(fd - an) / denom <= 1e-3);
        ++checked;
      }
    }
    REQUIRE(checked >= 10);
  }

  SECTION("self-supervised and supervised losses share bits") {
    auto sched = make_schedule(0.1, 1.0, 4);
    ScoreArch arch{1, 4, 2};
    auto net = make_score_net<float>(arch, 11);
    RandomStream rs(11, 1);
    he_init(net.head_w.values, arch.filters * 9, rs);
    auto truth = gaussian_complex<float>(rs, {4, 4});
    std::vector<const Tensor<std::complex<float>>*> batch{&truth};
    RandomStream s1(11, 2), s2(11, 2);
    net.zero_grads();
    const double a = dsm_loss_selfsup(net, batch, sched, s1, false);
    const double b = dsm_loss_supervised(net, batch, sched, s2, false);
    REQUIRE(a == b);
  }
}

TEST_CASE("train_score basics") {
  auto sched = make_schedule(0.1, 2.0, 6);
  ScoreArch arch{1, 4, 2};
  RandomStream rs(12, 0);
  std::vector<std::vector<Tensor<std::complex<float>>>> pools;
  for (int i = 0; i < 4; ++i)
    pools.push_back({gaussian_complex<float>(rs, {4, 4})});

  SECTION("zero epochs returns the initialization") {
    ScoreTrainConfig cfg;
    cfg.epochs = 0;
    cfg.seed = 12;
    auto model = train_score(pools, arch, sched, cfg);
    auto fresh = make_score_net<float>(arch, 12);
    auto mp = model.net.all_params();
    auto fp = fresh.all_params();
    for (std::size_t k = 0; k < mp.size(); ++k)
      for (std::size_t i = 0; i < mp[k]->values.numel(); ++i)
        REQUIRE(mp[k]->values[i] == fp[k]->values[i]);
    // ema shadow equals the initialization too
    for (std::size_t k = 0; k < mp.size(); ++k)
      for (std::size_t i = 0; i < mp[k]->values.numel(); ++i)
        REQUIRE(model.ema.shadow[k][i] == fp[k]->values[i]);
  }

  SECTION("fixed seed gives identical final weights") {
    ScoreTrainConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 13;
    auto m1 = train_score(pools, arch, sched, cfg);
    auto m2 = train_score(pools, arch, sched, cfg);
    auto p1 = m1.net.all_params();
    auto p2 = m2.net.all_params();
    for (std::size_t k = 0; k < p1.size(); ++k)
      for (std::size_t i = 0; i < p1[k]->values.numel(); ++i)
        REQUIRE(p1[k]->values[i] == p2[k]->values[i]);
  }

  SECTION("ema shadow trails the parameters") {
    ScoreTrainConfig cfg;
    cfg.epochs = 2;
    cfg.ema_rate = 0.5;
    cfg.seed = 14;
    std::vector<double> losses;
    auto model = train_score(pools, arch, sched, cfg, &losses);
    REQUIRE(losses.size() == 2);
    bool differs = false;
    auto params = model.net.all_params();
    for (std::size_t k = 0; k < params.size() && !differs; ++k)
      for (std::size_t i = 0; i < params[k]->values.numel(); ++i)
        if (model.ema.shadow[k][i] != params[k]->values[i]) {
          differs = true;
          break;
        }
    REQUIRE(differs);
  }
}

TEST_CASE("score model round trip preserves outputs exactly") {
  namespace fs = std::filesystem;
  auto sched = make_schedule(0.01, 16.0, 32);
  ScoreArch arch{2, 8, 2};
  RandomStream rs(15, 0);
  std::vector<std::vector<Tensor<std::complex<float>>>> pools;
  pools.push_back({gaussian_complex<float>(rs, {6, 6})});
  ScoreTrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 15;
  auto model = train_score(pools, arch, sched, cfg);

  auto path = (fs::temp_directory_path() / "selfscore_score_rt.ssw").string();
  io::save_weights(path, score_to_weights(model));
  auto loaded = score_from_weights<float>(io::load_weights(path));
  fs::remove(path);

  auto x = gaussian_complex<float>(rs, {6, 6});
  auto net_a = ema_snapshot(model);
  auto net_b = ema_snapshot(loaded);
  for (std::size_t lvl : {std::size_t(0), std::size_t(17), std::size_t(31)}) {
    auto a = score_apply(net_a, model.schedule, x, lvl);
    auto b = score_apply(net_b, loaded.schedule, x, lvl);
    for (std::size_t i = 0; i < a.numel(); ++i) REQUIRE(a[i] == b[i]);
  }
}
