// Copyright (C) 2026 The selfscore authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>
#include <filesystem>

#include "selfscore/bcnn.hpp"
#include "selfscore/oracles.hpp"
#include "selfscore/phantom.hpp"

using namespace selfscore;

namespace {

template <typename T>
DatasetRecord<T> tiny_record(std::size_t n, std::size_t coils, std::size_t accel,
                             double rho, std::uint64_t seed) {
  DatasetParams p;
  p.phantom = PhantomSpec{n, n, 4, 0.4f, 1.0f, 0.2f};
  p.coils = coils;
  p.mask_kind = MaskKind::random;
  p.acceleration = accel;
  p.acs = 2;
  p.noise_scale = 0.0f;
  p.keep_fraction = rho;
  return build_dataset<T>(1, p, seed).at(0);
}

template <typename T>
void zero_bayes_exact(BcnnModelT<T>& m) {
  for (auto* mod : {&m.img, &m.ksp}) {
    for (auto& v : mod->bayes_w.mu.values.storage()) v = T(0);
    for (auto& v : mod->bayes_b.mu.values.storage()) v = T(0);
    for (auto& v : mod->bayes_w.rho.values.storage()) v = T(-200);
    for (auto& v : mod->bayes_b.rho.values.storage()) v = T(-200);
  }
}

}  // namespace

TEST_CASE("f_apply data consistency is exact on sampled lines") {
  auto rec = tiny_record<float>(8, 2, 2, 0.8, 3);
  FNetArch arch{3, 3, 8, true};
  auto model = make_bcnn<float>(arch, 2, 0.05f, 11);
  RandomStream rs(11, 5);
  auto draw = sample_bcnn(model, rs);
  Tensor<std::complex<float>> k;
  f_forward(model, draw, rec.pair.y, rec.sens, nullptr, &k);
  const auto& y = rec.pair.y;
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 8; ++j)
        if (y.mask.sampled(j))
          REQUIRE(k.at3(c, i, j) == y.data.at3(c, i, j));
}

TEST_CASE("zero weights reduce f to the zero-filled combine") {
  auto rec = tiny_record<float>(8, 2, 2, 1.0, 4);
  FNetArch arch{4, 3, 6, true};
  auto model = make_bcnn<float>(arch, 2, 0.05f, 12);
  zero_bayes_exact(model);  // theta = 0 for the last layers
  auto draw = mean_bcnn(model);
  auto f = f_apply(model, draw, rec.pair.y, rec.sens);
  auto zf = zero_filled_combine(rec.pair.y, rec.sens);
  REQUIRE(rel_error(f, zf) < 1e-5);
}

TEST_CASE("f_apply is deterministic for a fixed draw") {
  auto rec = tiny_record<float>(8, 1, 2, 0.8, 5);
  FNetArch arch{2, 3, 6, true};
  auto model = make_bcnn<float>(arch, 1, 0.05f, 13);
  RandomStream rs(13, 7);
  auto draw = sample_bcnn(model, rs);
  auto a = f_apply(model, draw, rec.pair.y, rec.sens);
  auto b = f_apply(model, draw, rec.pair.y, rec.sens);
  for (std::size_t i = 0; i < a.numel(); ++i) REQUIRE(a[i] == b[i]);
}

TEST_CASE("elbo data term vanishes when f matches the target") {
  auto rec = tiny_record<float>(8, 2, 1, 1.0, 6);  // full mask, rho = 1
  FNetArch arch{3, 3, 6, true};
  auto model = make_bcnn<float>(arch, 2, 0.05f, 14);
  zero_bayes_exact(model);
  BcnnTrainConfig cfg;
  cfg.gamma2 = 1.0;
  RandomStream rs(14, 1);
  std::vector<const PairedMeasurement*> batch{&rec.pair};
  auto parts = elbo_loss(model, batch, rec.sens, cfg, rs);
  REQUIRE(parts.data_term < 1e-9);
}

TEST_CASE("elbo KL part matches the Monte-Carlo oracle within 1 percent",
          "[stat]") {
  Tensor<double> mu({3}), rho({3});
  mu[0] = 0.5; mu[1] = -0.3; mu[2] = 0.9;
  rho[0] = softplus_inverse(0.1);
  rho[1] = softplus_inverse(0.4);
  rho[2] = softplus_inverse(0.25);
  const double sb = 1.3;
  const double closed = closed_form_kl(mu, rho, sb);
  auto kl = oracles::mc_kl({0.5, -0.3, 0.9}, {0.1, 0.4, 0.25}, sb, 1000000,
                           RandomStream(80, 0));
  REQUIRE(std::abs(kl - closed) <= 0.01 * closed);

  // q equal to the prior: KL part is exactly zero
  Tensor<double> mu0({2}), rho0({2});
  rho0[0] = rho0[1] = softplus_inverse(sb);
  REQUIRE(closed_form_kl(mu0, rho0, sb) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("elbo gradients pass central differences with frozen noise") {
  // generic gaussian data keeps every relu strictly off its kink, which a
  // central-difference oracle requires
  const std::size_t n = 8;
  RandomStream data_rs(7, 0);
  auto truth = gaussian_complex<double>(data_rs, {n, n});
  auto sens = gen_coil_maps<double>(1, n, n, RandomStream(7, 1));
  auto mask = gen_mask(MaskKind::random, n, 2, 2, RandomStream(7, 2));
  MultiCoilKSpaceT<double> y;
  y.data = apply_A(truth, sens, mask);
  y.mask = mask;
  DatasetRecord<double> rec;
  rec.truth = truth;
  rec.sens = sens;
  rec.pair = derive_pair_subsample(y, 0.9, 2, RandomStream(7, 3));

  FNetArch arch{2, 2, 4, true};
  auto model = make_bcnn<double>(arch, 1, 0.05, 15);
  BcnnTrainConfig cfg;
  cfg.gamma2 = 0.7;
  cfg.prior_spread = 1.1;
  const RandomStream frozen(15, 9);

  std::vector<const PairedMeasurementT<double>*> batch{&rec.pair};
  auto loss_at = [&]() {
    RandomStream s = frozen;
    model.zero_grads();
    return elbo_loss(model, batch, rec.sens, cfg, s).total;
  };

  RandomStream s0 = frozen;
  model.zero_grads();
  elbo_loss(model, batch, rec.sens, cfg, s0);

  // copy the analytic grads before finite differencing
  std::vector<Tensor<double>> grads;
  auto params = model.all_params();
  for (auto* p : params) grads.push_back(p->grad);

  int checked = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& vals = params[k]->values;
    const std::size_t stride = std::max<std::size_t>(1, vals.numel() / 4);
    for (std::size_t i = 0; i < vals.numel(); i += stride) {
      const double keep = vals[i];
      const double h = 1e-4;
      vals[i] = keep + h;
      const double up = loss_at();
      vals[i] = keep - h;
      const double dn = loss_at();
      vals[i] = keep;
      const double fd = (up - dn) / (2 * h);
      const double an = grads[k][i];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
      REQUIRE(std::abs(fd - an) / denom <= 1e-3);
      ++checked;
    }
  }
  REQUIRE(checked >= 16);
}

TEST_CASE("train_bcnn smoke run learns", "[slow]") {
  DatasetParams p;
  p.phantom = PhantomSpec{8, 8, 4, 0.4f, 1.0f, 0.2f};
  p.coils = 2;
  p.mask_kind = MaskKind::random;
  p.acceleration = 2;
  p.acs = 2;
  p.noise_scale = 0.005f;
  p.keep_fraction = 0.75;
  auto recs = build_dataset<float>(20, p, 42);

  FNetArch arch{3, 3, 8, true};
  BcnnTrainConfig cfg;
  cfg.epochs = 5;
  cfg.learning_rate = 2e-3;
  cfg.seed = 42;
  TrainLog log;
  auto model = train_bcnn(recs, arch, cfg, &log);
  REQUIRE(log.epoch_data_term.size() == 5);
  REQUIRE(log.epoch_data_term.back() < log.epoch_data_term.front());

  SECTION("zero learning rate leaves the weights at the initialization") {
    BcnnTrainConfig cfg0 = cfg;
    cfg0.epochs = 2;
    cfg0.learning_rate = 0.0;
    auto trained = train_bcnn(recs, arch, cfg0);
    auto fresh = make_bcnn<float>(arch, 2, float(cfg0.init_spread), cfg0.seed);
    auto tp = trained.all_params();
    auto fp = fresh.all_params();
    for (std::size_t k = 0; k < tp.size(); ++k)
      for (std::size_t i = 0; i < tp[k]->values.numel(); ++i)
        REQUIRE(tp[k]->values[i] == fp[k]->values[i]);
  }

  SECTION("fixed seed reproduces the loss curve") {
    BcnnTrainConfig cfg2 = cfg;
    cfg2.epochs = 3;
    TrainLog l1, l2;
    train_bcnn(recs, arch, cfg2, &l1);
    train_bcnn(recs, arch, cfg2, &l2);
    REQUIRE(l1.epoch_data_term == l2.epoch_data_term);
  }
}

TEST_CASE("sample_f_of_y") {
  auto rec = tiny_record<float>(8, 2, 2, 0.8, 8);
  FNetArch arch{2, 3, 6, true};
  auto model = make_bcnn<float>(arch, 2, 0.05f, 16);

  SECTION("vanishing spread collapses the samples") {
    zero_bayes_exact(model);
    for (auto* mod : {&model.img, &model.ksp})
      for (auto& v : mod->bayes_w.mu.values.storage()) v = 0.01f;
    auto samples = sample_f_of_y(model, rec.pair.y, rec.sens, 3, RandomStream(16, 2));
    for (std::size_t i = 0; i < samples[0].numel(); ++i) {
      REQUIRE(samples[1][i] == samples[0][i]);
      REQUIRE(samples[2][i] == samples[0][i]);
    }
  }

  SECTION("nonzero spread gives nonzero pixelwise spread") {
    auto samples = sample_f_of_y(model, rec.pair.y, rec.sens, 8, RandomStream(16, 3));
    double spread = 0;
    for (std::size_t i = 0; i < samples[0].numel(); ++i) {
      std::complex<double> mean{};
      for (const auto& s : samples) mean += std::complex<double>(s[i]);
      mean /= 8.0;
      for (const auto& s : samples)
        spread += std::norm(std::complex<double>(s[i]) - mean);
    }
    REQUIRE(std::isfinite(spread));
    REQUIRE(spread > 0.0);
  }

  SECTION("fixed stream reproduces the sample set") {
    auto a = sample_f_of_y(model, rec.pair.y, rec.sens, 4, RandomStream(16, 4));
    auto b = sample_f_of_y(model, rec.pair.y, rec.sens, 4, RandomStream(16, 4));
    for (std::size_t m = 0; m < 4; ++m)
      for (std::size_t i = 0; i < a[m].numel(); ++i)
        REQUIRE(a[m][i] == b[m][i]);
  }
}

TEST_CASE("bcnn weights round trip through the weights file") {
  namespace fs = std::filesystem;
  auto rec = tiny_record<float>(8, 2, 2, 0.9, 9);
  FNetArch arch{2, 3, 6, true};
  auto model = make_bcnn<float>(arch, 2, 0.05f, 17);
  auto path = (fs::temp_directory_path() / "selfscore_bcnn_rt.ssw").string();
  io::save_weights(path, bcnn_to_weights(model));
  auto loaded = bcnn_from_weights<float>(io::load_weights(path));
  fs::remove(path);

  RandomStream rs(17, 1);
  auto draw = sample_bcnn(model, rs);
  RandomStream rs2(17, 1);
  auto draw2 = sample_bcnn(loaded, rs2);
  auto a = f_apply(model, draw, rec.pair.y, rec.sens);
  auto b = f_apply(loaded, draw2, rec.pair.y, rec.sens);
  for (std::size_t i = 0; i < a.numel(); ++i) REQUIRE(a[i] == b[i]);
}
