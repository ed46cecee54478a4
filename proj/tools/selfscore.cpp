// Copyright (C) 2026 The selfscore authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end for the self-supervised score-based MRI
// reconstruction pipeline: phantom dataset generation, mask generation,
// measurement simulation, BCNN and score training, conditional and
// unconditional sampling, evaluation, and the oracle verification suite.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <string>

#include "selfscore/bcnn.hpp"
#include "selfscore/config.hpp"
#include "selfscore/io.hpp"
#include "selfscore/metrics.hpp"
#include "selfscore/phantom.hpp"
#include "selfscore/sampler.hpp"
#include "selfscore/score.hpp"
#include "selfscore/verify.hpp"

namespace fs = std::filesystem;
using namespace selfscore;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitNumerical = 1;
constexpr int kExitUsage = 2;

struct Globals {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
};

RunConfig load_config(const Globals& g) {
  if (g.config_path.empty()) return RunConfig{};
  return RunConfig::load(g.config_path);
}

std::string record_dir(const std::string& root, std::size_t idx) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "record_%04zu", idx);
  return (fs::path(root) / buf).string();
}

void require_file(const std::string& path, const std::string& flag) {
  if (!fs::exists(path))
    throw CLI::ValidationError(flag, "file not found: " + path);
}

DatasetParams dataset_params(const RunConfig& cfg) {
  DatasetParams p;
  p.phantom = PhantomSpec{cfg.data.height,
                          cfg.data.width,
                          cfg.data.ellipses,
                          float(cfg.data.intensity_lo),
                          float(cfg.data.intensity_hi),
                          float(cfg.data.phase_roughness)};
  p.coils = cfg.data.coils;
  p.mask_kind = cfg.mask_kind_enum();
  p.acceleration = cfg.data.acceleration;
  p.acs = cfg.data.acs;
  p.noise_scale = float(cfg.data.noise_scale);
  p.keep_fraction = cfg.data.keep_fraction;
  return p;
}

void save_record(const std::string& dir, const DatasetRecord<float>& rec) {
  fs::create_directories(dir);
  io::write_tensor(dir + "/truth.sst", rec.truth);
  io::write_tensor(dir + "/sens.sst", rec.sens.maps);
  io::write_tensor(dir + "/y.sst", rec.pair.y.data);
  io::write_text(dir + "/ymask.txt", rec.pair.y.mask.to_text());
  io::write_tensor(dir + "/ysub.sst", rec.pair.yprime.data);
  io::write_text(dir + "/submask.txt", rec.pair.submask.to_text());
}

DatasetRecord<float> load_record(const std::string& dir, float noise_scale) {
  DatasetRecord<float> rec;
  rec.truth = io::read_complex_tensor(dir + "/truth.sst");
  rec.sens.maps = io::read_complex_tensor(dir + "/sens.sst");
  rec.pair.y.data = io::read_complex_tensor(dir + "/y.sst");
  rec.pair.y.mask = SamplingMask::from_text(io::read_text(dir + "/ymask.txt"));
  rec.pair.y.noise_scale = noise_scale;
  rec.pair.yprime.data = io::read_complex_tensor(dir + "/ysub.sst");
  rec.pair.submask = SamplingMask::from_text(io::read_text(dir + "/submask.txt"),
                                             MaskKind::gaussian_pair);
  rec.pair.yprime.mask = rec.pair.submask;
  rec.pair.yprime.noise_scale = noise_scale;
  return rec;
}

std::vector<DatasetRecord<float>> load_dataset(const std::string& root,
                                               float noise_scale) {
  std::vector<DatasetRecord<float>> recs;
  for (std::size_t i = 0;; ++i) {
    const std::string dir = record_dir(root, i);
    if (!fs::exists(dir + "/y.sst")) break;
    recs.push_back(load_record(dir, noise_scale));
  }
  if (recs.empty())
    throw std::runtime_error("no record_XXXX directories under " + root);
  return recs;
}

std::vector<std::vector<Tensor<std::complex<float>>>> build_center_pools(
    BcnnModel& model, const std::vector<DatasetRecord<float>>& recs,
    std::size_t pool, std::uint64_t seed, bool verbose) {
  std::vector<std::vector<Tensor<std::complex<float>>>> pools;
  pools.reserve(recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    pools.push_back(sample_f_of_y(model, recs[i].pair.y, recs[i].sens, pool,
                                  RandomStream(seed, 0x706f6f6cULL + i)));
    if (verbose && (i + 1) % 50 == 0)
      std::fprintf(stderr, "centers %zu/%zu\n", i + 1, recs.size());
  }
  return pools;
}

int cmd_phantom(const Globals& g, std::size_t count_override) {
  auto cfg = load_config(g);
  auto p = dataset_params(cfg);
  const std::size_t n = count_override ? count_override : cfg.data.train_records;
  auto recs = build_dataset<float>(n, p, g.seed);
  fs::create_directories(g.out_dir);
  for (std::size_t i = 0; i < recs.size(); ++i)
    save_record(record_dir(g.out_dir, i), recs[i]);
  io::write_text((fs::path(g.out_dir) / "config.txt").string(),
                 cfg.canonical_text());
  std::printf("wrote %zu records under %s\n", recs.size(), g.out_dir.c_str());
  return kExitOk;
}

int cmd_mask(const Globals& g, const std::string& kind, std::size_t width,
             std::size_t accel, std::size_t acs, const std::string& out_file) {
  MaskKind mk;
  if (kind == "uniform") mk = MaskKind::uniform;
  else if (kind == "random") mk = MaskKind::random;
  else throw CLI::ValidationError("--kind", "expected uniform or random");
  auto mask = gen_mask(mk, width, accel, acs, RandomStream(g.seed, 0x6d61736bULL));
  if (out_file.empty())
    std::fputs(mask.to_text().c_str(), stdout);
  else
    io::write_text(out_file, mask.to_text());
  return kExitOk;
}

int cmd_simulate(const Globals& g, const std::string& truth_path,
                 const std::string& sens_path, const std::string& mask_path) {
  auto cfg = load_config(g);
  auto truth = io::read_complex_tensor(truth_path);
  CoilSensitivities sens;
  sens.maps = io::read_complex_tensor(sens_path);
  SamplingMask mask;
  if (!mask_path.empty()) {
    mask = SamplingMask::from_text(io::read_text(mask_path), cfg.mask_kind_enum());
  } else {
    mask = gen_mask(cfg.mask_kind_enum(), cfg.data.width, cfg.data.acceleration,
                    cfg.data.acs, RandomStream(g.seed, 0x73696d6dULL));
  }
  MultiCoilKSpace y;
  y.data = apply_A(truth, sens, mask);
  y.mask = mask;
  RandomStream noise(g.seed, 0x73696e6fULL);
  y = add_noise(y, float(cfg.data.noise_scale), noise);
  noise.counter += std::uint64_t(1) << 20;
  auto pair = derive_pair_subsample(y, cfg.data.keep_fraction, cfg.data.acs, noise);
  fs::create_directories(g.out_dir);
  const fs::path out(g.out_dir);
  io::write_tensor((out / "y.sst").string(), pair.y.data);
  io::write_text((out / "ymask.txt").string(), pair.y.mask.to_text());
  io::write_tensor((out / "ysub.sst").string(), pair.yprime.data);
  io::write_text((out / "submask.txt").string(), pair.submask.to_text());
  std::printf("simulated %zu-coil measurement: %zu of %zu lines, pair keeps %zu\n",
              sens.coils(), pair.y.mask.count(), pair.y.mask.width(),
              pair.submask.count());
  return kExitOk;
}

int cmd_train_bcnn(const Globals& g, const std::string& data_dir,
                   const std::string& out_path, bool quiet) {
  auto cfg = load_config(g);
  auto recs = load_dataset(data_dir, float(cfg.data.noise_scale));
  FNetArch arch;
  arch.recursions = cfg.bcnn.recursions;
  arch.layers = cfg.bcnn.layers;
  arch.filters = cfg.bcnn.filters;
  BcnnTrainConfig tc;
  tc.gamma1 = cfg.bcnn.gamma1;
  tc.gamma2 = cfg.bcnn.gamma2;
  tc.prior_spread = cfg.bcnn.prior_spread;
  tc.init_spread = cfg.bcnn.init_spread;
  tc.epochs = cfg.bcnn.epochs;
  tc.learning_rate = cfg.bcnn.learning_rate;
  tc.batch_size = cfg.bcnn.batch_size;
  tc.kspace_data_term = cfg.bcnn.data_term == "kspace";
  tc.seed = g.seed;
  TrainLog log;
  auto model = train_bcnn(recs, arch, tc, &log, !quiet);
  io::save_weights(out_path, bcnn_to_weights(model));
  if (!log.epoch_data_term.empty())
    std::printf("final epoch data term %.6f, kl %.1f\n",
                log.epoch_data_term.back(), log.epoch_kl.back());
  std::printf("saved bcnn weights to %s\n", out_path.c_str());
  return kExitOk;
}

int cmd_train_score(const Globals& g, const std::string& data_dir,
                    const std::string& bcnn_path, const std::string& out_path,
                    bool supervised, bool quiet) {
  auto cfg = load_config(g);
  auto recs = load_dataset(data_dir, float(cfg.data.noise_scale));
  std::vector<std::vector<Tensor<std::complex<float>>>> pools;
  if (supervised) {
    for (const auto& r : recs) pools.push_back({r.truth});
  } else {
    require_file(bcnn_path, "--bcnn");
    auto bcnn = bcnn_from_weights<float>(io::load_weights(bcnn_path));
    pools = build_center_pools(bcnn, recs, cfg.score.center_pool, g.seed, !quiet);
  }
  auto sched = make_schedule(cfg.score.eps_min, cfg.score.eps_max, cfg.score.levels);
  ScoreArch arch{cfg.score.blocks, cfg.score.filters, 2};
  ScoreTrainConfig tc;
  tc.epochs = cfg.score.epochs;
  tc.learning_rate = cfg.score.learning_rate;
  tc.ema_rate = cfg.score.ema_rate;
  tc.seed = g.seed;
  std::vector<double> losses;
  auto model = train_score(pools, arch, sched, tc, &losses, !quiet);
  io::save_weights(out_path, score_to_weights(model));
  if (!losses.empty()) std::printf("final epoch dsm loss %.4f\n", losses.back());
  std::printf("saved %s score weights to %s\n",
              supervised ? "supervised" : "self-supervised", out_path.c_str());
  return kExitOk;
}

SamplerConfig sampler_config(const RunConfig& cfg, std::uint64_t seed) {
  SamplerConfig sc;
  sc.step_scale = cfg.sampler.step_scale;
  sc.inner_steps = cfg.sampler.inner_steps;
  sc.gamma = cfg.sampler.gamma;
  sc.data_sign = cfg.sampler.data_sign == "as-printed"
                     ? DataTermSign::as_printed
                     : DataTermSign::gradient_correct;
  sc.init = cfg.sampler.init == "zero-filled" ? SamplerInit::zero_filled
                                              : SamplerInit::gaussian_max_level;
  sc.final_denoise = cfg.sampler.final_denoise;
  sc.chains = cfg.sampler.chains;
  sc.seed = seed;
  sc.record_snapshots = false;
  return sc;
}

int cmd_reconstruct(const Globals& g, const std::string& score_path,
                    const std::string& data_dir) {
  auto cfg = load_config(g);
  require_file(score_path, "--score");
  auto model = score_from_weights<float>(io::load_weights(score_path));
  auto score = model_score_fn(model);
  auto recs = load_dataset(data_dir, float(cfg.sampler.gamma));
  fs::create_directories(g.out_dir);
  const fs::path out(g.out_dir);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    SamplerConfig sc = sampler_config(cfg, g.seed);
    sc.stream_id = 0x7265636fULL + 1000 * i;
    auto [mean, traces] =
        reconstruct<float>(score, recs[i].pair.y, recs[i].sens, model.schedule, sc);
    char name[48];
    std::snprintf(name, sizeof name, "recon_%04zu.sst", i);
    io::write_tensor((out / name).string(), mean);
    std::snprintf(name, sizeof name, "recon_%04zu.pgm", i);
    io::export_pgm(magnitude(mean), (out / name).string());
    std::snprintf(name, sizeof name, "zf_%04zu.sst", i);
    io::write_tensor((out / name).string(),
                     zero_filled_combine(recs[i].pair.y, recs[i].sens));
    if (cfg.sampler.save_trace) {
      std::snprintf(name, sizeof name, "residual_%04zu.csv", i);
      io::write_text((out / name).string(),
                     residual_log_csv(traces.front().residual_log));
    }
    if (!all_finite(mean)) {
      std::fprintf(stderr, "non-finite reconstruction for record %zu\n", i);
      return kExitNumerical;
    }
  }
  std::printf("reconstructed %zu records into %s\n", recs.size(), g.out_dir.c_str());
  return kExitOk;
}

int cmd_sample(const Globals& g, const std::string& score_path, std::size_t count) {
  auto cfg = load_config(g);
  require_file(score_path, "--score");
  auto model = score_from_weights<float>(io::load_weights(score_path));
  auto score = model_score_fn(model);
  fs::create_directories(g.out_dir);
  const fs::path out(g.out_dir);
  for (std::size_t i = 0; i < count; ++i) {
    SamplerConfig sc = sampler_config(cfg, g.seed);
    sc.stream_id = 0x73616d70ULL + i;
    auto trace = langevin_uncond<float>(score, model.schedule, sc,
                                        {cfg.data.height, cfg.data.width});
    char name[48];
    std::snprintf(name, sizeof name, "sample_%02zu.sst", i);
    io::write_tensor((out / name).string(), trace.final_image);
    std::snprintf(name, sizeof name, "sample_%02zu.pgm", i);
    io::export_pgm(magnitude(trace.final_image), (out / name).string());
  }
  std::printf("wrote %zu samples into %s\n", count, g.out_dir.c_str());
  return kExitOk;
}

Tensor<float> load_magnitude(const std::string& path) {
  auto t = io::read_tensor(path);
  if (std::holds_alternative<Tensor<float>>(t))
    return std::get<Tensor<float>>(std::move(t));
  return magnitude(std::get<Tensor<std::complex<float>>>(t));
}

int cmd_eval(const Globals& g, const std::string& recon_path,
             const std::string& ref_path, const std::string& csv_out) {
  (void)g;
  std::vector<MetricsReport> slices;
  if (fs::is_directory(recon_path)) {
    for (std::size_t i = 0;; ++i) {
      char name[48];
      std::snprintf(name, sizeof name, "recon_%04zu.sst", i);
      const auto rp = (fs::path(recon_path) / name).string();
      if (!fs::exists(rp)) break;
      std::string ref_file = (fs::path(ref_path) / name).string();
      if (!fs::exists(ref_file))
        ref_file = record_dir(ref_path, i) + "/truth.sst";
      require_file(ref_file, "--ref");
      slices.push_back(evaluate(load_magnitude(rp), load_magnitude(ref_file)));
    }
    if (slices.empty())
      throw CLI::ValidationError("--recon",
                                 "no recon_XXXX.sst files in " + recon_path);
  } else {
    require_file(recon_path, "--recon");
    require_file(ref_path, "--ref");
    slices.push_back(evaluate(load_magnitude(recon_path), load_magnitude(ref_path)));
  }
  auto agg = aggregate(std::move(slices));
  auto csv = metrics_csv(agg);
  if (!csv_out.empty()) io::write_text(csv_out, csv);
  std::fputs(csv.c_str(), stdout);
  return kExitOk;
}

int cmd_verify(const Globals& g) {
  auto results = verify::run_all(g.seed == 0 ? 2026 : g.seed);
  bool all = true;
  for (const auto& r : results) {
    std::printf("[%s] %-26s %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                r.detail.c_str());
    all = all && r.pass;
  }
  return all ? kExitOk : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"self-supervised score-based MRI reconstruction pipeline"};
  app.require_subcommand(1);

  Globals g;
  app.add_option("--config", g.config_path, "configuration file");
  app.add_option("--seed", g.seed, "master seed for all random streams");
  app.add_option("--out", g.out_dir, "output directory");

  auto* phantom = app.add_subcommand("phantom", "generate a phantom dataset");
  std::size_t phantom_count = 0;
  phantom->add_option("--count", phantom_count,
                      "number of records (default: data.train_records)");

  auto* mask = app.add_subcommand("mask", "generate a sampling mask");
  std::string mask_kind = "random", mask_out;
  std::size_t mask_width = 32, mask_accel = 4, mask_acs = 8;
  mask->add_option("--kind", mask_kind, "uniform or random");
  mask->add_option("--width", mask_width, "number of phase-encode columns");
  mask->add_option("--accel", mask_accel, "acceleration factor");
  mask->add_option("--acs", mask_acs, "fully sampled center width");
  mask->add_option("--file", mask_out, "write the mask here instead of stdout");

  auto* simulate = app.add_subcommand(
      "simulate", "measure a truth image and derive a training pair");
  std::string sim_truth, sim_sens, sim_mask;
  simulate->add_option("--truth", sim_truth, "truth image (.sst)")->required();
  simulate->add_option("--sens", sim_sens, "coil sensitivities (.sst)")->required();
  simulate->add_option("--mask", sim_mask, "mask text file (otherwise generated)");

  auto* tb = app.add_subcommand("train-bcnn", "fit the Bayesian reconstruction network");
  std::string tb_data, tb_out = "bcnn.ssw";
  bool tb_quiet = false;
  tb->add_option("--data", tb_data, "dataset directory")->required();
  tb->add_option("--weights", tb_out, "output weights path");
  tb->add_flag("--quiet", tb_quiet, "suppress progress lines");

  auto* ts = app.add_subcommand("train-score", "fit the score network");
  std::string ts_data, ts_bcnn, ts_out = "score.ssw";
  bool ts_supervised = false, ts_quiet = false;
  ts->add_option("--data", ts_data, "dataset directory")->required();
  ts->add_option("--bcnn", ts_bcnn, "trained bcnn weights (self-supervised mode)");
  ts->add_option("--weights", ts_out, "output weights path");
  ts->add_flag("--supervised", ts_supervised,
               "train on ground-truth images instead of f(y) draws");
  ts->add_flag("--quiet", ts_quiet, "suppress progress lines");

  auto* rc = app.add_subcommand("reconstruct",
                                "conditional annealed Langevin reconstruction");
  std::string rc_score, rc_data;
  rc->add_option("--score", rc_score, "trained score weights")->required();
  rc->add_option("--data", rc_data, "dataset directory")->required();

  auto* sp = app.add_subcommand("sample", "unconditional annealed Langevin sampling");
  std::string sp_score;
  std::size_t sp_count = 1;
  sp->add_option("--score", sp_score, "trained score weights")->required();
  sp->add_option("--count", sp_count, "number of samples");

  auto* ev = app.add_subcommand("eval", "PSNR / NMSE / SSIM evaluation");
  std::string ev_recon, ev_ref, ev_csv;
  ev->add_option("--recon", ev_recon, "reconstruction (.sst or directory)")->required();
  ev->add_option("--ref", ev_ref, "reference (.sst or dataset directory)")->required();
  ev->add_option("--csv", ev_csv, "also write the CSV here");

  auto* vf = app.add_subcommand("verify", "run the oracle verification suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (phantom->parsed()) {
      if (g.out_dir.empty())
        throw CLI::ValidationError("--out", "an output directory is required");
      return cmd_phantom(g, phantom_count);
    }
    if (mask->parsed())
      return cmd_mask(g, mask_kind, mask_width, mask_accel, mask_acs, mask_out);
    if (simulate->parsed()) {
      if (g.out_dir.empty())
        throw CLI::ValidationError("--out", "an output directory is required");
      require_file(sim_truth, "--truth");
      require_file(sim_sens, "--sens");
      if (!sim_mask.empty()) require_file(sim_mask, "--mask");
      return cmd_simulate(g, sim_truth, sim_sens, sim_mask);
    }
    if (tb->parsed()) return cmd_train_bcnn(g, tb_data, tb_out, tb_quiet);
    if (ts->parsed())
      return cmd_train_score(g, ts_data, ts_bcnn, ts_out, ts_supervised, ts_quiet);
    if (rc->parsed()) {
      if (g.out_dir.empty())
        throw CLI::ValidationError("--out", "an output directory is required");
      return cmd_reconstruct(g, rc_score, rc_data);
    }
    if (sp->parsed()) {
      if (g.out_dir.empty())
        throw CLI::ValidationError("--out", "an output directory is required");
      return cmd_sample(g, sp_score, sp_count);
    }
    if (ev->parsed()) return cmd_eval(g, ev_recon, ev_ref, ev_csv);
    if (vf->parsed()) return cmd_verify(g);
  } catch (const CLI::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitUsage;
  } catch (const io::FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumerical;
  }
  return kExitUsage;
}
