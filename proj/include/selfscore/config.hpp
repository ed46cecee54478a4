// Copyright (C) 2026 The selfscore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "selfscore/mri.hpp"

namespace selfscore {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/* Pipeline configuration: `key = value` lines under [data], [bcnn],
   [score], [sampler] sections, `#` comments. Every key has a default;
   unknown keys are rejected. */
struct RunConfig {
  struct Data {
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t coils = 4;
    std::size_t train_records = 200;
    std::size_t test_records = 20;
    std::size_t ellipses = 8;
    double intensity_lo = 0.4;
    double intensity_hi = 1.0;
    double phase_roughness = 0.3;
    std::string mask_kind = "random";  // uniform | random
    std::size_t acceleration = 4;
    std::size_t acs = 8;
    double keep_fraction = 0.7;
    double noise_scale = 0.01;
  } data;

  struct Bcnn {
    std::size_t recursions = 10;
    std::size_t layers = 5;
    std::size_t filters = 32;
    std::size_t epochs = 200;
    double learning_rate = 1e-4;
    std::size_t batch_size = 1;
    double gamma1 = 0.01;      // residual scale of f(y); ties eps_min
    double gamma2 = 1.0;       // data-term noise scale of Eq. (5)
    double prior_spread = 1.0; // sigma-bar of the weight prior
    double init_spread = 0.05; // initial softplus(rho)
    std::string data_term = "image";  // image | kspace
  } bcnn;

  struct Score {
    double eps_min = 0.01;
    double eps_max = 16.0;
    std::size_t levels = 32;
    std::size_t blocks = 4;
    std::size_t filters = 32;
    std::size_t epochs = 100;
    double learning_rate = 1e-4;
    double ema_rate = 0.999;
    std::size_t center_pool = 8;
  } score;

  struct Sampler {
    double step_scale = 2e-5;  // epsilon of Algorithm-style step rule
    std::size_t inner_steps = 5;
    double gamma = 0.01;
    std::string data_sign = "gradient-correct";  // gradient-correct | as-printed
    std::string init = "gaussian";               // gaussian | zero-filled
    std::size_t chains = 1;
    bool final_denoise = false;
    bool save_trace = false;
  } sampler;

  MaskKind mask_kind_enum() const {
    if (data.mask_kind == "uniform") return MaskKind::uniform;
    if (data.mask_kind == "random") return MaskKind::random;
    throw ConfigError("data.mask_kind: expected uniform or random");
  }

  void validate() const {
    if (!(data.intensity_lo < data.intensity_hi))
      throw ConfigError("data.intensity range is empty");
    if (data.keep_fraction <= 0 || data.keep_fraction > 1)
      throw ConfigError("data.keep_fraction must be in (0,1]");
    if (bcnn.gamma1 <= 0 || bcnn.gamma2 <= 0 || bcnn.prior_spread <= 0)
      throw ConfigError("bcnn scales must be positive");
    if (bcnn.layers < 2) throw ConfigError("bcnn.layers must be at least 2");
    if (bcnn.recursions < 1) throw ConfigError("bcnn.recursions must be at least 1");
    if (!(score.eps_min > 0) || !(score.eps_min < score.eps_max))
      throw ConfigError("score schedule requires 0 < eps_min < eps_max");
    if (score.levels < 2) throw ConfigError("score.levels must be at least 2");
    if (!(sampler.step_scale > 0)) throw ConfigError("sampler.step_scale must be positive");
    if (sampler.inner_steps < 1) throw ConfigError("sampler.inner_steps must be at least 1");
    if (sampler.data_sign != "gradient-correct" && sampler.data_sign != "as-printed")
      throw ConfigError("sampler.data_sign: expected gradient-correct or as-printed");
    if (sampler.init != "gaussian" && sampler.init != "zero-filled")
      throw ConfigError("sampler.init: expected gaussian or zero-filled");
    mask_kind_enum();
  }

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::string& path);
  std::string canonical_text() const;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  if (used != v.size())
    throw ConfigError(key + ": trailing characters in '" + v + "'");
  return out;
}

inline std::size_t parse_size(const std::string& key, const std::string& v) {
  double d = parse_double(key, v);
  if (d < 0 || d != double(std::uint64_t(d)))
    throw ConfigError(key + ": expected a nonnegative integer, got '" + v + "'");
  return std::size_t(d);
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

inline std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace detail

inline RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = raw;
    if (auto pos = line.find('#'); pos != std::string::npos) line.resize(pos);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(lineno) + ": malformed section");
      section = line.substr(1, line.size() - 2);
      if (section != "data" && section != "bcnn" && section != "score" &&
          section != "sampler")
        throw ConfigError("unknown section [" + section + "]");
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    std::string key = detail::trim(line.substr(0, eq));
    std::string val = detail::trim(line.substr(eq + 1));
    std::string qual = section.empty() ? key : section + "." + key;
    if (section == "data") {
      auto& d = cfg.data;
      if (key == "height") d.height = detail::parse_size(qual, val);
      else if (key == "width") d.width = detail::parse_size(qual, val);
      else if (key == "coils") d.coils = detail::parse_size(qual, val);
      else if (key == "train_records") d.train_records = detail::parse_size(qual, val);
      else if (key == "test_records") d.test_records = detail::parse_size(qual, val);
      else if (key == "ellipses") d.ellipses = detail::parse_size(qual, val);
      else if (key == "intensity_lo") d.intensity_lo = detail::parse_double(qual, val);
      else if (key == "intensity_hi") d.intensity_hi = detail::parse_double(qual, val);
      else if (key == "phase_roughness") d.phase_roughness = detail::parse_double(qual, val);
      else if (key == "mask_kind") d.mask_kind = val;
      else if (key == "acceleration") d.acceleration = detail::parse_size(qual, val);
      else if (key == "acs") d.acs = detail::parse_size(qual, val);
      else if (key == "keep_fraction") d.keep_fraction = detail::parse_double(qual, val);
      else if (key == "noise_scale") d.noise_scale = detail::parse_double(qual, val);
      else throw ConfigError("unknown key " + qual);
    } else if (section == "bcnn") {
      auto& b = cfg.bcnn;
      if (key == "recursions") b.recursions = detail::parse_size(qual, val);
      else if (key == "layers") b.layers = detail::parse_size(qual, val);
      else if (key == "filters") b.filters = detail::parse_size(qual, val);
      else if (key == "epochs") b.epochs = detail::parse_size(qual, val);
      else if (key == "learning_rate") b.learning_rate = detail::parse_double(qual, val);
      else if (key == "batch_size") b.batch_size = detail::parse_size(qual, val);
      else if (key == "gamma1") b.gamma1 = detail::parse_double(qual, val);
      else if (key == "gamma2") b.gamma2 = detail::parse_double(qual, val);
      else if (key == "prior_spread") b.prior_spread = detail::parse_double(qual, val);
      else if (key == "init_spread") b.init_spread = detail::parse_double(qual, val);
      else if (key == "data_term") b.data_term = val;
      else throw ConfigError("unknown key " + qual);
    } else if (section == "score") {
      auto& s = cfg.score;
      if (key == "eps_min") s.eps_min = detail::parse_double(qual, val);
      else if (key == "eps_max") s.eps_max = detail::parse_double(qual, val);
      else if (key == "levels") s.levels = detail::parse_size(qual, val);
      else if (key == "blocks") s.blocks = detail::parse_size(qual, val);
      else if (key == "filters") s.filters = detail::parse_size(qual, val);
      else if (key == "epochs") s.epochs = detail::parse_size(qual, val);
      else if (key == "learning_rate") s.learning_rate = detail::parse_double(qual, val);
      else if (key == "ema_rate") s.ema_rate = detail::parse_double(qual, val);
      else if (key == "center_pool") s.center_pool = detail::parse_size(qual, val);
      else throw ConfigError("unknown key " + qual);
    } else if (section == "sampler") {
      auto& s = cfg.sampler;
      if (key == "step_scale") s.step_scale = detail::parse_double(qual, val);
      else if (key == "inner_steps") s.inner_steps = detail::parse_size(qual, val);
      else if (key == "gamma") s.gamma = detail::parse_double(qual, val);
      else if (key == "data_sign") s.data_sign = val;
      else if (key == "init") s.init = val;
      else if (key == "chains") s.chains = detail::parse_size(qual, val);
      else if (key == "final_denoise") s.final_denoise = detail::parse_bool(qual, val);
      else if (key == "save_trace") s.save_trace = detail::parse_bool(qual, val);
      else throw ConfigError("unknown key " + qual);
    } else {
      throw ConfigError("key '" + key + "' outside any section");
    }
  }
  cfg.validate();
  return cfg;
}

inline RunConfig RunConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError(path + ": cannot open config");
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return parse(text);
}

inline std::string RunConfig::canonical_text() const {
  using detail::fmt_double;
  std::ostringstream os;
  os << "[data]\n"
     << "height = " << data.height << "\n"
     << "width = " << data.width << "\n"
     << "coils = " << data.coils << "\n"
     << "train_records = " << data.train_records << "\n"
     << "test_records = " << data.test_records << "\n"
     << "ellipses = " << data.ellipses << "\n"
     << "intensity_lo = " << fmt_double(data.intensity_lo) << "\n"
     << "intensity_hi = " << fmt_double(data.intensity_hi) << "\n"
     << "phase_roughness = " << fmt_double(data.phase_roughness) << "\n"
     << "mask_kind = " << data.mask_kind << "\n"
     << "acceleration = " << data.acceleration << "\n"
     << "acs = " << data.acs << "\n"
     << "keep_fraction = " << fmt_double(data.keep_fraction) << "\n"
     << "noise_scale = " << fmt_double(data.noise_scale) << "\n"
     << "\n[bcnn]\n"
     << "recursions = " << bcnn.recursions << "\n"
     << "layers = " << bcnn.layers << "\n"
     << "filters = " << bcnn.filters << "\n"
     << "epochs = " << bcnn.epochs << "\n"
     << "learning_rate = " << fmt_double(bcnn.learning_rate) << "\n"
     << "batch_size = " << bcnn.batch_size << "\n"
     << "gamma1 = " << fmt_double(bcnn.gamma1) << "\n"
     << "gamma2 = " << fmt_double(bcnn.gamma2) << "\n"
     << "prior_spread = " << fmt_double(bcnn.prior_spread) << "\n"
     << "init_spread = " << fmt_double(bcnn.init_spread) << "\n"
     << "data_term = " << bcnn.data_term << "\n"
     << "\n[score]\n"
     << "eps_min = " << fmt_double(score.eps_min) << "\n"
     << "eps_max = " << fmt_double(score.eps_max) << "\n"
     << "levels = " << score.levels << "\n"
     << "blocks = " << score.blocks << "\n"
     << "filters = " << score.filters << "\n"
     << "epochs = " << score.epochs << "\n"
     << "learning_rate = " << fmt_double(score.learning_rate) << "\n"
     << "ema_rate = " << fmt_double(score.ema_rate) << "\n"
     << "center_pool = " << score.center_pool << "\n"
     << "\n[sampler]\n"
     << "step_scale = " << fmt_double(sampler.step_scale) << "\n"
     << "inner_steps = " << sampler.inner_steps << "\n"
     << "gamma = " << fmt_double(sampler.gamma) << "\n"
     << "data_sign = " << sampler.data_sign << "\n"
     << "init = " << sampler.init << "\n"
     << "chains = " << sampler.chains << "\n"
     << "final_denoise = " << (sampler.final_denoise ? "true" : "false") << "\n"
     << "save_trace = " << (sampler.save_trace ? "true" : "false") << "\n";
  return os.str();
}

}  // namespace selfscore
