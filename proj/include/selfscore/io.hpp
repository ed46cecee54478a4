// Copyright (C) 2026 The selfscore authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "selfscore/tensor.hpp"

static_assert(std::endian::native == std::endian::little,
              "tensor file i/o assumes a little-endian host");

namespace selfscore::io {

struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

using TensorValue = std::variant<Tensor<float>, Tensor<std::complex<float>>>;

namespace detail {

inline void put_bytes(std::string& out, const void* p, std::size_t n) {
  out.append(reinterpret_cast<const char*>(p), n);
}

template <typename T>
void put_pod(std::string& out, T v) {
  put_bytes(out, &v, sizeof(v));
}

struct Reader {
  const char* p;
  std::size_t left;
  std::string path;

  void take(void* dst, std::size_t n, const char* what) {
    if (left < n)
      throw FormatError(path + ": truncated " + what);
    std::memcpy(dst, p, n);
    p += n;
    left -= n;
  }
  template <typename T>
  T pod(const char* what) {
    T v;
    take(&v, sizeof(v), what);
    return v;
  }
};

inline std::string encode_tensor(const TensorValue& t) {
  std::string out;
  out.append("SSTF");
  put_pod<std::uint8_t>(out, 1);  // version
  const bool cplx = std::holds_alternative<Tensor<std::complex<float>>>(t);
  put_pod<std::uint8_t>(out, cplx ? 1 : 0);  // dtype
  const auto& dims = cplx ? std::get<1>(t).dims() : std::get<0>(t).dims();
  if (dims.size() > 255) throw FormatError("tensor rank too large");
  put_pod<std::uint8_t>(out, std::uint8_t(dims.size()));
  put_pod<std::uint8_t>(out, 0);  // pad
  for (auto d : dims) put_pod<std::uint64_t>(out, d);
  if (cplx) {
    const auto& x = std::get<1>(t);
    put_bytes(out, x.data(), x.numel() * sizeof(std::complex<float>));
  } else {
    const auto& x = std::get<0>(t);
    put_bytes(out, x.data(), x.numel() * sizeof(float));
  }
  return out;
}

inline TensorValue decode_tensor(Reader& r) {
  char magic[4];
  r.take(magic, 4, "magic");
  if (std::memcmp(magic, "SSTF", 4) != 0)
    throw FormatError(r.path + ": bad tensor magic");
  auto version = r.pod<std::uint8_t>("version");
  if (version != 1) throw FormatError(r.path + ": unsupported tensor version");
  auto dtype = r.pod<std::uint8_t>("dtype");
  if (dtype > 1) throw FormatError(r.path + ": unknown dtype");
  auto ndim = r.pod<std::uint8_t>("rank");
  r.pod<std::uint8_t>("pad");
  std::vector<std::size_t> dims(ndim);
  std::size_t numel = 1;
  for (auto& d : dims) {
    auto v = r.pod<std::uint64_t>("dims");
    if (v == 0 || v > (std::uint64_t(1) << 48) / numel)
      throw FormatError(r.path + ": dims overflow");
    d = std::size_t(v);
    numel *= d;
  }
  if (dtype == 0) {
    Tensor<float> t(dims);
    r.take(t.data(), numel * sizeof(float), "payload");
    return t;
  }
  Tensor<std::complex<float>> t(dims);
  r.take(t.data(), numel * sizeof(std::complex<float>), "payload");
  return t;
}

inline std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError(path + ": cannot open");
  std::string data((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return data;
}

inline void spit(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError(path + ": cannot open for writing");
  f.write(bytes.data(), std::streamsize(bytes.size()));
  if (!f) throw FormatError(path + ": write failed");
}

}  // namespace detail

inline void write_tensor(const std::string& path, const TensorValue& t) {
  detail::spit(path, detail::encode_tensor(t));
}
inline void write_tensor(const std::string& path, const Tensor<float>& t) {
  write_tensor(path, TensorValue(t));
}
inline void write_tensor(const std::string& path,
                         const Tensor<std::complex<float>>& t) {
  write_tensor(path, TensorValue(t));
}

inline TensorValue read_tensor(const std::string& path) {
  std::string bytes = detail::slurp(path);
  detail::Reader r{bytes.data(), bytes.size(), path};
  auto t = detail::decode_tensor(r);
  if (r.left != 0) throw FormatError(path + ": trailing bytes after payload");
  return t;
}

inline Tensor<float> read_real_tensor(const std::string& path) {
  auto t = read_tensor(path);
  if (!std::holds_alternative<Tensor<float>>(t))
    throw FormatError(path + ": expected a real tensor");
  return std::get<0>(std::move(t));
}

inline Tensor<std::complex<float>> read_complex_tensor(const std::string& path) {
  auto t = read_tensor(path);
  if (!std::holds_alternative<Tensor<std::complex<float>>>(t))
    throw FormatError(path + ": expected a complex tensor");
  return std::get<1>(std::move(t));
}

/* Ordered named-tensor container; names must be unique. */
struct WeightsFile {
  std::vector<std::pair<std::string, TensorValue>> tensors;

  void add(const std::string& name, TensorValue t) {
    for (const auto& [n, _] : tensors)
      if (n == name) throw FormatError("duplicate tensor name: " + name);
    tensors.emplace_back(name, std::move(t));
  }

  const TensorValue* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }

  const TensorValue& get(const std::string& name) const {
    if (const auto* t = find(name)) return *t;
    throw FormatError("missing tensor: " + name);
  }
};

inline void save_weights(const std::string& path, const WeightsFile& w) {
  std::string out;
  out.append("SSWF");
  detail::put_pod<std::uint8_t>(out, 1);
  detail::put_pod<std::uint32_t>(out, std::uint32_t(w.tensors.size()));
  for (const auto& [name, t] : w.tensors) {
    if (name.size() > 65535) throw FormatError("tensor name too long");
    detail::put_pod<std::uint16_t>(out, std::uint16_t(name.size()));
    out.append(name);
    out.append(detail::encode_tensor(t));
  }
  detail::spit(path, out);
}

inline WeightsFile load_weights(const std::string& path) {
  std::string bytes = detail::slurp(path);
  detail::Reader r{bytes.data(), bytes.size(), path};
  char magic[4];
  r.take(magic, 4, "magic");
  if (std::memcmp(magic, "SSWF", 4) != 0)
    throw FormatError(path + ": bad weights magic");
  auto version = r.pod<std::uint8_t>("version");
  if (version != 1) throw FormatError(path + ": unsupported weights version");
  auto count = r.pod<std::uint32_t>("tensor count");
  WeightsFile w;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto len = r.pod<std::uint16_t>("name length");
    std::string name(len, '\0');
    r.take(name.data(), len, "name");
    w.add(name, detail::decode_tensor(r));
  }
  if (r.left != 0) throw FormatError(path + ": trailing bytes");
  return w;
}

/* Binary 16-bit PGM, linearly scaled from [0, max(img)]. */
inline void export_pgm(const Tensor<float>& img, const std::string& path) {
  if (img.rank() != 2) throw FormatError("export_pgm: expected a 2-D image");
  if (!all_finite(img)) throw FormatError("export_pgm: non-finite image");
  double mx = 0;
  for (std::size_t i = 0; i < img.numel(); ++i)
    mx = std::max(mx, double(img[i]));
  std::string out = "P5\n" + std::to_string(img.dim(1)) + " " +
                    std::to_string(img.dim(0)) + "\n65535\n";
  for (std::size_t i = 0; i < img.numel(); ++i) {
    double v = mx > 0 ? double(img[i]) / mx : 0.0;
    v = std::min(std::max(v, 0.0), 1.0);
    auto q = std::uint16_t(std::lround(v * 65535.0));
    out.push_back(char(q >> 8));  // big-endian samples
    out.push_back(char(q & 0xff));
  }
  detail::spit(path, out);
}

inline void write_text(const std::string& path, const std::string& text) {
  detail::spit(path, text);
}

inline std::string read_text(const std::string& path) {
  return detail::slurp(path);
}

}  // namespace selfscore::io
