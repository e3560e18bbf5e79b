#pragma once

// Versioned binary serialization of RegressorModel: magic header, layer
// descriptors, normalization statistics and little-endian 64-bit reals.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "ptnav/nn.hpp"

namespace ptnav {

static_assert(std::endian::native == std::endian::little,
              "model files are little-endian; add byte swapping for this platform");

namespace detail {

inline constexpr char kModelMagic[8] = {'P', 'T', 'N', 'A', 'V', 'M', 'L', '1'};

enum class LayerKind : std::uint32_t {
  kConv = 0,
  kRelu = 1,
  kFlatten = 2,
  kFc = 3,
  kDropout = 4,
};

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

inline void put_f64s(std::ostream& os, const std::vector<double>& v) {
  put<std::uint64_t>(os, v.size());
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}

template <typename T>
T get(std::istream& is, const std::string& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("truncated model file: " + path);
  return v;
}

inline std::vector<double> get_f64s(std::istream& is, const std::string& path,
                                    std::uint64_t expected) {
  const auto n = get<std::uint64_t>(is, path);
  if (n != expected) throw IoError("model array size mismatch in " + path);
  std::vector<double> v(n);
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw IoError("truncated model file: " + path);
  return v;
}

}  // namespace detail

inline void save_model(const std::string& path, const RegressorModel& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open model file for writing: " + path);
  using namespace detail;
  os.write(kModelMagic, sizeof(kModelMagic));
  put<std::uint32_t>(os, 1);  // format version
  put<std::uint32_t>(os, m.target == RegressionTarget::kDistance ? 0u : 1u);
  put<std::uint64_t>(os, m.train_seed);
  put<double>(os, m.validation_drmse);
  put_f64s(os, m.norm.mean);
  put_f64s(os, m.norm.stddev);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(m.layers.size()));
  for (const Layer& l : m.layers) {
    if (const auto* c = std::get_if<Conv1d>(&l)) {
      put(os, LayerKind::kConv);
      put<std::uint32_t>(os, static_cast<std::uint32_t>(c->in_ch));
      put<std::uint32_t>(os, static_cast<std::uint32_t>(c->out_ch));
      put<std::uint32_t>(os, static_cast<std::uint32_t>(c->kernel));
      put<std::uint32_t>(os, static_cast<std::uint32_t>(c->stride));
      put_f64s(os, c->w);
      put_f64s(os, c->b);
    } else if (std::get_if<Relu>(&l)) {
      put(os, LayerKind::kRelu);
    } else if (std::get_if<Flatten>(&l)) {
      put(os, LayerKind::kFlatten);
    } else if (const auto* f = std::get_if<FullyConnected>(&l)) {
      put(os, LayerKind::kFc);
      put<std::uint32_t>(os, static_cast<std::uint32_t>(f->in));
      put<std::uint32_t>(os, static_cast<std::uint32_t>(f->out));
      put_f64s(os, f->w);
      put_f64s(os, f->b);
    } else if (const auto* d = std::get_if<Dropout>(&l)) {
      put(os, LayerKind::kDropout);
      put<double>(os, d->rate);
    }
  }
  if (!os) throw IoError("failed writing model file: " + path);
}

inline RegressorModel load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open model file: " + path);
  using namespace detail;

  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kModelMagic, sizeof(magic)) != 0) {
    throw IoError("not a model file (bad magic): " + path);
  }
  const auto version = get<std::uint32_t>(is, path);
  if (version != 1) {
    throw IoError("unsupported model format version " + std::to_string(version) +
                  " in " + path);
  }

  RegressorModel m;
  m.target = get<std::uint32_t>(is, path) == 0 ? RegressionTarget::kDistance
                                               : RegressionTarget::kAltitude;
  m.train_seed = get<std::uint64_t>(is, path);
  m.validation_drmse = get<double>(is, path);
  const auto n_mean = [&] {
    const auto n = get<std::uint64_t>(is, path);
    std::vector<double> v(n);
    is.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw IoError("truncated model file: " + path);
    return v;
  };
  m.norm.mean = n_mean();
  m.norm.stddev = n_mean();
  if (m.norm.mean.size() != m.norm.stddev.size()) {
    throw IoError("normalization arrays disagree in " + path);
  }

  const auto n_layers = get<std::uint32_t>(is, path);
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    const auto kind = get<LayerKind>(is, path);
    switch (kind) {
      case LayerKind::kConv: {
        const auto in = get<std::uint32_t>(is, path);
        const auto out = get<std::uint32_t>(is, path);
        const auto k = get<std::uint32_t>(is, path);
        const auto stride = get<std::uint32_t>(is, path);
        if (in == 0 || out == 0 || k == 0 || stride == 0) {
          throw IoError("degenerate conv descriptor in " + path);
        }
        Conv1d c(static_cast<int>(in), static_cast<int>(out), static_cast<int>(k),
                 static_cast<int>(stride));
        c.w = get_f64s(is, path, static_cast<std::uint64_t>(in) * out * k);
        c.b = get_f64s(is, path, out);
        m.layers.emplace_back(std::move(c));
        break;
      }
      case LayerKind::kRelu:
        m.layers.emplace_back(Relu{});
        break;
      case LayerKind::kFlatten:
        m.layers.emplace_back(Flatten{});
        break;
      case LayerKind::kFc: {
        const auto in = get<std::uint32_t>(is, path);
        const auto out = get<std::uint32_t>(is, path);
        if (in == 0 || out == 0) throw IoError("degenerate FC descriptor in " + path);
        FullyConnected f(static_cast<int>(in), static_cast<int>(out));
        f.w = get_f64s(is, path, static_cast<std::uint64_t>(in) * out);
        f.b = get_f64s(is, path, out);
        m.layers.emplace_back(std::move(f));
        break;
      }
      case LayerKind::kDropout:
        m.layers.emplace_back(Dropout{get<double>(is, path)});
        break;
      default:
        throw IoError("unknown layer kind in " + path);
    }
  }
  return m;
}

}  // namespace ptnav
