#pragma once

// Small 1D-CNN regressor executed in double precision: valid (no-padding)
// cross-correlation convolutions, ReLU, flatten, fully connected layers and
// inverted dropout, with analytic backpropagation.  No external NN library;
// the whole network is a few dense loops.

#include <cmath>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "ptnav/core.hpp"

namespace ptnav {

// Dense row-major channels x length tensor.  Flattened layers keep rows = 1.
struct Array2d {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Array2d() = default;
  Array2d(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
  double* row(int r) { return v.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const { return v.data() + static_cast<std::size_t>(r) * cols; }
  int size() const { return rows * cols; }
};

struct Conv1d {
  int in_ch = 0;
  int out_ch = 0;
  int kernel = 0;
  int stride = 1;
  std::vector<double> w;  // [out][in][k]
  std::vector<double> b;  // [out]

  Conv1d() = default;
  Conv1d(int in, int out, int k, int s = 1)
      : in_ch(in), out_ch(out), kernel(k), stride(s),
        w(static_cast<std::size_t>(out) * in * k, 0.0), b(out, 0.0) {}

  int out_len(int in_len) const { return (in_len - kernel) / stride + 1; }
  double& wat(int co, int ci, int m) {
    return w[(static_cast<std::size_t>(co) * in_ch + ci) * kernel + m];
  }
  double wat(int co, int ci, int m) const {
    return w[(static_cast<std::size_t>(co) * in_ch + ci) * kernel + m];
  }
};

struct Relu {};
struct Flatten {};

struct FullyConnected {
  int in = 0;
  int out = 0;
  std::vector<double> w;  // [out][in]
  std::vector<double> b;  // [out]

  FullyConnected() = default;
  FullyConnected(int i, int o)
      : in(i), out(o), w(static_cast<std::size_t>(o) * i, 0.0), b(o, 0.0) {}
};

struct Dropout {
  double rate = 0.2;
};

using Layer = std::variant<Conv1d, Relu, Flatten, FullyConnected, Dropout>;

enum class RegressionTarget { kDistance, kAltitude };

inline const char* to_string(RegressionTarget t) {
  return t == RegressionTarget::kDistance ? "distance" : "altitude";
}

// Per-channel standardization of the raw input, learned from the training
// split and stored with the model so inference applies the same transform.
struct Normalization {
  std::vector<double> mean;
  std::vector<double> stddev;

  bool empty() const { return mean.empty(); }

  Array2d apply(const Array2d& x) const {
    if (empty()) return x;
    if (static_cast<int>(mean.size()) != x.rows) {
      throw ValidationError("normalization channel count does not match input");
    }
    Array2d out(x.rows, x.cols);
    for (int r = 0; r < x.rows; ++r) {
      const double mu = mean[r];
      const double sd = stddev[r] > 1e-12 ? stddev[r] : 1.0;
      const double* src = x.row(r);
      double* dst = out.row(r);
      for (int c = 0; c < x.cols; ++c) dst[c] = (src[c] - mu) / sd;
    }
    return out;
  }
};

struct RegressorModel {
  std::vector<Layer> layers;
  RegressionTarget target = RegressionTarget::kDistance;
  Normalization norm;
  std::uint64_t train_seed = 0;
  double validation_drmse = 0.0;  // per-window label RMSE on the holdout split

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Layer& l : layers) {
      if (const auto* c = std::get_if<Conv1d>(&l)) n += c->w.size() + c->b.size();
      if (const auto* f = std::get_if<FullyConnected>(&l)) n += f->w.size() + f->b.size();
    }
    return n;
  }
};

inline constexpr int kWindowChannels = 6;
inline constexpr int kDefaultWindow = 120;

// Mini shape: five conv layers and a single fully connected head.
inline RegressorModel mini_preset(int window = kDefaultWindow,
                                  RegressionTarget target = RegressionTarget::kDistance) {
  RegressorModel m;
  m.target = target;
  const int ch[] = {kWindowChannels, 16, 32, 32, 64, 64};
  int len = window;
  for (int i = 0; i < 5; ++i) {
    Conv1d c(ch[i], ch[i + 1], 5, 1);
    len = c.out_len(len);
    m.layers.emplace_back(std::move(c));
    m.layers.emplace_back(Relu{});
  }
  m.layers.emplace_back(Flatten{});
  m.layers.emplace_back(Dropout{0.2});
  m.layers.emplace_back(FullyConnected(ch[5] * len, 1));
  return m;
}

// Baseline shape: seven conv layers and a three-layer fully connected head.
inline RegressorModel baseline_preset(int window = kDefaultWindow,
                                      RegressionTarget target = RegressionTarget::kDistance) {
  RegressorModel m;
  m.target = target;
  const int ch[] = {kWindowChannels, 16, 32, 32, 32, 32, 64, 64};
  int len = window;
  for (int i = 0; i < 7; ++i) {
    Conv1d c(ch[i], ch[i + 1], 5, 1);
    len = c.out_len(len);
    m.layers.emplace_back(std::move(c));
    m.layers.emplace_back(Relu{});
  }
  m.layers.emplace_back(Flatten{});
  m.layers.emplace_back(FullyConnected(ch[7] * len, 128));
  m.layers.emplace_back(Relu{});
  m.layers.emplace_back(FullyConnected(128, 128));
  m.layers.emplace_back(Relu{});
  m.layers.emplace_back(Dropout{0.2});
  m.layers.emplace_back(FullyConnected(128, 1));
  return m;
}

// Two conv layers and a head; used where training speed matters more than
// capacity (smoke tests, quick CLI runs).
inline RegressorModel tiny_preset(int window = kDefaultWindow,
                                  RegressionTarget target = RegressionTarget::kDistance) {
  RegressorModel m;
  m.target = target;
  const int ch[] = {kWindowChannels, 8, 16};
  int len = window;
  for (int i = 0; i < 2; ++i) {
    Conv1d c(ch[i], ch[i + 1], 5, 1);
    len = c.out_len(len);
    m.layers.emplace_back(std::move(c));
    m.layers.emplace_back(Relu{});
  }
  m.layers.emplace_back(Flatten{});
  m.layers.emplace_back(Dropout{0.2});
  m.layers.emplace_back(FullyConnected(ch[2] * len, 1));
  return m;
}

inline RegressorModel preset_by_name(const std::string& name, int window,
                                     RegressionTarget target) {
  if (name == "mini") return mini_preset(window, target);
  if (name == "baseline") return baseline_preset(window, target);
  if (name == "tiny") return tiny_preset(window, target);
  throw ValidationError("unknown network preset: " + name);
}

// He-uniform initialization: U(-sqrt(6/fan_in), +sqrt(6/fan_in)), zero biases.
inline void init_weights(RegressorModel& m, Rng& rng) {
  for (Layer& l : m.layers) {
    if (auto* c = std::get_if<Conv1d>(&l)) {
      const double lim = std::sqrt(6.0 / (c->in_ch * c->kernel));
      for (double& w : c->w) w = rng.uniform(-lim, lim);
      for (double& b : c->b) b = 0.0;
    } else if (auto* f = std::get_if<FullyConnected>(&l)) {
      const double lim = std::sqrt(6.0 / f->in);
      for (double& w : f->w) w = rng.uniform(-lim, lim);
      for (double& b : f->b) b = 0.0;
    }
  }
}

inline Array2d conv1d_forward(const Array2d& x, const Conv1d& layer) {
  if (x.rows != layer.in_ch) {
    throw ValidationError("conv input has " + std::to_string(x.rows) +
                          " channels, layer expects " + std::to_string(layer.in_ch));
  }
  if (x.cols < layer.kernel) {
    throw ValidationError("conv input shorter than kernel");
  }
  const int out_len = layer.out_len(x.cols);
  Array2d out(layer.out_ch, out_len);
  for (int co = 0; co < layer.out_ch; ++co) {
    double* dst = out.row(co);
    const double bias = layer.b[co];
    for (int t = 0; t < out_len; ++t) dst[t] = bias;
    for (int ci = 0; ci < layer.in_ch; ++ci) {
      const double* src = x.row(ci);
      for (int m = 0; m < layer.kernel; ++m) {
        const double wv = layer.wat(co, ci, m);
        if (layer.stride == 1) {
          const double* s = src + m;
          for (int t = 0; t < out_len; ++t) dst[t] += wv * s[t];
        } else {
          for (int t = 0; t < out_len; ++t) dst[t] += wv * src[t * layer.stride + m];
        }
      }
    }
  }
  return out;
}

inline Array2d relu(const Array2d& x) {
  Array2d out = x;
  for (double& e : out.v) e = e > 0.0 ? e : 0.0;
  return out;
}

inline Array2d fc_forward(const Array2d& x, const FullyConnected& layer) {
  if (x.size() != layer.in) {
    throw ValidationError("fully connected input size " + std::to_string(x.size()) +
                          " does not match layer input " + std::to_string(layer.in));
  }
  Array2d out(1, layer.out);
  for (int o = 0; o < layer.out; ++o) {
    const double* w = layer.w.data() + static_cast<std::size_t>(o) * layer.in;
    double acc = layer.b[o];
    for (int i = 0; i < layer.in; ++i) acc += w[i] * x.v[i];
    out.v[o] = acc;
  }
  return out;
}

// Activations entering each layer plus the final output; dropout layers that
// ran in training mode record their multiplier masks.
struct ForwardTrace {
  std::vector<Array2d> acts;                 // acts[i] feeds layers[i]
  std::vector<std::vector<double>> masks;    // per layer; empty if not dropout
  double output = 0.0;
};

// rng non-null enables dropout (training mode); null runs inference.
inline ForwardTrace forward_trace(const RegressorModel& m, const Array2d& x, Rng* rng) {
  ForwardTrace tr;
  tr.masks.resize(m.layers.size());
  Array2d a = m.norm.apply(x);
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    tr.acts.push_back(a);
    const Layer& l = m.layers[i];
    if (const auto* c = std::get_if<Conv1d>(&l)) {
      a = conv1d_forward(a, *c);
    } else if (std::get_if<Relu>(&l)) {
      a = relu(a);
    } else if (std::get_if<Flatten>(&l)) {
      Array2d flat(1, a.size());
      flat.v = a.v;
      a = std::move(flat);
    } else if (const auto* f = std::get_if<FullyConnected>(&l)) {
      if (a.rows != 1) {  // implicit flatten
        Array2d flat(1, a.size());
        flat.v = a.v;
        a = std::move(flat);
      }
      a = fc_forward(a, *f);
    } else if (const auto* d = std::get_if<Dropout>(&l)) {
      if (rng != nullptr && d->rate > 0.0) {
        std::vector<double>& mask = tr.masks[i];
        mask.resize(a.v.size());
        const double keep_scale = 1.0 / (1.0 - d->rate);
        for (std::size_t j = 0; j < a.v.size(); ++j) {
          mask[j] = rng->uniform() < d->rate ? 0.0 : keep_scale;
          a.v[j] *= mask[j];
        }
      }
    }
  }
  if (a.size() != 1) {
    throw ValidationError("model does not reduce to a scalar output");
  }
  tr.acts.push_back(a);
  tr.output = a.v[0];
  return tr;
}

// Inference-mode scalar prediction (dropout disabled).
inline double forward(const RegressorModel& m, const Array2d& x) {
  return forward_trace(m, x, nullptr).output;
}

// Per-layer parameter gradients, aligned with RegressorModel::layers.
struct Gradients {
  struct LayerGrad {
    std::vector<double> w;
    std::vector<double> b;
  };
  std::vector<LayerGrad> layers;

  static Gradients zeros_like(const RegressorModel& m) {
    Gradients g;
    g.layers.resize(m.layers.size());
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
      if (const auto* c = std::get_if<Conv1d>(&m.layers[i])) {
        g.layers[i].w.assign(c->w.size(), 0.0);
        g.layers[i].b.assign(c->b.size(), 0.0);
      } else if (const auto* f = std::get_if<FullyConnected>(&m.layers[i])) {
        g.layers[i].w.assign(f->w.size(), 0.0);
        g.layers[i].b.assign(f->b.size(), 0.0);
      }
    }
    return g;
  }

  void add(const Gradients& other) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      for (std::size_t j = 0; j < layers[i].w.size(); ++j) layers[i].w[j] += other.layers[i].w[j];
      for (std::size_t j = 0; j < layers[i].b.size(); ++j) layers[i].b[j] += other.layers[i].b[j];
    }
  }

  void scale(double s) {
    for (auto& l : layers) {
      for (double& w : l.w) w *= s;
      for (double& b : l.b) b *= s;
    }
  }
};

// Backpropagates d(loss)/d(output) through the recorded trace.
inline Gradients backward(const RegressorModel& m, const ForwardTrace& tr, double dl_dout) {
  Gradients g = Gradients::zeros_like(m);
  Array2d grad(1, 1);
  grad.v[0] = dl_dout;

  for (int li = static_cast<int>(m.layers.size()) - 1; li >= 0; --li) {
    const Layer& l = m.layers[li];
    const Array2d& in = tr.acts[li];

    if (const auto* c = std::get_if<Conv1d>(&l)) {
      const int out_len = c->out_len(in.cols);
      Array2d gin(in.rows, in.cols);
      auto& lw = g.layers[li].w;
      auto& lb = g.layers[li].b;
      for (int co = 0; co < c->out_ch; ++co) {
        const double* go = grad.row(co);
        double acc_b = 0.0;
        for (int t = 0; t < out_len; ++t) acc_b += go[t];
        lb[co] += acc_b;
        for (int ci = 0; ci < c->in_ch; ++ci) {
          const double* src = in.row(ci);
          double* gi = gin.row(ci);
          for (int mth = 0; mth < c->kernel; ++mth) {
            const double wv = c->wat(co, ci, mth);
            double acc_w = 0.0;
            if (c->stride == 1) {
              const double* s = src + mth;
              double* gim = gi + mth;
              for (int t = 0; t < out_len; ++t) {
                acc_w += go[t] * s[t];
                gim[t] += go[t] * wv;
              }
            } else {
              for (int t = 0; t < out_len; ++t) {
                acc_w += go[t] * src[t * c->stride + mth];
                gin.row(ci)[t * c->stride + mth] += go[t] * wv;
              }
            }
            lw[(static_cast<std::size_t>(co) * c->in_ch + ci) * c->kernel + mth] += acc_w;
          }
        }
      }
      grad = std::move(gin);
    } else if (std::get_if<Relu>(&l)) {
      for (int j = 0; j < grad.size(); ++j) {
        if (in.v[j] <= 0.0) grad.v[j] = 0.0;
      }
    } else if (std::get_if<Flatten>(&l)) {
      Array2d gin(in.rows, in.cols);
      gin.v = grad.v;
      grad = std::move(gin);
    } else if (const auto* f = std::get_if<FullyConnected>(&l)) {
      Array2d gin(in.rows, in.cols);
      auto& lw = g.layers[li].w;
      auto& lb = g.layers[li].b;
      for (int o = 0; o < f->out; ++o) {
        const double go = grad.v[o];
        lb[o] += go;
        const double* w = f->w.data() + static_cast<std::size_t>(o) * f->in;
        double* lwo = lw.data() + static_cast<std::size_t>(o) * f->in;
        for (int i = 0; i < f->in; ++i) {
          lwo[i] += go * in.v[i];
          gin.v[i] += go * w[i];
        }
      }
      grad = std::move(gin);
    } else if (std::get_if<Dropout>(&l)) {
      const std::vector<double>& mask = tr.masks[li];
      if (!mask.empty()) {
        for (std::size_t j = 0; j < mask.size(); ++j) grad.v[j] *= mask[j];
      }
    }
  }
  return g;
}

// Gradients of the squared error (pred - target)^2 for one window.
inline Gradients backward_mse(const RegressorModel& m, const ForwardTrace& tr, double target) {
  return backward(m, tr, 2.0 * (tr.output - target));
}

inline double mse_loss(const std::vector<double>& preds, const std::vector<double>& targets) {
  if (preds.empty() || preds.size() != targets.size()) {
    throw ValidationError("mse_loss needs equal-length non-empty sequences");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double e = preds[i] - targets[i];
    acc += e * e;
  }
  return acc / static_cast<double>(preds.size());
}

}  // namespace ptnav
