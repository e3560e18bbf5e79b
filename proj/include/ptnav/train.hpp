#pragma once

// Training loop for the window regressor: Adam, reduce-on-plateau learning
// rate schedule, deterministic seeded shuffling and dropout, per-channel
// input standardization learned from the training split.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "ptnav/nn.hpp"

namespace ptnav {

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double plateau_decay = 0.7;
  int plateau_patience = 4;
  int epochs = 70;
  int batch = 64;
  int train_stride = kDefaultWindow / 2;  // used by callers when windowing
  int test_stride = kDefaultWindow;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(lr > 0.0)) throw ValidationError("learning rate must be positive");
    if (epochs < 1) throw ValidationError("epochs must be >= 1");
    if (batch < 1) throw ValidationError("batch size must be >= 1");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
      throw ValidationError("validation fraction must lie in (0, 1)");
    }
  }
};

struct LabeledWindow {
  Array2d x;
  double label = 0.0;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  RegressorModel model;
  std::vector<EpochStats> history;
};

namespace detail {

inline Normalization compute_normalization(const std::vector<LabeledWindow>& data,
                                           const std::vector<std::size_t>& idx) {
  const int channels = data[idx.front()].x.rows;
  Normalization norm;
  norm.mean.assign(channels, 0.0);
  norm.stddev.assign(channels, 0.0);
  std::vector<double> sq(channels, 0.0);
  std::size_t count = 0;
  for (const std::size_t i : idx) {
    const Array2d& x = data[i].x;
    for (int r = 0; r < x.rows; ++r) {
      const double* row = x.row(r);
      for (int c = 0; c < x.cols; ++c) {
        norm.mean[r] += row[c];
        sq[r] += row[c] * row[c];
      }
    }
    count += static_cast<std::size_t>(data[i].x.cols);
  }
  for (int r = 0; r < channels; ++r) {
    norm.mean[r] /= static_cast<double>(count);
    const double var = sq[r] / static_cast<double>(count) - norm.mean[r] * norm.mean[r];
    norm.stddev[r] = std::sqrt(std::max(var, 0.0));
  }
  return norm;
}

// Adam moment buffers mirroring the Gradients layout.
struct AdamState {
  Gradients m;
  Gradients v;
  long step = 0;
};

inline void adam_step(RegressorModel& model, const Gradients& g, AdamState& st,
                      const TrainConfig& cfg, double lr) {
  st.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    auto apply = [&](std::vector<double>& theta, const std::vector<double>& grad,
                     std::vector<double>& m, std::vector<double>& v) {
      for (std::size_t j = 0; j < theta.size(); ++j) {
        m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * grad[j];
        v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * grad[j] * grad[j];
        const double mhat = m[j] / bc1;
        const double vhat = v[j] / bc2;
        theta[j] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
      }
    };
    Layer& l = model.layers[li];
    if (auto* c = std::get_if<Conv1d>(&l)) {
      apply(c->w, g.layers[li].w, st.m.layers[li].w, st.v.layers[li].w);
      apply(c->b, g.layers[li].b, st.m.layers[li].b, st.v.layers[li].b);
    } else if (auto* f = std::get_if<FullyConnected>(&l)) {
      apply(f->w, g.layers[li].w, st.m.layers[li].w, st.v.layers[li].w);
      apply(f->b, g.layers[li].b, st.m.layers[li].b, st.v.layers[li].b);
    }
  }
}

}  // namespace detail

// Trains `model` (architecture in, weights initialized here from cfg.seed) on
// labeled windows.  The last val_fraction of the windows, in input order, is
// the validation holdout.  Deterministic: identical seed and data give
// bit-identical histories and weights.
inline TrainResult train(RegressorModel model, const std::vector<LabeledWindow>& data,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw ValidationError("empty training dataset");
  for (const LabeledWindow& w : data) {
    if (!std::isfinite(w.label)) throw ValidationError("non-finite training label");
  }

  const std::size_t n_val =
      std::max<std::size_t>(1, static_cast<std::size_t>(
                                   std::llround(cfg.val_fraction * data.size())));
  if (n_val >= data.size()) {
    throw ValidationError("dataset too small to split off a validation set");
  }
  std::vector<std::size_t> train_idx(data.size() - n_val);
  std::iota(train_idx.begin(), train_idx.end(), 0);
  std::vector<std::size_t> val_idx(n_val);
  std::iota(val_idx.begin(), val_idx.end(), train_idx.size());

  model.norm = detail::compute_normalization(data, train_idx);
  model.train_seed = cfg.seed;

  Rng rng(cfg.seed);
  init_weights(model, rng);

  detail::AdamState adam;
  adam.m = Gradients::zeros_like(model);
  adam.v = Gradients::zeros_like(model);

  double lr = cfg.lr;
  double best_val = std::numeric_limits<double>::infinity();
  int stale_epochs = 0;

  auto eval_val = [&]() {
    double acc = 0.0;
    for (const std::size_t i : val_idx) {
      const double e = forward(model, data[i].x) - data[i].label;
      acc += e * e;
    }
    return acc / static_cast<double>(val_idx.size());
  };

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(train_idx, rng);
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < train_idx.size(); start += cfg.batch) {
      const std::size_t stop = std::min(train_idx.size(), start + cfg.batch);
      Gradients batch_grad = Gradients::zeros_like(model);
      for (std::size_t k = start; k < stop; ++k) {
        const LabeledWindow& w = data[train_idx[k]];
        const ForwardTrace tr = forward_trace(model, w.x, &rng);
        const double err = tr.output - w.label;
        epoch_loss += err * err;
        batch_grad.add(backward(model, tr, 2.0 * err));
      }
      batch_grad.scale(1.0 / static_cast<double>(stop - start));
      detail::adam_step(model, batch_grad, adam, cfg, lr);
      seen += stop - start;
    }
    const double train_loss = epoch_loss / static_cast<double>(seen);
    const double val_loss = eval_val();
    if (!std::isfinite(train_loss) || !std::isfinite(val_loss)) {
      throw DivergenceError("training loss became non-finite at epoch " +
                            std::to_string(epoch));
    }
    result.history.push_back({epoch, train_loss, val_loss, lr});

    if (val_loss < best_val - 1e-12) {
      best_val = val_loss;
      stale_epochs = 0;
    } else {
      stale_epochs += 1;
      if (stale_epochs >= cfg.plateau_patience) {
        lr *= cfg.plateau_decay;
        stale_epochs = 0;
      }
    }
  }

  model.validation_drmse = std::sqrt(result.history.back().val_loss);
  result.model = std::move(model);
  return result;
}

}  // namespace ptnav
