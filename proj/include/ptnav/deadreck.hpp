#pragma once

// IMU stream windowing and displacement dead reckoning: each window is
// regressed to a horizontal distance and a vertical displacement, then
// folded into position with the yaw at the window start.

#include <cmath>
#include <cstddef>
#include <functional>
#include <iostream>
#include <vector>

#include "ptnav/nn.hpp"
#include "ptnav/simgen.hpp"

namespace ptnav {

// One regression window: a 6 x W tensor (rows fx, fy, fz, wx, wy, wz) of
// consecutive IMU samples [first_sample, first_sample + W).  The motion
// label spans [t_start, t_end], where t_end is the sample one past the
// window (clamped to the stream end), so back-to-back windows telescope.
struct Window {
  Array2d tensor;
  std::size_t first_sample = 0;
  double t_start = 0.0;
  double t_end = 0.0;
  std::vector<Vec3> gt_p;

  bool has_gt() const { return !gt_p.empty(); }
};

inline std::vector<Window> make_windows(const std::vector<ImuSample>& stream,
                                        int window, int stride) {
  if (window < 1) throw ValidationError("window length must be >= 1");
  if (stride < 1) throw ValidationError("window stride must be >= 1");
  const std::size_t w = static_cast<std::size_t>(window);
  if (stream.size() < w) {
    std::cerr << "warning: stream of " << stream.size()
              << " samples is shorter than one window of " << window
              << "; no windows produced\n";
    return {};
  }
  std::vector<Window> out;
  for (std::size_t first = 0; first + w <= stream.size();
       first += static_cast<std::size_t>(stride)) {
    Window win;
    win.tensor = Array2d(kWindowChannels, window);
    for (int c = 0; c < window; ++c) {
      const ImuSample& s = stream[first + static_cast<std::size_t>(c)];
      for (int r = 0; r < 3; ++r) {
        win.tensor.at(r, c) = s.f_b[r];
        win.tensor.at(r + 3, c) = s.w_b[r];
      }
    }
    win.first_sample = first;
    win.t_start = stream[first].t;
    win.t_end = stream[std::min(first + w, stream.size() - 1)].t;
    out.push_back(std::move(win));
  }
  return out;
}

// Subtracts each row's mean.  A constant channel offset inside one window is
// indistinguishable from an unestimated turn-on bias, so regressors consume
// centered tensors at both training and inference time.
inline Array2d center_rows(const Array2d& x) {
  Array2d out = x;
  for (int r = 0; r < out.rows; ++r) {
    double mean = 0.0;
    for (int c = 0; c < out.cols; ++c) mean += out.at(r, c);
    mean /= out.cols;
    for (int c = 0; c < out.cols; ++c) out.at(r, c) -= mean;
  }
  return out;
}

// Copies the truth positions covering each window's label span,
// [first_sample, first_sample + W] clamped to the stream end.
inline void attach_ground_truth(std::vector<Window>& windows,
                                const std::vector<TruthSample>& truth) {
  for (Window& w : windows) {
    const std::size_t last =
        std::min(w.first_sample + static_cast<std::size_t>(w.tensor.cols), truth.size() - 1);
    if (w.first_sample >= truth.size() ||
        std::abs(truth[w.first_sample].t - w.t_start) > 1e-9) {
      throw ValidationError("ground truth does not align with the window stream");
    }
    w.gt_p.resize(last - w.first_sample + 1);
    for (std::size_t i = w.first_sample; i <= last; ++i) {
      w.gt_p[i - w.first_sample] = truth[i].p;
    }
  }
}

namespace detail {
inline void require_gt(const Window& w) {
  if (!w.has_gt()) throw ValidationError("window carries no ground truth");
}
}  // namespace detail

// Horizontal ground-truth polyline length over the label span.
inline double oracle_distance(const Window& w) {
  detail::require_gt(w);
  double len = 0.0;
  for (std::size_t i = 1; i < w.gt_p.size(); ++i) {
    len += std::hypot(w.gt_p[i].x() - w.gt_p[i - 1].x(),
                      w.gt_p[i].y() - w.gt_p[i - 1].y());
  }
  return len;
}

// Signed vertical ground-truth displacement over the label span.
inline double oracle_altitude(const Window& w) {
  detail::require_gt(w);
  return w.gt_p.back().z() - w.gt_p.front().z();
}

// Straight-line horizontal distance between the label span endpoints.
inline double chord_distance(const Window& w) {
  detail::require_gt(w);
  return std::hypot(w.gt_p.back().x() - w.gt_p.front().x(),
                    w.gt_p.back().y() - w.gt_p.front().y());
}

// Heading of that chord.
inline double chord_heading(const Window& w) {
  detail::require_gt(w);
  return std::atan2(w.gt_p.back().y() - w.gt_p.front().y(),
                    w.gt_p.back().x() - w.gt_p.front().x());
}

struct DrState {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double psi = 0.0;
};

inline DrState dr_step(const DrState& s, double distance, double dz, double psi) {
  DrState out = s;
  out.x = s.x + distance * std::cos(psi);
  out.y = s.y + distance * std::sin(psi);
  out.z = s.z + dz;
  out.psi = psi;
  return out;
}

using WindowScalarFn = std::function<double(const Window&)>;

// Folds one dr_step per window.  The yaw source is evaluated per window and
// must return the heading at the window start.  The ground robot holds z at
// its initial value; the quadrotor requires an altitude source.
inline std::vector<DrState> run_dead_reckoning(const std::vector<Window>& windows,
                                               const WindowScalarFn& distance,
                                               const WindowScalarFn& altitude,
                                               const WindowScalarFn& yaw,
                                               const DrState& initial,
                                               Platform platform) {
  if (!distance) throw ValidationError("distance source is required");
  if (!yaw) throw ValidationError("yaw source is required");
  const bool use_altitude = platform == Platform::kQuadrotor;
  if (use_altitude && !altitude) {
    throw ValidationError("altitude source is required for the quadrotor");
  }
  std::vector<DrState> out;
  out.reserve(windows.size());
  DrState s = initial;
  for (const Window& w : windows) {
    const double dz = use_altitude ? altitude(w) : 0.0;
    s = dr_step(s, distance(w), dz, yaw(w));
    s.t = w.t_end;
    out.push_back(s);
  }
  return out;
}

}  // namespace ptnav
