#pragma once

// Position error metrics over time-aligned estimate/truth sequences, and
// the per-run record the experiment drivers emit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ptnav/core.hpp"

namespace ptnav {

struct TimedPosition {
  double t = 0.0;
  Vec3 p = Vec3::Zero();
};

struct RunRecord {
  std::string run_id;
  std::string mode;
  std::string platform;
  std::uint64_t seed = 0;
  double rmse_m = 0.0;
  double max_error_m = 0.0;
  std::optional<double> drmse_m;
  double duration_s = 0.0;
};

// Pairs each truth timestamp with the nearest estimate no farther than half
// the median truth period; truth points with no such neighbor are dropped.
inline std::vector<std::pair<std::size_t, std::size_t>> align_nearest(
    const std::vector<TimedPosition>& est, const std::vector<TimedPosition>& gt) {
  if (est.empty() || gt.empty()) {
    throw ValidationError("cannot align empty position sequences");
  }
  double tol = std::numeric_limits<double>::infinity();
  if (gt.size() > 1) {
    std::vector<double> periods(gt.size() - 1);
    for (std::size_t i = 1; i < gt.size(); ++i) periods[i - 1] = gt[i].t - gt[i - 1].t;
    std::nth_element(periods.begin(), periods.begin() + periods.size() / 2,
                     periods.end());
    tol = 0.5 * periods[periods.size() / 2];
  }
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t g = 0; g < gt.size(); ++g) {
    std::size_t best = 0;
    double best_dt = std::numeric_limits<double>::infinity();
    const auto it = std::lower_bound(
        est.begin(), est.end(), gt[g].t,
        [](const TimedPosition& a, double t) { return a.t < t; });
    const auto idx = static_cast<std::size_t>(it - est.begin());
    for (const std::size_t cand : {idx > 0 ? idx - 1 : 0, std::min(idx, est.size() - 1)}) {
      const double dt = std::abs(est[cand].t - gt[g].t);
      if (dt < best_dt) {
        best_dt = dt;
        best = cand;
      }
    }
    if (best_dt <= tol) pairs.push_back({best, g});
  }
  if (pairs.empty()) {
    throw ValidationError("estimate and truth sequences do not overlap in time");
  }
  return pairs;
}

inline double rmse(const std::vector<TimedPosition>& est,
                   const std::vector<TimedPosition>& gt) {
  const auto pairs = align_nearest(est, gt);
  double acc = 0.0;
  for (const auto& [e, g] : pairs) acc += (est[e].p - gt[g].p).squaredNorm();
  return std::sqrt(acc / static_cast<double>(pairs.size()));
}

inline double max_error(const std::vector<TimedPosition>& est,
                        const std::vector<TimedPosition>& gt) {
  const auto pairs = align_nearest(est, gt);
  double worst = 0.0;
  for (const auto& [e, g] : pairs) {
    worst = std::max(worst, (est[e].p - gt[g].p).norm());
  }
  return worst;
}

inline double drmse(const std::vector<double>& d, const std::vector<double>& d_hat) {
  if (d.empty()) throw ValidationError("cannot compute drmse of empty sequences");
  if (d.size() != d_hat.size()) {
    throw ValidationError("distance sequences differ in length");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    acc += (d[i] - d_hat[i]) * (d[i] - d_hat[i]);
  }
  return std::sqrt(acc / static_cast<double>(d.size()));
}

}  // namespace ptnav
