#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ptnav/core.hpp"
#include "ptnav/deadreck.hpp"
#include "ptnav/eskf.hpp"
#include "ptnav/metrics.hpp"
#include "ptnav/nn.hpp"
#include "ptnav/simgen.hpp"
#include "ptnav/strapdown.hpp"

namespace ptnav {

enum class RunMode { kInsOnly, kInsGnss, kMqnDr, kMqnEkf, kInsGnssMqn };

inline const char* to_string(RunMode m) {
  switch (m) {
    case RunMode::kInsOnly: return "INS_only";
    case RunMode::kInsGnss: return "INS_GNSS";
    case RunMode::kMqnDr: return "MQN_DR";
    case RunMode::kMqnEkf: return "MQN_EKF";
    case RunMode::kInsGnssMqn: return "INS_GNSS_MQN";
  }
  throw ValidationError("unknown run mode");
}

inline RunMode run_mode_by_name(const std::string& name) {
  if (name == "INS_only") return RunMode::kInsOnly;
  if (name == "INS_GNSS") return RunMode::kInsGnss;
  if (name == "MQN_DR") return RunMode::kMqnDr;
  if (name == "MQN_EKF") return RunMode::kMqnEkf;
  if (name == "INS_GNSS_MQN") return RunMode::kInsGnssMqn;
  throw ValidationError("unknown run mode: " + name);
}

inline NoiseConfig noise_config(const SensorErrorSpec& es) {
  NoiseConfig nc;
  nc.accel_noise_density = es.accel_noise_density;
  nc.gyro_noise_density = es.gyro_noise_density;
  nc.accel_bias_rw = es.accel_bias_rw;
  nc.gyro_bias_rw = es.gyro_bias_rw;
  return nc;
}

// Aiding update epochs.  GNSS epochs come from the fix stream; regressor
// epochs are offset + k * period.  A regressor epoch that lands on a GNSS
// epoch would double-count one filter step, so the combination is rejected.
struct UpdateSchedule {
  std::vector<double> gnss_epochs;
  std::vector<double> mqn_epochs;

  void validate(double tol) const {
    for (std::size_t i = 1; i < gnss_epochs.size(); ++i) {
      if (gnss_epochs[i] <= gnss_epochs[i - 1]) {
        throw ValidationError("gnss epochs must be strictly increasing");
      }
    }
    for (std::size_t i = 1; i < mqn_epochs.size(); ++i) {
      if (mqn_epochs[i] <= mqn_epochs[i - 1]) {
        throw ValidationError("regressor epochs must be strictly increasing");
      }
    }
    std::size_t g = 0;
    for (double tau : mqn_epochs) {
      while (g < gnss_epochs.size() && gnss_epochs[g] < tau - tol) ++g;
      if (g < gnss_epochs.size() && std::abs(gnss_epochs[g] - tau) <= tol) {
        std::ostringstream os;
        os << "regressor epoch " << tau << " coincides with a gnss epoch";
        throw ValidationError(os.str());
      }
    }
  }
};

// Generalized position fix: measured position, full covariance, source tag.
struct Measurement {
  double t = 0.0;
  Vec3 z = Vec3::Zero();
  Mat3 R = Mat3::Identity();
  FixSource source = FixSource::kGnss;
};

struct BuiltMeasurement {
  Measurement measurement;
  MeasurementModel model;
  Vec3 residual = Vec3::Zero();
};

inline BuiltMeasurement gnss_measurement(const PositionFix& fix, const Vec3& ins_position) {
  BuiltMeasurement out;
  out.measurement.t = fix.t;
  out.measurement.z = fix.p;
  out.measurement.R = fix.sigma * fix.sigma * Mat3::Identity();
  out.measurement.source = FixSource::kGnss;
  out.model = position_measurement_model(out.measurement.R, FixSource::kGnss);
  out.residual = ins_position - fix.p;
  return out;
}

inline BuiltMeasurement mqn_measurement(const DrState& dr, const Vec3& ins_position,
                                        const Mat3& r_mqn) {
  BuiltMeasurement out;
  out.measurement.t = dr.t;
  out.measurement.z = Vec3(dr.x, dr.y, dr.z);
  out.measurement.R = r_mqn;
  out.measurement.source = FixSource::kMqn;
  out.model = position_measurement_model(r_mqn, FixSource::kMqn);
  out.residual = ins_position - out.measurement.z;
  return out;
}

// Window regressors feeding the filter.  Sigmas are the 1-sigma measurement
// scales entering R; a trained model carries its holdout DRMSE for this.
struct MqnRegressor {
  WindowScalarFn distance;
  WindowScalarFn altitude;
  double distance_sigma = 0.0;
  double altitude_sigma = 0.0;
};

inline MqnRegressor model_regressor(const RegressorModel& distance_model) {
  MqnRegressor r;
  r.distance = [m = distance_model](const Window& w) {
    return forward(m, center_rows(w.tensor));
  };
  r.distance_sigma = distance_model.validation_drmse;
  return r;
}

inline MqnRegressor model_regressor(const RegressorModel& distance_model,
                                    const RegressorModel& altitude_model) {
  MqnRegressor r = model_regressor(distance_model);
  r.altitude = [m = altitude_model](const Window& w) {
    return forward(m, center_rows(w.tensor));
  };
  r.altitude_sigma = altitude_model.validation_drmse;
  return r;
}

// Reads labels straight off the ground truth; the truth must outlive the
// returned closures.
inline MqnRegressor oracle_regressor(const std::vector<TruthSample>& truth,
                                     double distance_sigma, double altitude_sigma) {
  MqnRegressor r;
  r.distance = [&truth](const Window& w) {
    const std::size_t last =
        std::min(w.first_sample + static_cast<std::size_t>(w.tensor.cols), truth.size() - 1);
    double len = 0.0;
    for (std::size_t i = w.first_sample + 1; i <= last; ++i) {
      len += std::hypot(truth[i].p.x() - truth[i - 1].p.x(),
                        truth[i].p.y() - truth[i - 1].p.y());
    }
    return len;
  };
  r.altitude = [&truth](const Window& w) {
    const std::size_t last =
        std::min(w.first_sample + static_cast<std::size_t>(w.tensor.cols), truth.size() - 1);
    return truth[last].p.z() - truth[w.first_sample].p.z();
  };
  r.distance_sigma = distance_sigma;
  r.altitude_sigma = altitude_sigma;
  return r;
}

struct FusionConfig {
  RunMode mode = RunMode::kInsOnly;
  Platform platform = Platform::kQuadrotor;
  NavState initial;
  BiasEstimate initial_bias;
  Mat15 initial_covariance = default_initial_covariance();
  NoiseConfig noise;
  int window = 120;
  double mqn_offset = 1.5;
  double mqn_period = 1.0;
  double robot_altitude_sigma = 0.1;
  // Closed loop re-anchors each regressor window at the filter's recorded
  // position for the window start; the open-loop chain folds displacements
  // from the initial position without consulting the filter.
  bool open_loop_chain = false;
  bool anchor_covariance_in_r = true;
  double divergence_abort_m = 1e3;

  void validate() const {
    if (window < 1) throw ValidationError("window must be >= 1");
    if (!(mqn_period > 0.0)) throw ValidationError("regressor period must be > 0");
    if (!(mqn_offset > 0.0)) throw ValidationError("regressor offset must be > 0");
    if (!(robot_altitude_sigma > 0.0)) throw ValidationError("altitude sigma must be > 0");
    if (!(divergence_abort_m > 0.0)) throw ValidationError("divergence threshold must be > 0");
    if (!std::isfinite(initial.t)) throw ValidationError("initial time must be finite");
  }
};

inline FusionConfig default_fusion_config(RunMode mode, Platform platform,
                                          const NavState& initial, const NoiseConfig& noise) {
  FusionConfig c;
  c.mode = mode;
  c.platform = platform;
  c.initial = initial;
  c.noise = noise;
  if (mode == RunMode::kMqnEkf) {
    c.mqn_offset = c.mqn_period;
    c.open_loop_chain = true;
    c.anchor_covariance_in_r = false;
  }
  return c;
}

struct InnovationRecord {
  double t = 0.0;
  FixSource source = FixSource::kGnss;
  Vec3 innovation = Vec3::Zero();
  Vec3 innovation_sigma = Vec3::Zero();
  bool rejected = false;
};

struct FusionResult {
  std::vector<NavState> states;            // per imu sample (filter modes)
  std::vector<DrState> dr_track;           // per window (MQN_DR)
  std::vector<TimedPosition> estimates;    // uniform view for metrics
  std::vector<InnovationRecord> innovations;
  std::vector<Mat3> position_covariances;  // per imu sample (filter modes)
  bool aborted = false;
  std::string abort_reason;
  bool large_misalignment = false;
  BiasEstimate final_bias;
};

namespace detail {

inline Window slice_window(const std::vector<ImuSample>& stream, std::size_t first, int w) {
  Window out;
  out.first_sample = first;
  out.t_start = stream[first].t;
  out.t_end = stream[std::min(first + static_cast<std::size_t>(w), stream.size() - 1)].t;
  out.tensor = Array2d(6, w);
  for (int j = 0; j < w; ++j) {
    const ImuSample& s = stream[first + static_cast<std::size_t>(j)];
    out.tensor.at(0, j) = s.f_b.x();
    out.tensor.at(1, j) = s.f_b.y();
    out.tensor.at(2, j) = s.f_b.z();
    out.tensor.at(3, j) = s.w_b.x();
    out.tensor.at(4, j) = s.w_b.y();
    out.tensor.at(5, j) = s.w_b.z();
  }
  return out;
}

inline FusionResult run_windowed_dead_reckoning(const std::vector<ImuSample>& stream,
                                                const MqnRegressor& regressor,
                                                const FusionConfig& cfg) {
  const std::vector<Window> windows = make_windows(stream, cfg.window, cfg.window);
  const std::vector<NavState> ins = propagate_stream(cfg.initial, stream);
  const WindowScalarFn yaw = [&ins](const Window& w) {
    return yaw_of(ins[w.first_sample].att).psi;
  };
  DrState start;
  start.t = cfg.initial.t;
  start.x = cfg.initial.p.x();
  start.y = cfg.initial.p.y();
  start.z = cfg.initial.p.z();
  start.psi = yaw_of(cfg.initial.att).psi;
  FusionResult out;
  out.dr_track =
      run_dead_reckoning(windows, regressor.distance, regressor.altitude, yaw, start, cfg.platform);
  out.states = ins;
  out.estimates.reserve(out.dr_track.size() + 1);
  out.estimates.push_back({start.t, Vec3(start.x, start.y, start.z)});
  for (const DrState& s : out.dr_track) out.estimates.push_back({s.t, Vec3(s.x, s.y, s.z)});
  return out;
}

}  // namespace detail

// Runs one trajectory estimate.  Filter modes produce one NavState per imu
// sample; every update is followed immediately by error injection and a dx
// reset, so the recorded states are the corrected ones.  A position
// correction beyond the divergence threshold aborts the run and returns the
// partial track with a diagnostic reason.
inline FusionResult run_fusion(const std::vector<ImuSample>& stream,
                               const std::vector<PositionFix>& fixes,
                               const MqnRegressor& regressor, const FusionConfig& cfg) {
  cfg.validate();
  if (stream.size() < 2) throw ValidationError("fusion needs at least two imu samples");
  if (std::abs(cfg.initial.t - stream.front().t) > 1e-9) {
    throw ValidationError("initial state time must match the first imu sample");
  }
  for (std::size_t i = 1; i < fixes.size(); ++i) {
    if (fixes[i].t <= fixes[i - 1].t) throw ValidationError("fixes must be strictly increasing");
  }

  if (cfg.mode == RunMode::kMqnDr) {
    if (!regressor.distance) throw ValidationError("distance source is required");
    return detail::run_windowed_dead_reckoning(stream, regressor, cfg);
  }

  const bool use_gnss = cfg.mode == RunMode::kInsGnss || cfg.mode == RunMode::kInsGnssMqn;
  const bool use_mqn = cfg.mode == RunMode::kMqnEkf || cfg.mode == RunMode::kInsGnssMqn;
  const double dt = stream[1].t - stream[0].t;
  const double tol = 0.5 * dt;
  const std::size_t w = static_cast<std::size_t>(cfg.window);

  if (use_mqn) {
    if (!regressor.distance) throw ValidationError("distance source is required");
    if (!(regressor.distance_sigma > 0.0)) throw ValidationError("distance sigma must be > 0");
    if (cfg.platform == Platform::kQuadrotor) {
      if (!regressor.altitude) throw ValidationError("altitude source is required for the quadrotor");
      if (!(regressor.altitude_sigma > 0.0)) throw ValidationError("altitude sigma must be > 0");
    }
    if (cfg.open_loop_chain && std::abs(cfg.mqn_offset - w * dt) > tol) {
      throw ValidationError("open-loop chain requires the first epoch to close the first window");
    }
  }

  UpdateSchedule sched;
  if (use_gnss) {
    sched.gnss_epochs.reserve(fixes.size());
    for (const PositionFix& f : fixes) sched.gnss_epochs.push_back(f.t);
  }
  if (use_mqn) {
    for (int k = 0;; ++k) {
      const double tau = cfg.mqn_offset + k * cfg.mqn_period;
      if (tau > stream.back().t + tol) break;
      sched.mqn_epochs.push_back(tau);
    }
  }
  sched.validate(tol);

  Eskf filter(cfg.initial, cfg.initial_covariance, cfg.noise);
  FusionResult out;
  out.states.reserve(stream.size());
  out.states.push_back(cfg.initial);
  out.position_covariances.reserve(stream.size());
  out.position_covariances.push_back(cfg.initial_covariance.block<3, 3>(kIdxPos, kIdxPos));

  std::size_t gi = 0;
  std::size_t mi = 0;
  Vec3 chain_p = cfg.initial.p;

  for (std::size_t k = 1; k < stream.size() && !out.aborted; ++k) {
    filter.propagate(stream[k], stream[k].t - stream[k - 1].t);

    while (!out.aborted && use_gnss && gi < sched.gnss_epochs.size() &&
           sched.gnss_epochs[gi] <= stream[k].t + tol) {
      if (sched.gnss_epochs[gi] < stream[k].t - tol) {
        std::cerr << "warning: gnss fix at t=" << fixes[gi].t
                  << " does not align with an imu sample; skipping update\n";
        ++gi;
        continue;
      }
      const BuiltMeasurement built = gnss_measurement(fixes[gi], filter.state().p);
      const UpdateResult res = filter.update_position(built.model, built.measurement.z);
      out.innovations.push_back(
          {fixes[gi].t, FixSource::kGnss, res.innovation, res.innovation_sigma, res.rejected});
      if (!res.rejected) {
        const double corr = res.belief.dx.segment<3>(kIdxPos).norm();
        if (corr > cfg.divergence_abort_m) {
          std::ostringstream os;
          os << "filter diverged: position correction " << corr << " m at t=" << fixes[gi].t
             << " s exceeds " << cfg.divergence_abort_m << " m";
          out.aborted = true;
          out.abort_reason = os.str();
        }
      }
      ++gi;
    }

    while (!out.aborted && use_mqn && mi < sched.mqn_epochs.size() &&
           sched.mqn_epochs[mi] <= stream[k].t + tol) {
      const double tau = sched.mqn_epochs[mi];
      if (tau < stream[k].t - tol) {
        std::cerr << "warning: regressor epoch t=" << tau
                  << " does not align with an imu sample; skipping update\n";
        ++mi;
        continue;
      }
      if (k < w) {
        std::cerr << "warning: regressor window stale at t=" << tau << " (needs " << cfg.window
                  << " samples); skipping update\n";
        ++mi;
        continue;
      }
      const std::size_t first = k - w;
      const Window win = detail::slice_window(stream, first, cfg.window);
      const double psi = yaw_of(out.states[first].att).psi;
      DrState anchor;
      anchor.t = stream[first].t;
      if (cfg.open_loop_chain) {
        anchor.x = chain_p.x();
        anchor.y = chain_p.y();
        anchor.z = chain_p.z();
      } else {
        anchor.x = out.states[first].p.x();
        anchor.y = out.states[first].p.y();
        anchor.z = out.states[first].p.z();
      }
      const double dz =
          cfg.platform == Platform::kQuadrotor ? regressor.altitude(win) : 0.0;
      DrState zk = dr_step(anchor, regressor.distance(win), dz, psi);
      zk.t = tau;
      double sigma_z = regressor.altitude_sigma;
      if (cfg.platform == Platform::kGroundRobot) {
        zk.z = cfg.initial.p.z();
        sigma_z = cfg.robot_altitude_sigma;
      }
      Mat3 r_mqn = Mat3::Zero();
      r_mqn(0, 0) = regressor.distance_sigma * regressor.distance_sigma;
      r_mqn(1, 1) = r_mqn(0, 0);
      r_mqn(2, 2) = sigma_z * sigma_z;
      if (cfg.anchor_covariance_in_r && !cfg.open_loop_chain) {
        const Mat3& pa = out.position_covariances[first];
        if (cfg.platform == Platform::kGroundRobot) {
          r_mqn.topLeftCorner<2, 2>() += pa.topLeftCorner<2, 2>();
        } else {
          r_mqn += pa;
        }
      }
      const BuiltMeasurement built = mqn_measurement(zk, filter.state().p, r_mqn);
      const UpdateResult res = filter.update_position(built.model, built.measurement.z);
      out.innovations.push_back(
          {tau, FixSource::kMqn, res.innovation, res.innovation_sigma, res.rejected});
      if (cfg.open_loop_chain) chain_p = built.measurement.z;
      if (!res.rejected) {
        const double corr = res.belief.dx.segment<3>(kIdxPos).norm();
        if (corr > cfg.divergence_abort_m) {
          std::ostringstream os;
          os << "filter diverged: position correction " << corr << " m at t=" << tau
             << " s exceeds " << cfg.divergence_abort_m << " m";
          out.aborted = true;
          out.abort_reason = os.str();
        }
      }
      ++mi;
    }

    out.states.push_back(filter.state());
    out.position_covariances.push_back(filter.belief().P.block<3, 3>(kIdxPos, kIdxPos));
  }

  out.large_misalignment = filter.saw_large_misalignment();
  out.final_bias = filter.bias();
  out.estimates.reserve(out.states.size());
  for (const NavState& s : out.states) out.estimates.push_back({s.t, s.p});
  return out;
}

}  // namespace ptnav
