#pragma once

// Synthetic trajectory generation: analytic periodic and straight paths,
// inverse mechanization into ideal IMU streams, sensor corruption, and
// noisy GNSS position fixes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ptnav/strapdown.hpp"

namespace ptnav {

enum class Platform { kQuadrotor, kGroundRobot };

inline std::string to_string(Platform p) {
  return p == Platform::kQuadrotor ? "quadrotor" : "robot";
}

inline Platform platform_by_name(const std::string& name) {
  if (name == "quadrotor") return Platform::kQuadrotor;
  if (name == "robot") return Platform::kGroundRobot;
  throw ValidationError("unknown platform: " + name);
}

enum class TrajectoryKind { kStraight, kPts };

inline std::string to_string(TrajectoryKind k) {
  return k == TrajectoryKind::kStraight ? "straight" : "pts";
}

inline TrajectoryKind trajectory_kind_by_name(const std::string& name) {
  if (name == "straight") return TrajectoryKind::kStraight;
  if (name == "pts") return TrajectoryKind::kPts;
  throw ValidationError("unknown trajectory kind: " + name);
}

// Constant-speed advance along `heading` with, for the periodic kind, a
// lateral sine whose amplitude and period are re-drawn each cycle and
// blended smoothly between cycles.  The quadrotor additionally oscillates
// in altitude; the ground robot stays at z = 0.
struct TrajectorySpec {
  TrajectoryKind kind = TrajectoryKind::kPts;
  Platform platform = Platform::kQuadrotor;
  double speed = 3.7;
  double duration = 36.0;
  double amplitude = 2.0;
  double period = 6.0;
  double amplitude_jitter = 0.2;
  double period_jitter = 0.2;
  double heading = 0.0;
  double altitude_amplitude = 0.5;
  double altitude_period = 6.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(duration > 0.0)) throw ValidationError("trajectory duration must be > 0");
    if (!(period > 0.0)) throw ValidationError("trajectory period must be > 0");
    if (amplitude < 0.0) throw ValidationError("trajectory amplitude must be >= 0");
    if (speed < 0.0) throw ValidationError("trajectory speed must be >= 0");
    if (amplitude_jitter < 0.0 || amplitude_jitter >= 1.0 || period_jitter < 0.0 ||
        period_jitter >= 1.0) {
      throw ValidationError("jitter fractions must lie in [0, 1)");
    }
    if (altitude_amplitude < 0.0) {
      throw ValidationError("altitude amplitude must be >= 0");
    }
    if (!(altitude_period > 0.0)) throw ValidationError("altitude period must be > 0");
    if (!std::isfinite(heading)) throw ValidationError("heading must be finite");
  }

  static TrajectorySpec quadrotor_default() { return TrajectorySpec{}; }

  static TrajectorySpec robot_default() {
    TrajectorySpec s;
    s.platform = Platform::kGroundRobot;
    s.speed = 0.6;
    s.duration = 120.0;
    s.amplitude = 1.0;
    s.period = 10.0;
    s.altitude_amplitude = 0.0;
    s.altitude_period = 10.0;
    return s;
  }
};

struct TruthSample {
  double t = 0.0;
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 a = Vec3::Zero();
  Attitude att;
};

namespace detail {

// Per-cycle knots of the lateral sine.  Knot i carries the amplitude and
// angular rate in force at phase 2*pi*i; segment i spans exactly one cycle,
// so its length is 4*pi / (omega_i + omega_{i+1}).
struct PtsKnots {
  std::vector<double> t;
  std::vector<double> amp;
  std::vector<double> omega;
};

inline PtsKnots build_pts_knots(const TrajectorySpec& spec) {
  Rng rng(spec.seed);
  auto draw = [&rng](double nominal, double jitter) {
    return nominal * (1.0 + jitter * rng.uniform(-1.0, 1.0));
  };
  PtsKnots k;
  k.t.push_back(0.0);
  k.amp.push_back(draw(spec.amplitude, spec.amplitude_jitter));
  k.omega.push_back(2.0 * kPi / draw(spec.period, spec.period_jitter));
  while (k.t.back() <= spec.duration) {
    k.amp.push_back(draw(spec.amplitude, spec.amplitude_jitter));
    k.omega.push_back(2.0 * kPi / draw(spec.period, spec.period_jitter));
    const std::size_t i = k.omega.size() - 2;
    k.t.push_back(k.t[i] + 4.0 * kPi / (k.omega[i] + k.omega[i + 1]));
  }
  return k;
}

// Lateral offset and its first two time derivatives at t.  Amplitude and
// angular rate follow a quintic smoothstep between knots, and the phase is
// the exact integral of the rate, so position, velocity, and acceleration
// stay mutually consistent.
inline void pts_lateral(const PtsKnots& k, double t, double& off, double& vel,
                        double& acc) {
  const auto it = std::upper_bound(k.t.begin(), k.t.end(), t);
  std::size_t i = static_cast<std::size_t>(it - k.t.begin());
  i = std::min(std::max<std::size_t>(i, 1), k.t.size() - 1) - 1;
  const double dk = k.t[i + 1] - k.t[i];
  const double u = (t - k.t[i]) / dk;
  const double s = ((6.0 * u - 15.0) * u + 10.0) * u * u * u;
  const double sp = 30.0 * u * u * (u - 1.0) * (u - 1.0);
  const double spp = ((120.0 * u - 180.0) * u + 60.0) * u;
  const double sint = ((u - 3.0) * u + 2.5) * u * u * u * u;

  const double da = k.amp[i + 1] - k.amp[i];
  const double amp = k.amp[i] + da * s;
  const double ampd = da * sp / dk;
  const double ampdd = da * spp / (dk * dk);

  const double dw = k.omega[i + 1] - k.omega[i];
  const double w = k.omega[i] + dw * s;
  const double wd = dw * sp / dk;
  const double phi = 2.0 * kPi * static_cast<double>(i) +
                     dk * (k.omega[i] * u + dw * sint);

  const double sn = std::sin(phi);
  const double cs = std::cos(phi);
  off = amp * sn;
  vel = ampd * sn + amp * w * cs;
  acc = ampdd * sn + 2.0 * ampd * w * cs + amp * wd * cs - amp * w * w * sn;
}

}  // namespace detail

inline std::vector<TruthSample> generate_truth(const TrajectorySpec& spec, double dt) {
  spec.validate();
  if (!(dt > 0.0)) throw ValidationError("truth sample interval must be > 0");
  const double steps = spec.duration / dt;
  const long n_steps = std::llround(steps);
  if (n_steps < 1 || std::abs(steps - static_cast<double>(n_steps)) > 1e-6) {
    throw ValidationError("sample interval must divide the trajectory duration");
  }

  const bool periodic = spec.kind == TrajectoryKind::kPts;
  detail::PtsKnots knots;
  if (periodic) knots = detail::build_pts_knots(spec);
  const bool altitude =
      periodic && spec.platform == Platform::kQuadrotor && spec.altitude_amplitude > 0.0;

  const double ch = std::cos(spec.heading);
  const double sh = std::sin(spec.heading);
  std::vector<TruthSample> out(static_cast<std::size_t>(n_steps) + 1);
  for (long i = 0; i <= n_steps; ++i) {
    const double t = static_cast<double>(i) * dt;
    double off = 0.0, lvel = 0.0, lacc = 0.0;
    if (periodic) detail::pts_lateral(knots, t, off, lvel, lacc);

    double z = 0.0, zd = 0.0, zdd = 0.0;
    if (altitude) {
      const double wz = 2.0 * kPi / spec.altitude_period;
      z = -spec.altitude_amplitude * std::sin(wz * t);
      zd = -spec.altitude_amplitude * wz * std::cos(wz * t);
      zdd = spec.altitude_amplitude * wz * wz * std::sin(wz * t);
    }

    TruthSample& s = out[static_cast<std::size_t>(i)];
    s.t = t;
    s.p = Vec3(ch * spec.speed * t - sh * off, sh * spec.speed * t + ch * off, z);
    s.v = Vec3(ch * spec.speed - sh * lvel, sh * spec.speed + ch * lvel, zd);
    s.a = Vec3(-sh * lacc, ch * lacc, zdd);
    const double ground_speed = std::hypot(s.v.x(), s.v.y());
    const double psi =
        ground_speed < 1e-12 ? spec.heading : std::atan2(s.v.y(), s.v.x());
    s.att = Attitude::from_yaw(psi);
  }
  return out;
}

// Recovers the IMU stream that reproduces `truth` under mechanization.
// Sample k (k >= 1) carries the average rates over (t_{k-1}, t_k]: the body
// rate inverts the first-order attitude update exactly, and the specific
// force maps the mean nav acceleration through the midpoint attitude.
// Sample 0 carries instantaneous values and is never integrated.
inline std::vector<ImuSample> inverse_imu(const std::vector<TruthSample>& truth) {
  if (truth.empty()) throw ValidationError("cannot invert an empty truth sequence");
  std::vector<ImuSample> out(truth.size());
  for (std::size_t k = 1; k < truth.size(); ++k) {
    const double dt = truth[k].t - truth[k - 1].t;
    if (!(dt > 0.0)) throw ValidationError("truth timestamps must be increasing");
    Quat dq = truth[k - 1].att.quat().conjugate() * truth[k].att.quat();
    if (dq.w() < 0.0) dq.coeffs() = -dq.coeffs();
    const Vec3 w_b = (2.0 / dt) * dq.vec() / dq.w();

    const Quat q_mid = truth[k - 1].att.quat().slerp(0.5, truth[k].att.quat());
    const Vec3 a_n = (truth[k].v - truth[k - 1].v) / dt;
    out[k].t = truth[k].t;
    out[k].f_b = q_mid.toRotationMatrix().transpose() * (a_n - gravity_ned());
    out[k].w_b = w_b;
  }
  out[0].t = truth[0].t;
  out[0].f_b = truth[0].att.dcm().transpose() * (truth[0].a - gravity_ned());
  out[0].w_b = truth.size() > 1 ? out[1].w_b : Vec3::Zero();
  return out;
}

// Sensor error model in SI units: white noise (density per sqrt(Hz)),
// bias random walk (density per sqrt(s)), and a constant turn-on bias
// drawn once per run.
struct SensorErrorSpec {
  double accel_noise_density = 0.0;
  double accel_bias_rw = 0.0;
  double accel_turnon_sigma = 0.0;
  double gyro_noise_density = 0.0;
  double gyro_bias_rw = 0.0;
  double gyro_turnon_sigma = 0.0;
  double rate = 120.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (accel_noise_density < 0.0 || accel_bias_rw < 0.0 || accel_turnon_sigma < 0.0 ||
        gyro_noise_density < 0.0 || gyro_bias_rw < 0.0 || gyro_turnon_sigma < 0.0) {
      throw ValidationError("sensor error densities must be >= 0");
    }
    if (!(rate > 0.0)) throw ValidationError("sensor rate must be > 0");
  }

  // Datasheet-grade consumer IMU: accel 120 ug/sqrt(Hz) noise and 0.03 mg
  // bias instability, gyro 0.007 deg/s/sqrt(Hz) and 10 deg/h, at 120 Hz.
  // Bias instability maps to the walk density at a 1 s correlation horizon.
  static SensorErrorSpec movella(std::uint64_t seed = 0) {
    SensorErrorSpec es;
    es.accel_noise_density = 120e-6 * kGravityMps2;
    es.accel_bias_rw = 0.03e-3 * kGravityMps2;
    es.accel_turnon_sigma = 0.03;
    es.gyro_noise_density = 0.007 * kDegToRad;
    es.gyro_bias_rw = (10.0 / 3600.0) * kDegToRad;
    es.gyro_turnon_sigma = 1e-3;
    es.rate = 120.0;
    es.seed = seed;
    return es;
  }

};

// Draw order is fixed and part of the seed contract: turn-on biases
// (accel, gyro), then per sample the walk increments (accel, gyro) and the
// white noise (accel, gyro).  Sample 0 receives no walk increment.
inline std::vector<ImuSample> corrupt(const std::vector<ImuSample>& ideal,
                                      const SensorErrorSpec& es) {
  es.validate();
  if (es.accel_noise_density == 0.0 && es.accel_bias_rw == 0.0 &&
      es.accel_turnon_sigma == 0.0 && es.gyro_noise_density == 0.0 &&
      es.gyro_bias_rw == 0.0 && es.gyro_turnon_sigma == 0.0) {
    return ideal;
  }
  Rng rng(es.seed);
  const Vec3 ba = es.accel_turnon_sigma * rng.gaussian_vec3();
  const Vec3 bg = es.gyro_turnon_sigma * rng.gaussian_vec3();
  const double dt = 1.0 / es.rate;
  const double white_a = es.accel_noise_density / std::sqrt(dt);
  const double white_g = es.gyro_noise_density / std::sqrt(dt);
  const double walk_a = es.accel_bias_rw * std::sqrt(dt);
  const double walk_g = es.gyro_bias_rw * std::sqrt(dt);

  std::vector<ImuSample> out(ideal.size());
  Vec3 wa = Vec3::Zero();
  Vec3 wg = Vec3::Zero();
  for (std::size_t k = 0; k < ideal.size(); ++k) {
    if (k > 0) {
      wa += walk_a * rng.gaussian_vec3();
      wg += walk_g * rng.gaussian_vec3();
    }
    out[k].t = ideal[k].t;
    out[k].f_b = ideal[k].f_b + ba + wa + white_a * rng.gaussian_vec3();
    out[k].w_b = ideal[k].w_b + bg + wg + white_g * rng.gaussian_vec3();
  }
  return out;
}

struct PositionFix {
  double t = 0.0;
  Vec3 p = Vec3::Zero();
  double sigma = 0.0;
};

struct GnssSpec {
  double rate = 1.0;
  double sigma = 1.0;
  std::vector<std::pair<double, double>> outages;
  std::uint64_t seed = 0;

  void validate(double duration) const {
    if (!(rate > 0.0)) throw ValidationError("fix rate must be > 0");
    if (sigma < 0.0) throw ValidationError("fix sigma must be >= 0");
    for (const auto& [start, end] : outages) {
      if (!(start < end)) throw ValidationError("outage interval must have start < end");
      if (start < 0.0 || end > duration) {
        throw ValidationError("outage interval must lie within the trajectory");
      }
    }
  }
};

// Fixes at t = k / rate for k = 1..floor(duration * rate), with per-axis
// Gaussian noise.  Outage intervals suppress fixes on the half-open span
// [start, end).  Noise is drawn for every nominal fix time, so the
// surviving fixes are identical with and without outages at a given seed.
inline std::vector<PositionFix> gnss_fixes(const std::vector<TruthSample>& truth,
                                           const GnssSpec& gs) {
  if (truth.size() < 2) {
    throw ValidationError("need at least two truth samples to place fixes");
  }
  const double duration = truth.back().t;
  gs.validate(duration);
  const double dt = truth[1].t - truth[0].t;
  Rng rng(gs.seed);
  std::vector<PositionFix> out;
  const long n_fix = static_cast<long>(std::floor(duration * gs.rate + 1e-9));
  for (long k = 1; k <= n_fix; ++k) {
    const double t = static_cast<double>(k) / gs.rate;
    const Vec3 noise = gs.sigma * rng.gaussian_vec3();
    bool suppressed = false;
    for (const auto& [start, end] : gs.outages) {
      if (t >= start && t < end) {
        suppressed = true;
        break;
      }
    }
    if (suppressed) continue;
    const auto idx = static_cast<std::size_t>(std::llround(t / dt));
    if (idx >= truth.size() || std::abs(truth[idx].t - t) > 0.5 * dt) {
      throw ValidationError("fix time does not align with the truth sampling");
    }
    out.push_back({t, truth[idx].p + noise, gs.sigma});
  }
  return out;
}

}  // namespace ptnav
