#pragma once

// 15-state error-state Kalman filter for the strapdown mechanization.
//
// Error state ordering: [dp (0..2), dv (3..5), eps (6..8), db_a (9..11),
// db_g (12..14)].  Error conventions:
//   - dp, dv: estimate minus truth.
//   - eps: small nav-frame misalignment, T_est = (I + skew(eps)) * T_true.
//   - db_a, db_g: truth minus current bias estimate, so corrected IMU input
//     equals measured minus estimated bias.
// Position measurements enter as residual = predicted position - measurement,
// which equals dp to first order, so H = [I3 0 0 0 0] for both fix sources.
// The filter runs closed-loop: every update is followed by injection of the
// estimated error into the whole state and a reset of dx to zero.

#include <cmath>
#include <cstdint>

#include "ptnav/core.hpp"
#include "ptnav/strapdown.hpp"

namespace ptnav {

using Vec15 = Eigen::Matrix<double, 15, 1>;
using Mat15 = Eigen::Matrix<double, 15, 15>;
using Mat15x12 = Eigen::Matrix<double, 15, 12>;
using Mat3x15 = Eigen::Matrix<double, 3, 15>;

inline constexpr int kIdxPos = 0;
inline constexpr int kIdxVel = 3;
inline constexpr int kIdxAtt = 6;
inline constexpr int kIdxBa = 9;
inline constexpr int kIdxBg = 12;

// Continuous-time white noise densities driving the error dynamics.  The
// noise densities are in unit/sqrt(Hz); the bias random walks are the rate
// at which each bias wanders per sqrt(s).
struct NoiseConfig {
  double accel_noise_density = 0.0;  // m/s^2/sqrt(Hz)
  double gyro_noise_density = 0.0;   // rad/s/sqrt(Hz)
  double accel_bias_rw = 0.0;        // m/s^2/sqrt(s)
  double gyro_bias_rw = 0.0;         // rad/s/sqrt(s)
};

struct ErrorStateBelief {
  Vec15 dx = Vec15::Zero();
  Mat15 P = Mat15::Zero();
};

struct BiasEstimate {
  Vec3 accel = Vec3::Zero();  // m/s^2
  Vec3 gyro = Vec3::Zero();   // rad/s
};

enum class FixSource { kGnss, kMqn };

inline const char* to_string(FixSource s) {
  return s == FixSource::kGnss ? "GNSS" : "MQN";
}

// Linear measurement z = H dx + noise with covariance R.
struct MeasurementModel {
  Mat3x15 H = Mat3x15::Zero();
  Mat3 R = Mat3::Identity();
  FixSource source = FixSource::kGnss;
};

inline MeasurementModel position_measurement_model(const Mat3& R, FixSource source) {
  MeasurementModel m;
  m.H.block<3, 3>(0, kIdxPos) = Mat3::Identity();
  m.R = R;
  m.source = source;
  return m;
}

// Continuous error dynamics dx_dot = F dx + G w, linearized at the current
// state and bias-corrected specific force.  Flat-earth terms only: position
// couples to velocity, velocity to misalignment (through the rotated specific
// force) and to the accelerometer bias, misalignment to the gyro bias.
inline Mat15 system_matrix(const NavState& s, const Vec3& f_b) {
  const Mat3 t = s.att.dcm();
  Mat15 f = Mat15::Zero();
  f.block<3, 3>(kIdxPos, kIdxVel) = Mat3::Identity();
  f.block<3, 3>(kIdxVel, kIdxAtt) = -skew(t * f_b);
  f.block<3, 3>(kIdxVel, kIdxBa) = t;
  f.block<3, 3>(kIdxAtt, kIdxBg) = t;
  return f;
}

// Noise shaping: accel white noise enters velocity through the body-to-nav
// rotation, gyro white noise enters misalignment the same way, and the bias
// random walks drive the bias states directly.
inline Mat15x12 shaping_matrix(const NavState& s) {
  const Mat3 t = s.att.dcm();
  Mat15x12 g = Mat15x12::Zero();
  g.block<3, 3>(kIdxVel, 0) = t;
  g.block<3, 3>(kIdxAtt, 3) = t;
  g.block<3, 3>(kIdxBa, 6) = Mat3::Identity();
  g.block<3, 3>(kIdxBg, 9) = Mat3::Identity();
  return g;
}

// First-order discretization Qd = G W G' * t_s.
inline Mat15 discretize_noise(const NoiseConfig& nc, const Mat15x12& g, double t_s) {
  if (!(t_s > 0.0)) throw ValidationError("non-positive noise discretization step");
  Eigen::Matrix<double, 12, 12> w = Eigen::Matrix<double, 12, 12>::Zero();
  w.block<3, 3>(0, 0) = Mat3::Identity() * (nc.accel_noise_density * nc.accel_noise_density);
  w.block<3, 3>(3, 3) = Mat3::Identity() * (nc.gyro_noise_density * nc.gyro_noise_density);
  w.block<3, 3>(6, 6) = Mat3::Identity() * (nc.accel_bias_rw * nc.accel_bias_rw);
  w.block<3, 3>(9, 9) = Mat3::Identity() * (nc.gyro_bias_rw * nc.gyro_bias_rw);
  return g * w * g.transpose() * t_s;
}

// Covariance propagation with the first-order transition Phi = I + F t_s.
inline ErrorStateBelief predict(const ErrorStateBelief& belief, const Mat15& f,
                                const Mat15& qd, double t_s) {
  if (!(t_s > 0.0)) throw ValidationError("non-positive prediction step");
  const Mat15 phi = Mat15::Identity() + f * t_s;
  ErrorStateBelief out;
  out.dx = phi * belief.dx;
  out.P = phi * belief.P * phi.transpose() + qd;
  out.P = 0.5 * (out.P + out.P.transpose()).eval();
  return out;
}

struct UpdateResult {
  ErrorStateBelief belief;
  bool rejected = false;   // innovation covariance unusable; belief unchanged
  Vec3 innovation = Vec3::Zero();
  Vec3 innovation_sigma = Vec3::Zero();  // sqrt(diag(S))
};

// Measurement update.  A residual whose innovation covariance is singular or
// numerically unusable (condition number >= 1e12) is rejected in-band rather
// than corrupting the belief.
inline UpdateResult update(const ErrorStateBelief& belief, const MeasurementModel& m,
                           const Vec3& residual) {
  UpdateResult out;
  out.belief = belief;
  if (!finite(residual)) throw ValidationError("non-finite measurement residual");

  const Mat3 s = m.H * belief.P * m.H.transpose() + m.R;
  Eigen::SelfAdjointEigenSolver<Mat3> eig(s);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || !(hi / lo < 1e12)) {
    out.rejected = true;
    out.innovation = residual - m.H * belief.dx;
    return out;
  }

  const Vec3 dy = residual - m.H * belief.dx;
  const Eigen::Matrix<double, 15, 3> k =
      belief.P * m.H.transpose() * s.inverse();
  out.belief.dx = belief.dx + k * dy;
  out.belief.P = (Mat15::Identity() - k * m.H) * belief.P;
  out.belief.P = 0.5 * (out.belief.P + out.belief.P.transpose()).eval();
  out.innovation = dy;
  out.innovation_sigma = s.diagonal().cwiseSqrt();
  return out;
}

struct InjectResult {
  NavState state;
  BiasEstimate bias;
  ErrorStateBelief belief;           // dx reset to zero, P carried through
  bool large_misalignment = false;   // |eps| exceeded the small-angle regime
};

// Folds the estimated error into the full state and resets dx.  Position and
// velocity subtract their errors (error = estimate - truth); the attitude is
// corrected by a nav-frame rotation of -eps; biases accumulate db.
inline InjectResult inject_and_reset(const NavState& s, const BiasEstimate& bias,
                                     const ErrorStateBelief& belief) {
  const Vec3 dp = belief.dx.segment<3>(kIdxPos);
  const Vec3 dv = belief.dx.segment<3>(kIdxVel);
  const Vec3 eps = belief.dx.segment<3>(kIdxAtt);

  InjectResult out;
  out.state = s;
  out.state.p = s.p - dp;
  out.state.v = s.v - dv;
  out.state.att = Attitude::from_rotation_vector(-eps) * s.att;
  out.bias.accel = bias.accel + belief.dx.segment<3>(kIdxBa);
  out.bias.gyro = bias.gyro + belief.dx.segment<3>(kIdxBg);
  out.belief = belief;
  out.belief.dx.setZero();
  out.large_misalignment = eps.norm() > 0.5;
  return out;
}

// Default initial covariance: 1 m position, 0.1 m/s velocity, 1 deg
// misalignment, 0.05 m/s^2 accel bias, 0.01 rad/s gyro bias (1-sigma each).
inline Mat15 default_initial_covariance() {
  Mat15 p = Mat15::Zero();
  p.block<3, 3>(kIdxPos, kIdxPos) = Mat3::Identity() * 1.0;
  p.block<3, 3>(kIdxVel, kIdxVel) = Mat3::Identity() * (0.1 * 0.1);
  p.block<3, 3>(kIdxAtt, kIdxAtt) = Mat3::Identity() * std::pow(1.0 * kDegToRad, 2);
  p.block<3, 3>(kIdxBa, kIdxBa) = Mat3::Identity() * (0.05 * 0.05);
  p.block<3, 3>(kIdxBg, kIdxBg) = Mat3::Identity() * (0.01 * 0.01);
  return p;
}

// Closed-loop filter: owns the nav state, bias estimates and error belief.
// propagate() applies bias-corrected mechanization plus covariance
// prediction; update() applies the measurement, injects and resets.
class Eskf {
 public:
  Eskf(const NavState& init, const Mat15& p0, const NoiseConfig& nc)
      : state_(init), noise_(nc) {
    belief_.P = p0;
  }

  const NavState& state() const { return state_; }
  const BiasEstimate& bias() const { return bias_; }
  const ErrorStateBelief& belief() const { return belief_; }

  // One IMU interval ending at raw.t.  The raw sample is corrected with the
  // current bias estimates; the linearization uses the pre-step state.
  void propagate(const ImuSample& raw, double dt) {
    ImuSample corrected = raw;
    corrected.f_b -= bias_.accel;
    corrected.w_b -= bias_.gyro;
    const Mat15 f = system_matrix(state_, corrected.f_b);
    const Mat15 qd = discretize_noise(noise_, shaping_matrix(state_), dt);
    state_ = strapdown_step(state_, corrected, dt);
    belief_ = predict(belief_, f, qd, dt);
  }

  // Applies one position measurement (residual = state position - z),
  // injects the estimated error and resets dx.  Returns the update record;
  // `rejected` means the belief and state were left untouched.
  UpdateResult update_position(const MeasurementModel& m, const Vec3& z) {
    const Vec3 residual = state_.p - z;
    UpdateResult r = update(belief_, m, residual);
    if (r.rejected) return r;
    const InjectResult inj = inject_and_reset(state_, bias_, r.belief);
    state_ = inj.state;
    bias_ = inj.bias;
    belief_ = inj.belief;
    large_misalignment_ = large_misalignment_ || inj.large_misalignment;
    return r;
  }

  bool saw_large_misalignment() const { return large_misalignment_; }

 private:
  NavState state_;
  BiasEstimate bias_;
  ErrorStateBelief belief_;
  NoiseConfig noise_;
  bool large_misalignment_ = false;
};

}  // namespace ptnav
