#pragma once

// Strapdown inertial mechanization on a flat-earth NED frame.
//
// A sample at time t carries the average specific force and angular rate over
// the interval ending at t.  One step rotates the specific force through the
// midpoint attitude, which keeps the propagate/invert round trip second-order
// accurate in the step size.

#include <cstddef>
#include <vector>

#include "ptnav/core.hpp"

namespace ptnav {

// One inertial sample: specific force f_b [m/s^2] and angular rate w_b
// [rad/s], both in body axes.
struct ImuSample {
  double t = 0.0;
  Vec3 f_b = Vec3::Zero();
  Vec3 w_b = Vec3::Zero();
};

struct NavState {
  double t = 0.0;
  Vec3 p = Vec3::Zero();  // NED position [m]
  Vec3 v = Vec3::Zero();  // NED velocity [m/s]
  Attitude att;           // body to nav
};

// Steps longer than this are treated as data gaps, not integration steps.
inline constexpr double kMaxImuStepS = 0.1;

inline void check_imu_step(double t_from, double t_to) {
  const double dt = t_to - t_from;
  if (!(dt > 0.0) || dt > kMaxImuStepS * (1.0 + 1e-9)) {
    throw ValidationError("IMU step from t=" + std::to_string(t_from) +
                          " to t=" + std::to_string(t_to) +
                          " is outside (0, " + std::to_string(kMaxImuStepS) + "] s");
  }
}

// Advances one state by one IMU interval of length dt ending at the sample.
inline NavState strapdown_step(const NavState& s, const ImuSample& imu, double dt) {
  check_imu_step(s.t, s.t + dt);
  if (!finite(imu.f_b) || !finite(imu.w_b)) {
    throw ValidationError("non-finite IMU sample at t=" + std::to_string(imu.t));
  }
  const Attitude att_mid = attitude_integrate(s.att, imu.w_b, 0.5 * dt);
  const Vec3 a_n = att_mid.dcm() * imu.f_b + gravity_ned();

  NavState out;
  out.t = s.t + dt;
  out.p = s.p + s.v * dt + 0.5 * dt * dt * a_n;
  out.v = s.v + a_n * dt;
  out.att = attitude_integrate(s.att, imu.w_b, dt);
  return out;
}

// Integrates a whole stream.  Output k corresponds to stream[k]; output 0 is
// the initial state echoed at the first sample's timestamp.
inline std::vector<NavState> propagate_stream(const NavState& init,
                                              const std::vector<ImuSample>& stream) {
  if (stream.empty()) throw ValidationError("empty IMU stream");
  std::vector<NavState> out;
  out.reserve(stream.size());

  NavState s = init;
  s.t = stream.front().t;
  out.push_back(s);
  for (std::size_t k = 1; k < stream.size(); ++k) {
    check_imu_step(stream[k - 1].t, stream[k].t);
    s = strapdown_step(s, stream[k], stream[k].t - stream[k - 1].t);
    out.push_back(s);
  }
  return out;
}

}  // namespace ptnav
