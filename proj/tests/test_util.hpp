#pragma once

// Shared helpers for filter tests: random state generation and the
// linearization-consistency harness comparing a perturbed strapdown step
// against the first-order transition matrix.

#include <cmath>

#include "ptnav/core.hpp"
#include "ptnav/eskf.hpp"
#include "ptnav/strapdown.hpp"

namespace ptnav::testutil {

inline NavState random_nav_state(Rng& rng) {
  NavState s;
  s.t = 0.0;
  s.p = Vec3(rng.uniform(-100, 100), rng.uniform(-100, 100), rng.uniform(-20, 20));
  s.v = Vec3(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-2, 2));
  const Vec3 axis = rng.gaussian_vec3().normalized();
  s.att = Attitude::from_rotation_vector(axis * rng.uniform(0.0, kPi * 0.9));
  return s;
}

// A specific-force sample consistent with a mildly accelerating vehicle:
// f_b = T' * (a_n - g_n) with a few m/s^2 of nav-frame acceleration.
inline ImuSample random_imu_for(const NavState& s, Rng& rng) {
  ImuSample imu;
  const Vec3 a_n = rng.gaussian_vec3() * 2.0;
  imu.f_b = s.att.dcm().transpose() * (a_n - gravity_ned());
  imu.w_b = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  return imu;
}

// Random error-state direction with every block populated.  The misalignment
// direction is redrawn until it keeps a healthy angle to the rotated specific
// force, which is what the one-step nonlinearity acts on; without that the
// quadratic term this harness measures can vanish by accident.
inline Vec15 random_error_direction(const NavState& s, const Vec3& f_b, Rng& rng) {
  Vec15 d;
  d.segment<3>(kIdxPos) = rng.gaussian_vec3().normalized() * 1.0;
  d.segment<3>(kIdxVel) = rng.gaussian_vec3().normalized() * 1.0;
  const Vec3 tf = (s.att.dcm() * f_b).normalized();
  Vec3 eps = rng.gaussian_vec3().normalized();
  while (std::abs(eps.dot(tf)) > std::cos(20.0 * kDegToRad)) {
    eps = rng.gaussian_vec3().normalized();
  }
  d.segment<3>(kIdxAtt) = eps * 2.0;
  d.segment<3>(kIdxBa) = rng.gaussian_vec3().normalized() * 1.0;
  d.segment<3>(kIdxBg) = rng.gaussian_vec3().normalized() * 2.0;
  return d;
}

// Applies the error convention: estimate = truth + error, T_est = (I +
// skew(eps)) T, and a bias error db shifts the corrected input by +db.
inline NavState apply_error(const NavState& s, const Vec15& dx) {
  NavState out = s;
  out.p = s.p + dx.segment<3>(kIdxPos);
  out.v = s.v + dx.segment<3>(kIdxVel);
  out.att = Attitude::from_rotation_vector(dx.segment<3>(kIdxAtt)) * s.att;
  return out;
}

inline Vec15 extract_error(const NavState& nominal, const NavState& perturbed,
                           const Vec15& dx_in) {
  Vec15 out;
  out.segment<3>(kIdxPos) = perturbed.p - nominal.p;
  out.segment<3>(kIdxVel) = perturbed.v - nominal.v;
  out.segment<3>(kIdxAtt) =
      (perturbed.att * nominal.att.inverse()).rotation_vector();
  out.segment<3>(kIdxBa) = dx_in.segment<3>(kIdxBa);
  out.segment<3>(kIdxBg) = dx_in.segment<3>(kIdxBg);
  return out;
}

// One-step mismatch between the true perturbed difference and Phi * dx.
inline double linearization_mismatch(const NavState& s, const ImuSample& imu,
                                     const Vec15& dx, double dt) {
  NavState nominal = s;
  ImuSample step_imu = imu;
  step_imu.t = s.t + dt;
  nominal = strapdown_step(nominal, step_imu, dt);

  NavState pert0 = apply_error(s, dx);
  ImuSample pert_imu = step_imu;
  pert_imu.f_b += dx.segment<3>(kIdxBa);
  pert_imu.w_b += dx.segment<3>(kIdxBg);
  const NavState pert1 = strapdown_step(pert0, pert_imu, dt);

  const Vec15 extracted = extract_error(nominal, pert1, dx);
  const Mat15 phi = Mat15::Identity() + system_matrix(s, imu.f_b) * dt;
  return (extracted - phi * dx).norm();
}

}  // namespace ptnav::testutil
