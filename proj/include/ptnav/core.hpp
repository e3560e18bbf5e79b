#pragma once

// Core navigation math: frames, attitude, angle helpers, error types.
//
// Conventions used across the library:
//   - Navigation frame is NED (x north, y east, z down), flat earth.
//   - Gravity is +9.80665 m/s^2 along +z (down).
//   - Attitude is the body-to-nav rotation, stored as a unit quaternion.
//   - Yaw is the ZYX Euler heading, wrapped to (-pi, pi].

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace ptnav {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kGravityMps2 = 9.80665;
inline constexpr double kDegToRad = kPi / 180.0;
inline constexpr double kRadToDeg = 180.0 / kPi;

inline Vec3 gravity_ned() { return Vec3(0.0, 0.0, kGravityMps2); }

// Input that violates a documented precondition (bad config, malformed file
// contents, non-finite values).  CLI maps this to exit code 2.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A numerical process left its stability envelope (filter blow-up,
// non-finite training loss).  CLI maps this to exit code 3.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem-level failure: missing file, unwritable path, bad magic.
// CLI maps this to exit code 4.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline bool finite(double x) { return std::isfinite(x); }

inline bool finite(const Vec3& v) {
  return std::isfinite(v.x()) && std::isfinite(v.y()) && std::isfinite(v.z());
}

// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

// Skew-symmetric cross-product matrix: skew(a) * b == a x b.
inline Mat3 skew(const Vec3& a) {
  Mat3 m;
  m << 0.0, -a.z(), a.y(),
      a.z(), 0.0, -a.x(),
      -a.y(), a.x(), 0.0;
  return m;
}

// Body-to-nav attitude as a unit quaternion.  The quaternion is renormalized
// on construction; all factory functions produce unit quaternions.
class Attitude {
 public:
  Attitude() : q_(Quat::Identity()) {}

  explicit Attitude(const Quat& q) : q_(q) {
    const double n = q_.norm();
    if (!std::isfinite(n) || n <= 0.0) {
      throw ValidationError("attitude quaternion is not normalizable");
    }
    q_.coeffs() /= n;
  }

  static Attitude identity() { return Attitude(); }

  static Attitude from_yaw(double psi) {
    return Attitude(Quat(Eigen::AngleAxisd(psi, Vec3::UnitZ())));
  }

  // ZYX convention: yaw about z, then pitch about y, then roll about x.
  static Attitude from_euler(double roll, double pitch, double yaw) {
    const Quat q = Eigen::AngleAxisd(yaw, Vec3::UnitZ()) *
                   Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
                   Eigen::AngleAxisd(roll, Vec3::UnitX());
    return Attitude(q);
  }

  // Exact exponential map of a rotation vector (axis * angle, radians).
  static Attitude from_rotation_vector(const Vec3& phi) {
    if (!finite(phi)) throw ValidationError("non-finite rotation vector");
    const double angle = phi.norm();
    if (angle < 1e-12) {
      Quat q(1.0, 0.5 * phi.x(), 0.5 * phi.y(), 0.5 * phi.z());
      return Attitude(q);
    }
    return Attitude(Quat(Eigen::AngleAxisd(angle, phi / angle)));
  }

  const Quat& quat() const { return q_; }

  // Direction cosine matrix transforming body vectors into the nav frame.
  Mat3 dcm() const { return q_.toRotationMatrix(); }

  // Exact logarithmic map: rotation vector of this attitude relative to
  // identity, with angle in [0, pi].
  Vec3 rotation_vector() const {
    Eigen::AngleAxisd aa(q_);
    double angle = aa.angle();
    Vec3 axis = aa.axis();
    if (angle > kPi) {  // AngleAxis may return (pi, 2pi); fold back
      angle = 2.0 * kPi - angle;
      axis = -axis;
    }
    return angle * axis;
  }

  // Composition: (a * b).dcm() == a.dcm() * b.dcm().
  friend Attitude operator*(const Attitude& a, const Attitude& b) {
    return Attitude(a.q_ * b.q_);
  }

  Attitude inverse() const { return Attitude(q_.conjugate()); }

 private:
  Quat q_;
};

// First-order quaternion update with renormalization: the body rotates by
// w_b * dt, where w_b is the angular rate in body axes.
inline Attitude attitude_integrate(const Attitude& att, const Vec3& w_b, double dt) {
  if (!finite(w_b) || !std::isfinite(dt)) {
    throw ValidationError("non-finite input to attitude integration");
  }
  const Vec3 half = 0.5 * dt * w_b;
  const Quat dq(1.0, half.x(), half.y(), half.z());
  return Attitude(att.quat() * dq);
}

// Heading extracted from an attitude.  Near +/-90 deg pitch the ZYX
// decomposition loses a degree of freedom; `degenerate` flags that case and
// the reported yaw is then only one member of the equivalence class.
struct Heading {
  double psi = 0.0;
  bool degenerate = false;
};

inline Heading yaw_of(const Attitude& att) {
  const Mat3 t = att.dcm();
  Heading h;
  const double sin_pitch = -t(2, 0);
  h.degenerate = std::abs(sin_pitch) > 1.0 - 1e-9;
  h.psi = wrap_angle(std::atan2(t(1, 0), t(0, 0)));
  return h;
}

// Deterministic random source.  std::mt19937_64 has a pinned bit stream, but
// the standard distributions do not, so the uniform/gaussian mappings are
// spelled out here to keep seeded outputs byte-identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; the spare deviate is cached.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * kPi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * kPi * u2);
  }

  Vec3 gaussian_vec3() {
    const double a = gaussian();
    const double b = gaussian();
    const double c = gaussian();
    return Vec3(a, b, c);
  }

  // Uniform integer in [0, bound).  The modulo bias is far below anything
  // observable here and keeps the mapping trivially reproducible.
  std::uint64_t integer(std::uint64_t bound) { return eng_() % bound; }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// In-place Fisher-Yates shuffle driven by Rng (std::shuffle is not bit-stable
// across standard libraries).
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.integer(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace ptnav
