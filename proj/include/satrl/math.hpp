#pragma once

// Quaternion algebra and first-order attitude kinematics.
//
// Conventions:
//   - Quaternion layout is (scalar, x, y, z); identity is (1, 0, 0, 0).
//   - rotate_vector applies the active rotation q * (0,v) * conj(q).
//   - Kinematics follow q_dot = 1/2 * Omega(omega) * q with body rates omega,
//     Omega skew-symmetric with first row (0, -wx, -wy, -wz).

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "satrl/errors.hpp"

namespace satrl {

inline constexpr double kPi = 3.14159265358979323846;

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double k) const { return {x * k, y * k, z * k}; }
  Vec3 operator/(double k) const { return {x / k, y / k, z / k}; }
  Vec3 operator-() const { return {-x, -y, -z}; }

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
  }
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
};

inline Vec3 operator*(double k, const Vec3& v) { return v * k; }

struct AxisAngle {
  Vec3 axis;     // unit vector
  double theta;  // radians, [0, pi] in canonical form
};

struct Quaternion {
  double s = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  static Quaternion identity() { return {1.0, 0.0, 0.0, 0.0}; }

  double norm() const { return std::sqrt(s * s + x * x + y * y + z * z); }

  Quaternion normalized() const {
    const double n = norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw NumericalError("quaternion normalization: degenerate norm");
    }
    return {s / n, x / n, y / n, z / n};
  }

  Quaternion conjugate() const { return {s, -x, -y, -z}; }

  std::array<double, 4> to_array() const { return {s, x, y, z}; }
};

inline double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

inline Quaternion quat_from_axis_angle(const AxisAngle& aa) {
  if (std::abs(aa.axis.norm() - 1.0) > 1e-9) {
    throw std::invalid_argument("quat_from_axis_angle: axis is not unit-norm");
  }
  const double h = 0.5 * aa.theta;
  const double sh = std::sin(h);
  return Quaternion{std::cos(h), aa.axis.x * sh, aa.axis.y * sh, aa.axis.z * sh}
      .normalized();
}

// Canonical extraction: theta in [0, pi]; axis arbitrary unit at theta == 0.
inline AxisAngle axis_angle_from_quat(const Quaternion& q_in) {
  Quaternion q = q_in.s < 0.0 ? Quaternion{-q_in.s, -q_in.x, -q_in.y, -q_in.z}
                              : q_in;
  const double vn = std::sqrt(q.x * q.x + q.y * q.y + q.z * q.z);
  const double theta = 2.0 * std::atan2(vn, q.s);
  if (vn < 1e-12) {
    return {Vec3{0.0, 0.0, 1.0}, 0.0};
  }
  return {Vec3{q.x / vn, q.y / vn, q.z / vn}, theta};
}

// Hamilton product, renormalized. Represents rotation b followed by a.
inline Quaternion quat_multiply(const Quaternion& a, const Quaternion& b) {
  Quaternion r;
  r.s = a.s * b.s - a.x * b.x - a.y * b.y - a.z * b.z;
  r.x = a.s * b.x + a.x * b.s + a.y * b.z - a.z * b.y;
  r.y = a.s * b.y - a.x * b.z + a.y * b.s + a.z * b.x;
  r.z = a.s * b.z + a.x * b.y - a.y * b.x + a.z * b.s;
  return r.normalized();
}

inline Quaternion quat_conjugate(const Quaternion& q) { return q.conjugate(); }

// Rotation taking q_current to q_target, scalar part canonicalized >= 0.
inline Quaternion quat_error(const Quaternion& q_current,
                             const Quaternion& q_target) {
  Quaternion e = quat_multiply(q_target, q_current.conjugate());
  if (e.s < 0.0) {
    e = {-e.s, -e.x, -e.y, -e.z};
  }
  return e;
}

// Rotation angle between a and b, double-cover invariant, in [0, pi].
// Computed as 2*atan2(|vec(e)|, |scalar(e)|) with e = a * conj(b), which is
// well conditioned near zero where 2*acos(|<a,b>|) loses precision.
inline double angular_distance(const Quaternion& a, const Quaternion& b) {
  // Each pair is antisymmetric in (a, b), so the vector part cancels
  // exactly (not just approximately) when b = +-a.
  const double es = a.s * b.s + a.x * b.x + a.y * b.y + a.z * b.z;
  const double ex = (a.x * b.s - a.s * b.x) + (a.z * b.y - a.y * b.z);
  const double ey = (a.y * b.s - a.s * b.y) + (a.x * b.z - a.z * b.x);
  const double ez = (a.z * b.s - a.s * b.z) + (a.y * b.x - a.x * b.y);
  const double vn = std::sqrt(ex * ex + ey * ey + ez * ez);
  return 2.0 * std::atan2(vn, std::abs(es));
}

inline Vec3 rotate_vector(const Quaternion& q, const Vec3& v) {
  // q * (0,v) * conj(q), expanded: v + 2*s*(u x v) + 2*(u x (u x v))
  const Vec3 u{q.x, q.y, q.z};
  const Vec3 t = 2.0 * u.cross(v);
  return v + q.s * t + u.cross(t);
}

// Angle between the rotated body axis and a target direction, in [0, pi].
inline double axis_alignment_angle(const Quaternion& q, const Vec3& body_axis,
                                   const Vec3& target_dir) {
  if (std::abs(body_axis.norm() - 1.0) > 1e-9 ||
      std::abs(target_dir.norm() - 1.0) > 1e-9) {
    throw std::invalid_argument("axis_alignment_angle: inputs must be unit-norm");
  }
  const Vec3 pointed = rotate_vector(q, body_axis);
  return std::acos(clamp_unit(pointed.dot(target_dir)));
}

// 4x4 kinematic matrix: q_dot = 1/2 * Omega * q on (s, x, y, z).
struct OmegaMatrix {
  std::array<std::array<double, 4>, 4> m{};
};

inline OmegaMatrix omega_matrix(const Vec3& w) {
  if (!w.finite()) {
    throw std::invalid_argument("omega_matrix: non-finite rates");
  }
  OmegaMatrix o;
  o.m = {{{0.0, -w.x, -w.y, -w.z},
          {w.x, 0.0, w.z, -w.y},
          {w.y, -w.z, 0.0, w.x},
          {w.z, w.y, -w.x, 0.0}}};
  return o;
}

// First-order update q <- [I + 1/2 Omega dt] q, then renormalize.
inline Quaternion propagate_quaternion(const Quaternion& q, const Vec3& omega,
                                       double dt) {
  if (!(dt > 0.0)) {
    throw std::invalid_argument("propagate_quaternion: dt must be > 0");
  }
  const OmegaMatrix o = omega_matrix(omega);
  const std::array<double, 4> qa = q.to_array();
  std::array<double, 4> out{};
  for (int i = 0; i < 4; ++i) {
    double acc = qa[i];
    for (int j = 0; j < 4; ++j) {
      acc += 0.5 * dt * o.m[i][j] * qa[j];
    }
    out[i] = acc;
  }
  return Quaternion{out[0], out[1], out[2], out[3]}.normalized();
}

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }
inline double rpm_to_rad_s(double rpm) { return rpm * 2.0 * kPi / 60.0; }
inline double rad_s_to_rpm(double rad_s) { return rad_s * 60.0 / (2.0 * kPi); }

}  // namespace satrl
