#pragma once

// Rigid-body rotational dynamics with a three-wheel reaction wheel model.
//
// Body angular acceleration follows the torque balance
//   omega_dot = I^-1 (M - omega x (I omega + I_rw * rw_speed))
// with diagonal inertia I. The wheel momentum term reduces this to the plain
// gyroscopic form at zero wheel speed and can be disabled via
// SatelliteParams::wheel_gyro_coupling.
//
// All quantities are SI: rad/s, N*m, kg*m^2. rpm appears only at I/O
// boundaries (see rpm_to_rad_s).

#include <cmath>
#include <stdexcept>
#include <string>

#include "satrl/errors.hpp"
#include "satrl/math.hpp"

namespace satrl {

struct SatelliteParams {
  Vec3 inertia_diag{0.19, 0.23, 0.17};          // kg*m^2, principal axes
  double rw_inertia = 1.82e-5;                  // kg*m^2 per wheel
  double max_rw_torque = 0.004;                 // N*m
  double rw_saturation_speed = rpm_to_rad_s(7000.0);  // rad/s
  bool wheel_gyro_coupling = true;

  // Commanded torque is limited to half the wheel's maximum.
  double command_torque_limit() const { return 0.5 * max_rw_torque; }

  void validate() const {
    if (!(inertia_diag.x > 0.0 && inertia_diag.y > 0.0 && inertia_diag.z > 0.0)) {
      throw ConfigError("satellite params: inertia entries must be > 0");
    }
    if (!(rw_inertia > 0.0)) {
      throw ConfigError("satellite params: rw_inertia must be > 0");
    }
    if (!(max_rw_torque > 0.0)) {
      throw ConfigError("satellite params: max_rw_torque must be > 0");
    }
    if (!(rw_saturation_speed > 0.0)) {
      throw ConfigError("satellite params: rw_saturation_speed must be > 0");
    }
  }
};

struct SatelliteState {
  Quaternion attitude = Quaternion::identity();
  Vec3 omega{};     // body rates, rad/s
  Vec3 rw_speed{};  // wheel speeds, rad/s, one wheel per principal axis
};

enum class FailureMode { Nominal, FailedX, FailedY, FailedZ };

inline int failed_axis_index(FailureMode mode) {
  switch (mode) {
    case FailureMode::FailedX: return 0;
    case FailureMode::FailedY: return 1;
    case FailureMode::FailedZ: return 2;
    default: return -1;
  }
}

struct TorqueCommand {
  Vec3 tau{};  // body-frame torque via the wheels, N*m
};

// omega_dot = I^-1 (M - omega x I omega), diagonal I.
inline Vec3 euler_dynamics(const SatelliteParams& params, const Vec3& omega,
                           const Vec3& torque) {
  const Vec3& I = params.inertia_diag;
  const Vec3 h{I.x * omega.x, I.y * omega.y, I.z * omega.z};
  const Vec3 rhs = torque - omega.cross(h);
  return {rhs.x / I.x, rhs.y / I.y, rhs.z / I.z};
}

// As above but with the spinning wheel momentum folded into the gyro term.
inline Vec3 body_angular_accel(const SatelliteParams& params, const Vec3& omega,
                               const Vec3& rw_speed, const Vec3& torque) {
  const Vec3& I = params.inertia_diag;
  Vec3 h{I.x * omega.x, I.y * omega.y, I.z * omega.z};
  if (params.wheel_gyro_coupling) {
    h = h + params.rw_inertia * rw_speed;
  }
  const Vec3 rhs = torque - omega.cross(h);
  return {rhs.x / I.x, rhs.y / I.y, rhs.z / I.z};
}

inline TorqueCommand clamp_torque(const Vec3& raw, double limit = 0.002) {
  if (!raw.finite()) {
    throw std::invalid_argument("clamp_torque: non-finite torque");
  }
  return TorqueCommand{{std::clamp(raw.x, -limit, limit),
                        std::clamp(raw.y, -limit, limit),
                        std::clamp(raw.z, -limit, limit)}};
}

inline TorqueCommand apply_failure(const TorqueCommand& cmd, FailureMode mode) {
  TorqueCommand out = cmd;
  const int axis = failed_axis_index(mode);
  if (axis >= 0) {
    out.tau[axis] = 0.0;
  }
  return out;
}

// Zero the torque on any axis whose wheel sits at the saturation limit and
// whose reaction would push the speed further past it. A positive body torque
// decelerates the wheel (reaction), so a wheel pinned at +saturation blocks
// negative body torques on that axis.
inline Vec3 effective_wheel_torque(const TorqueCommand& cmd,
                                   const SatelliteState& state,
                                   const SatelliteParams& params) {
  Vec3 out = cmd.tau;
  const double sat = params.rw_saturation_speed;
  for (int i = 0; i < 3; ++i) {
    const double wheel_accel = -out[i] / params.rw_inertia;
    if ((state.rw_speed[i] >= sat && wheel_accel > 0.0) ||
        (state.rw_speed[i] <= -sat && wheel_accel < 0.0)) {
      out[i] = 0.0;
    }
  }
  return out;
}

// Per-axis body momentum I*omega + I_rw*rw_speed (wheel axes = principal axes).
inline Vec3 total_angular_momentum(const SatelliteState& state,
                                   const SatelliteParams& params) {
  const Vec3& I = params.inertia_diag;
  return {I.x * state.omega.x + params.rw_inertia * state.rw_speed.x,
          I.y * state.omega.y + params.rw_inertia * state.rw_speed.y,
          I.z * state.omega.z + params.rw_inertia * state.rw_speed.z};
}

// Joint Euler integration of body rates, attitude, and wheel speeds over
// `substeps` equal sub-intervals. Failure injection and saturation gating are
// re-evaluated every substep so a wheel hitting the limit mid-step stops
// producing torque for the remainder.
inline SatelliteState step_dynamics(const SatelliteState& state,
                                    const TorqueCommand& cmd, double dt,
                                    const SatelliteParams& params,
                                    FailureMode mode, int substeps) {
  if (!(dt > 0.0) || substeps < 1) {
    throw std::invalid_argument("step_dynamics: dt > 0 and substeps >= 1 required");
  }
  const TorqueCommand failed = apply_failure(cmd, mode);
  const double h = dt / static_cast<double>(substeps);
  const double sat = params.rw_saturation_speed;

  SatelliteState s = state;
  for (int k = 0; k < substeps; ++k) {
    const Vec3 tau = effective_wheel_torque(failed, s, params);
    const Vec3 omega_dot = body_angular_accel(params, s.omega, s.rw_speed, tau);
    const Vec3 omega_next = s.omega + h * omega_dot;
    // Midpoint rate for the attitude update cancels the leading first-order
    // error under applied torque while staying a single Euler evaluation.
    s.attitude =
        propagate_quaternion(s.attitude, 0.5 * (s.omega + omega_next), h);
    s.omega = omega_next;
    for (int i = 0; i < 3; ++i) {
      const double next = s.rw_speed[i] + h * (-tau[i] / params.rw_inertia);
      s.rw_speed[i] = std::clamp(next, -sat, sat);
    }
  }
  if (!s.omega.finite() || !s.rw_speed.finite() ||
      !std::isfinite(s.attitude.norm())) {
    throw NumericalError("step_dynamics: non-finite state");
  }
  return s;
}

}  // namespace satrl
