#pragma once

// The attitude-control MDP: observation assembly, action decoding, reward,
// curriculum initial-condition sampling, control-loop delay injection, and
// episode termination.
//
// The pointing target is fixed to the identity quaternion (full-attitude
// tasks) or the inertial axis matching the body axis to align (underactuated
// tasks); arbitrary targets are reached by a change of reference outside the
// agent.

#include <array>
#include <cstdint>
#include <string>

#include "satrl/dynamics.hpp"
#include "satrl/errors.hpp"
#include "satrl/math.hpp"
#include "satrl/rng.hpp"

namespace satrl {

enum class AlignTarget { FullAttitude, BodyAxisX, BodyAxisY, BodyAxisZ };

inline int align_axis_index(AlignTarget a) {
  switch (a) {
    case AlignTarget::BodyAxisX: return 0;
    case AlignTarget::BodyAxisY: return 1;
    case AlignTarget::BodyAxisZ: return 2;
    default: return -1;
  }
}

struct TaskSpec {
  FailureMode mode = FailureMode::Nominal;
  AlignTarget align = AlignTarget::FullAttitude;
  double threshold = 0.01;  // rad

  void validate() const {
    if (!(threshold > 0.0)) {
      throw ConfigError("task: threshold must be > 0");
    }
    const bool full = align == AlignTarget::FullAttitude;
    const bool nominal = mode == FailureMode::Nominal;
    if (full != nominal) {
      throw ConfigError(
          "task: FullAttitude requires Nominal mode and body-axis alignment "
          "requires a failed axis");
    }
  }
};

// 13-vector observation: quaternion (4), body rates rad/s (3), wheel speeds
// rad/s (3), last commanded torque N*m (3). Physical units; see
// observation_to_net_input for the scaling applied at the network boundary.
struct Observation {
  Quaternion attitude = Quaternion::identity();
  Vec3 omega{};
  Vec3 rw_speed{};
  Vec3 last_torque{};

  static constexpr int kDim = 13;

  std::array<double, kDim> to_array() const {
    return {attitude.s, attitude.x, attitude.y, attitude.z,
            omega.x,    omega.y,    omega.z,    rw_speed.x,
            rw_speed.y, rw_speed.z, last_torque.x, last_torque.y,
            last_torque.z};
  }
};

// Wheel speeds scaled by 1/saturation and torques by 1/limit so every input
// is O(1); quaternion and body rates pass through unscaled.
inline std::array<double, Observation::kDim> observation_to_net_input(
    const Observation& obs, const SatelliteParams& params) {
  auto v = obs.to_array();
  const double sat = params.rw_saturation_speed;
  const double tl = params.command_torque_limit();
  for (int i = 7; i < 10; ++i) v[i] /= sat;
  for (int i = 10; i < 13; ++i) v[i] /= tl;
  return v;
}

// Normalized action in [-1, 1]^3, decoded by scaling with the torque limit.
struct Action {
  std::array<double, 3> a{0.0, 0.0, 0.0};
};

struct RewardConfig {
  double threshold = 0.01;            // rad
  double exponent = 0.6;
  double omega_limit = 0.1;           // rad/s, per-axis
  double torque_penalty_coeff = 0.01;
  double success_reward = 1.0;
  double violation_reward = -1.0;

  void validate() const {
    if (!(exponent > 0.0) || !(omega_limit > 0.0) || torque_penalty_coeff < 0.0) {
      throw ConfigError("reward: exponent > 0, omega_limit > 0, penalty >= 0");
    }
  }
};

struct EpisodeConfig {
  int horizon = 500;                  // steps
  double control_dt = 0.5;            // s
  bool delays_enabled = false;
  double delay_min = 0.5;             // s
  double delay_max = 1.0;             // s
  double initial_angle_min_deg = 30.0;
  double initial_angle_max_deg = 180.0;
  bool curriculum_enabled = true;
  int substeps = 100;

  void validate() const {
    if (horizon <= 0) throw ConfigError("episode: horizon must be > 0");
    if (!(control_dt > 0.0)) throw ConfigError("episode: control_dt must be > 0");
    if (delays_enabled &&
        (delay_min < control_dt || delay_max < delay_min)) {
      throw ConfigError("episode: delay range must lie within [control_dt, inf)");
    }
    if (!(initial_angle_min_deg > 0.0) || initial_angle_max_deg > 180.0 ||
        initial_angle_max_deg < initial_angle_min_deg) {
      throw ConfigError("episode: initial angle range must lie in (0, 180]");
    }
    if (substeps < 1) throw ConfigError("episode: substeps must be >= 1");
  }
};

// Curriculum: the max start angle ramps linearly from 20% of the range at
// progress 0 to the full range at progress 0.5 (60 deg -> 180 deg for the
// default [30, 180] range). Axis uniform on the sphere, zero rates, zero
// wheel speeds.
inline SatelliteState sample_initial_state(Rng& rng, const EpisodeConfig& cfg,
                                           double progress) {
  const double lo = deg_to_rad(cfg.initial_angle_min_deg);
  const double hi = deg_to_rad(cfg.initial_angle_max_deg);
  double hi_eff = hi;
  if (cfg.curriculum_enabled) {
    const double ramp = std::clamp(progress / 0.5, 0.0, 1.0);
    const double f = 0.2 + 0.8 * ramp;
    hi_eff = lo + (hi - lo) * f;
  }
  const Vec3 axis = random_unit_vector(rng);
  const double theta = uniform(rng, lo, hi_eff);

  SatelliteState s;
  s.attitude = quat_from_axis_angle({axis, theta});
  s.omega = Vec3{};
  s.rw_speed = Vec3{};
  return s;
}

inline double pointing_error(const SatelliteState& state, const TaskSpec& task) {
  if (task.align == AlignTarget::FullAttitude) {
    return angular_distance(state.attitude, Quaternion::identity());
  }
  const int i = align_axis_index(task.align);
  Vec3 axis{};
  axis[i] = 1.0;
  return axis_alignment_angle(state.attitude, axis, axis);
}

// Branch precedence: rate violation, then success, then dense shaping.
inline double compute_reward(double theta, const Vec3& omega,
                             const TorqueCommand& torque,
                             const RewardConfig& cfg,
                             double torque_limit = 0.002) {
  if (std::abs(omega.x) > cfg.omega_limit || std::abs(omega.y) > cfg.omega_limit ||
      std::abs(omega.z) > cfg.omega_limit) {
    return cfg.violation_reward;
  }
  if (theta < cfg.threshold) {
    return cfg.success_reward;
  }
  const double p = cfg.torque_penalty_coeff *
                   (std::abs(torque.tau.x) + std::abs(torque.tau.y) +
                    std::abs(torque.tau.z)) /
                   torque_limit;
  return 0.5 * (1.0 - std::pow((theta - cfg.threshold) / kPi, cfg.exponent)) - p;
}

struct StepInfo {
  double theta = 0.0;        // rad
  double time_s = 0.0;       // simulated seconds elapsed since reset
  Vec3 rw_speed{};           // rad/s
  bool rate_violation = false;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

class Environment {
 public:
  Environment(SatelliteParams params, TaskSpec task, RewardConfig reward,
              EpisodeConfig episode, uint64_t seed)
      : params_(params),
        task_(task),
        reward_(reward),
        episode_(episode),
        rng_(seed) {
    params_.validate();
    task_.validate();
    reward_.validate();
    episode_.validate();
  }

  Observation reset(double progress) {
    if (!(progress >= 0.0 && progress <= 1.0)) {
      throw std::invalid_argument("env reset: progress must be in [0, 1]");
    }
    state_ = sample_initial_state(rng_, episode_, progress);
    last_torque_ = Vec3{};
    step_count_ = 0;
    time_s_ = 0.0;
    done_ = false;
    needs_reset_ = false;
    return observe();
  }

  // Decodes and clamps the action, applies the torque for control_dt, coasts
  // for the residual random delay, then scores the post-step state.
  StepResult step(const Action& action) {
    if (needs_reset_ || done_) {
      throw UsageError("env step: episode is done or env was never reset");
    }
    const double limit = params_.command_torque_limit();
    Vec3 raw{std::clamp(action.a[0], -1.0, 1.0) * limit,
             std::clamp(action.a[1], -1.0, 1.0) * limit,
             std::clamp(action.a[2], -1.0, 1.0) * limit};
    const TorqueCommand cmd = clamp_torque(raw, limit);

    double dt = episode_.control_dt;
    if (episode_.delays_enabled) {
      dt = uniform(rng_, episode_.delay_min, episode_.delay_max);
    }

    state_ = step_dynamics(state_, cmd, episode_.control_dt, params_,
                           task_.mode, episode_.substeps);
    const double coast = dt - episode_.control_dt;
    if (coast > 0.0) {
      const int coast_sub = std::max(
          1, static_cast<int>(std::ceil(episode_.substeps * coast /
                                        episode_.control_dt)));
      state_ = step_dynamics(state_, TorqueCommand{}, coast, params_,
                             task_.mode, coast_sub);
    }
    last_torque_ = apply_failure(cmd, task_.mode).tau;
    time_s_ += dt;
    ++step_count_;

    StepResult r;
    r.info.theta = pointing_error(state_, task_);
    r.info.time_s = time_s_;
    r.info.rw_speed = state_.rw_speed;
    r.info.rate_violation =
        std::abs(state_.omega.x) > reward_.omega_limit ||
        std::abs(state_.omega.y) > reward_.omega_limit ||
        std::abs(state_.omega.z) > reward_.omega_limit;
    r.reward = compute_reward(r.info.theta, state_.omega, cmd, reward_, limit);
    done_ = r.info.rate_violation || step_count_ >= episode_.horizon;
    r.done = done_;
    r.observation = observe();
    return r;
  }

  Observation observe() const {
    Observation o;
    o.attitude = state_.attitude;
    o.omega = state_.omega;
    o.rw_speed = state_.rw_speed;
    o.last_torque = last_torque_;
    return o;
  }

  const SatelliteState& state() const { return state_; }
  void set_state(const SatelliteState& s) { state_ = s; }
  const TaskSpec& task() const { return task_; }
  const SatelliteParams& params() const { return params_; }
  const EpisodeConfig& episode_config() const { return episode_; }
  const RewardConfig& reward_config() const { return reward_; }
  int step_count() const { return step_count_; }
  bool done() const { return done_; }

 private:
  SatelliteParams params_;
  TaskSpec task_;
  RewardConfig reward_;
  EpisodeConfig episode_;
  Rng rng_;
  SatelliteState state_;
  Vec3 last_torque_{};
  int step_count_ = 0;
  double time_s_ = 0.0;
  bool done_ = false;
  bool needs_reset_ = true;
};

}  // namespace satrl
