#pragma once

// Run configuration: a single JSON file with one section per subsystem,
// validated as a whole before any run starts. Unknown keys are rejected so a
// typo cannot silently fall back to a default. Defaults reproduce the
// reference satellite and training setup.

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "satrl/dynamics.hpp"
#include "satrl/environment.hpp"
#include "satrl/errors.hpp"
#include "satrl/ppo.hpp"

namespace satrl {

struct RunConfig {
  SatelliteParams satellite;
  TaskSpec task;
  RewardConfig reward;
  EpisodeConfig episode;
  Hyperparams hp;
  std::vector<uint64_t> seeds{0};
  std::string out_dir = "runs";
  // Evaluation preset.
  int eval_episodes = 200;
  double eval_start_min_deg = 144.0;
  double eval_start_max_deg = 180.0;
  int eval_steps = 1600;

  void validate() const {
    satellite.validate();
    task.validate();
    reward.validate();
    episode.validate();
    hp.validate();
    if (seeds.empty()) throw ConfigError("config: at least one seed required");
    if (eval_episodes < 1 || eval_steps < 1) {
      throw ConfigError("config: eval_episodes and eval_steps must be >= 1");
    }
    if (!(eval_start_min_deg > 0.0) || eval_start_max_deg > 180.0 ||
        eval_start_max_deg < eval_start_min_deg) {
      throw ConfigError("config: eval start angle range must lie in (0, 180]");
    }
  }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j,
                                const std::set<std::string>& known,
                                const std::string& section) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) {
      throw ConfigError("config: unknown key '" + it.key() + "' in " + section);
    }
  }
}

template <typename T>
void take(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string("config: bad value for '") + key + "'");
    }
  }
}

inline FailureMode failure_mode_from_string(const std::string& s) {
  if (s == "nominal") return FailureMode::Nominal;
  if (s == "failed_x") return FailureMode::FailedX;
  if (s == "failed_y") return FailureMode::FailedY;
  if (s == "failed_z") return FailureMode::FailedZ;
  throw ConfigError("config: unknown failure mode '" + s + "'");
}

inline AlignTarget align_from_string(const std::string& s) {
  if (s == "full_attitude") return AlignTarget::FullAttitude;
  if (s == "x") return AlignTarget::BodyAxisX;
  if (s == "y") return AlignTarget::BodyAxisY;
  if (s == "z") return AlignTarget::BodyAxisZ;
  throw ConfigError("config: unknown align target '" + s + "'");
}

inline std::string failure_mode_to_string(FailureMode m) {
  switch (m) {
    case FailureMode::Nominal: return "nominal";
    case FailureMode::FailedX: return "failed_x";
    case FailureMode::FailedY: return "failed_y";
    default: return "failed_z";
  }
}

inline std::string align_to_string(AlignTarget a) {
  switch (a) {
    case AlignTarget::FullAttitude: return "full_attitude";
    case AlignTarget::BodyAxisX: return "x";
    case AlignTarget::BodyAxisY: return "y";
    default: return "z";
  }
}

}  // namespace detail

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  using detail::reject_unknown_keys;
  using detail::take;

  RunConfig cfg;
  reject_unknown_keys(
      j,
      {"satellite", "task", "reward", "episode", "training", "seeds",
       "out_dir", "evaluation"},
      "top level");

  if (j.contains("satellite")) {
    const auto& s = j["satellite"];
    reject_unknown_keys(s,
                        {"inertia_diag", "rw_inertia", "max_rw_torque",
                         "rw_saturation_rpm", "wheel_gyro_coupling"},
                        "satellite");
    if (s.contains("inertia_diag")) {
      const auto& I = s["inertia_diag"];
      if (!I.is_array() || I.size() != 3) {
        throw ConfigError("config: satellite.inertia_diag must be a 3-array");
      }
      cfg.satellite.inertia_diag = {I[0].get<double>(), I[1].get<double>(),
                                    I[2].get<double>()};
    }
    take(s, "rw_inertia", cfg.satellite.rw_inertia);
    take(s, "max_rw_torque", cfg.satellite.max_rw_torque);
    if (s.contains("rw_saturation_rpm")) {
      cfg.satellite.rw_saturation_speed =
          rpm_to_rad_s(s["rw_saturation_rpm"].get<double>());
    }
    take(s, "wheel_gyro_coupling", cfg.satellite.wheel_gyro_coupling);
  }

  if (j.contains("task")) {
    const auto& t = j["task"];
    reject_unknown_keys(t, {"mode", "align", "threshold_rad"}, "task");
    if (t.contains("mode")) {
      cfg.task.mode = detail::failure_mode_from_string(t["mode"].get<std::string>());
    }
    if (t.contains("align")) {
      cfg.task.align = detail::align_from_string(t["align"].get<std::string>());
    } else if (cfg.task.mode != FailureMode::Nominal) {
      // Default to same-axis alignment for a failed axis.
      cfg.task.align = static_cast<AlignTarget>(
          static_cast<int>(AlignTarget::BodyAxisX) +
          failed_axis_index(cfg.task.mode));
    }
    if (t.contains("threshold_rad")) {
      cfg.task.threshold = t["threshold_rad"].get<double>();
    } else {
      // Same-axis and nominal tasks train to 0.01 rad, cross-axis to 0.05.
      const int fail = failed_axis_index(cfg.task.mode);
      const int align = align_axis_index(cfg.task.align);
      cfg.task.threshold = (fail < 0 || fail == align) ? 0.01 : 0.05;
    }
  }
  cfg.reward.threshold = cfg.task.threshold;

  if (j.contains("reward")) {
    const auto& r = j["reward"];
    reject_unknown_keys(r,
                        {"threshold_rad", "exponent", "omega_limit",
                         "torque_penalty_coeff", "success_reward",
                         "violation_reward"},
                        "reward");
    take(r, "threshold_rad", cfg.reward.threshold);
    take(r, "exponent", cfg.reward.exponent);
    take(r, "omega_limit", cfg.reward.omega_limit);
    take(r, "torque_penalty_coeff", cfg.reward.torque_penalty_coeff);
    take(r, "success_reward", cfg.reward.success_reward);
    take(r, "violation_reward", cfg.reward.violation_reward);
  }

  // Underactuated tasks train with the longer 800-step horizon.
  if (cfg.task.mode != FailureMode::Nominal) cfg.episode.horizon = 800;
  if (j.contains("episode")) {
    const auto& e = j["episode"];
    reject_unknown_keys(e,
                        {"horizon", "control_dt", "delays_enabled", "delay_min",
                         "delay_max", "initial_angle_min_deg",
                         "initial_angle_max_deg", "curriculum_enabled",
                         "substeps"},
                        "episode");
    take(e, "horizon", cfg.episode.horizon);
    take(e, "control_dt", cfg.episode.control_dt);
    take(e, "delays_enabled", cfg.episode.delays_enabled);
    take(e, "delay_min", cfg.episode.delay_min);
    take(e, "delay_max", cfg.episode.delay_max);
    take(e, "initial_angle_min_deg", cfg.episode.initial_angle_min_deg);
    take(e, "initial_angle_max_deg", cfg.episode.initial_angle_max_deg);
    take(e, "curriculum_enabled", cfg.episode.curriculum_enabled);
    take(e, "substeps", cfg.episode.substeps);
  }

  if (j.contains("training")) {
    const auto& t = j["training"];
    reject_unknown_keys(t,
                        {"gamma", "kl_target", "epochs", "lr", "batch_size",
                         "minibatch_size", "clip_epsilon", "gae_lambda",
                         "update_passes", "steps_per_epoch",
                         "value_loss_coeff", "entropy_coeff"},
                        "training");
    take(t, "gamma", cfg.hp.gamma);
    take(t, "kl_target", cfg.hp.kl_target);
    take(t, "epochs", cfg.hp.epochs);
    take(t, "lr", cfg.hp.lr);
    take(t, "batch_size", cfg.hp.batch_size);
    take(t, "minibatch_size", cfg.hp.minibatch_size);
    take(t, "clip_epsilon", cfg.hp.clip_epsilon);
    take(t, "gae_lambda", cfg.hp.gae_lambda);
    take(t, "update_passes", cfg.hp.update_passes);
    take(t, "steps_per_epoch", cfg.hp.steps_per_epoch);
    take(t, "value_loss_coeff", cfg.hp.value_loss_coeff);
    take(t, "entropy_coeff", cfg.hp.entropy_coeff);
  }

  if (j.contains("seeds")) {
    cfg.seeds = j["seeds"].get<std::vector<uint64_t>>();
  }
  take(j, "out_dir", cfg.out_dir);

  if (j.contains("evaluation")) {
    const auto& e = j["evaluation"];
    reject_unknown_keys(e,
                        {"episodes", "start_angle_min_deg",
                         "start_angle_max_deg", "steps"},
                        "evaluation");
    take(e, "episodes", cfg.eval_episodes);
    take(e, "start_angle_min_deg", cfg.eval_start_min_deg);
    take(e, "start_angle_max_deg", cfg.eval_start_max_deg);
    take(e, "steps", cfg.eval_steps);
  }

  cfg.validate();
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("config: cannot open " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: bad JSON in ") + path + ": " +
                      e.what());
  }
  return run_config_from_json(j);
}

inline nlohmann::json run_config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["satellite"] = {
      {"inertia_diag",
       {cfg.satellite.inertia_diag.x, cfg.satellite.inertia_diag.y,
        cfg.satellite.inertia_diag.z}},
      {"rw_inertia", cfg.satellite.rw_inertia},
      {"max_rw_torque", cfg.satellite.max_rw_torque},
      {"rw_saturation_rpm", rad_s_to_rpm(cfg.satellite.rw_saturation_speed)},
      {"wheel_gyro_coupling", cfg.satellite.wheel_gyro_coupling}};
  j["task"] = {{"mode", detail::failure_mode_to_string(cfg.task.mode)},
               {"align", detail::align_to_string(cfg.task.align)},
               {"threshold_rad", cfg.task.threshold}};
  j["reward"] = {{"threshold_rad", cfg.reward.threshold},
                 {"exponent", cfg.reward.exponent},
                 {"omega_limit", cfg.reward.omega_limit},
                 {"torque_penalty_coeff", cfg.reward.torque_penalty_coeff},
                 {"success_reward", cfg.reward.success_reward},
                 {"violation_reward", cfg.reward.violation_reward}};
  j["episode"] = {{"horizon", cfg.episode.horizon},
                  {"control_dt", cfg.episode.control_dt},
                  {"delays_enabled", cfg.episode.delays_enabled},
                  {"delay_min", cfg.episode.delay_min},
                  {"delay_max", cfg.episode.delay_max},
                  {"initial_angle_min_deg", cfg.episode.initial_angle_min_deg},
                  {"initial_angle_max_deg", cfg.episode.initial_angle_max_deg},
                  {"curriculum_enabled", cfg.episode.curriculum_enabled},
                  {"substeps", cfg.episode.substeps}};
  j["training"] = {{"gamma", cfg.hp.gamma},
                   {"kl_target", cfg.hp.kl_target},
                   {"epochs", cfg.hp.epochs},
                   {"lr", cfg.hp.lr},
                   {"batch_size", cfg.hp.batch_size},
                   {"minibatch_size", cfg.hp.minibatch_size},
                   {"clip_epsilon", cfg.hp.clip_epsilon},
                   {"gae_lambda", cfg.hp.gae_lambda},
                   {"update_passes", cfg.hp.update_passes},
                   {"steps_per_epoch", cfg.hp.steps_per_epoch},
                   {"value_loss_coeff", cfg.hp.value_loss_coeff},
                   {"entropy_coeff", cfg.hp.entropy_coeff}};
  j["seeds"] = cfg.seeds;
  j["out_dir"] = cfg.out_dir;
  j["evaluation"] = {{"episodes", cfg.eval_episodes},
                     {"start_angle_min_deg", cfg.eval_start_min_deg},
                     {"start_angle_max_deg", cfg.eval_start_max_deg},
                     {"steps", cfg.eval_steps}};
  return j;
}

// FNV-1a over the canonical JSON dump.
inline uint64_t config_hash(const RunConfig& cfg) {
  const std::string s = run_config_to_json(cfg).dump();
  uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline constexpr const char* kVersionString = "satrl-0.1.0";

inline nlohmann::json run_manifest(const RunConfig& cfg, uint64_t seed) {
  nlohmann::json m;
  m["version"] = kVersionString;
  m["config_hash"] = config_hash(cfg);
  m["seed"] = seed;
  m["config"] = run_config_to_json(cfg);
  return m;
}

}  // namespace satrl
