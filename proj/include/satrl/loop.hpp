#pragma once

// Protocol-level emulation of the closed telemetry/command control loop: a
// policy responder answers telemetry messages with torque commands while the
// experiment driver owns the dynamics state and injects per-cycle latencies.
//
// Wire format: length-prefixed JSON. Each frame is a 4-byte little-endian
// payload length followed by a UTF-8 JSON object. Message schema version 1:
//   telemetry: {"type":"telemetry","seq":u64,"time_s":f64,"q":[4],
//               "omega":[3],"rw_speed":[3],"last_torque":[3]}
//   command:   {"type":"command","seq":u64,"torque":[3]}
//   error:     {"type":"error","seq":u64,"code":str,"message":str}
// Quaternions serialize as [s, x, y, z]; torques in N*m, rates in rad/s.

#include <cstdint>
#include <cstring>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "satrl/dynamics.hpp"
#include "satrl/environment.hpp"
#include "satrl/errors.hpp"
#include "satrl/evaluation.hpp"
#include "satrl/net.hpp"
#include "satrl/rng.hpp"

namespace satrl {

struct TelemetryMessage {
  uint64_t seq = 0;
  double time_s = 0.0;
  Quaternion attitude;
  Vec3 omega{};
  Vec3 rw_speed{};
  Vec3 last_torque{};
};

struct CommandMessage {
  uint64_t seq = 0;  // echoes the telemetry sequence
  Vec3 torque{};
};

struct ErrorMessage {
  uint64_t seq = 0;
  std::string code;
  std::string message;
};

// --- framing -------------------------------------------------------------

class ByteStream {
 public:
  virtual ~ByteStream() = default;
  virtual void write(const char* data, size_t n) = 0;
  // Returns bytes read; fewer than n means the stream is exhausted.
  virtual size_t read(char* data, size_t n) = 0;
};

class InMemoryByteStream : public ByteStream {
 public:
  void write(const char* data, size_t n) override {
    buf_.insert(buf_.end(), data, data + n);
  }
  size_t read(char* data, size_t n) override {
    const size_t take = std::min(n, buf_.size());
    std::copy(buf_.begin(), buf_.begin() + take, data);
    buf_.erase(buf_.begin(), buf_.begin() + take);
    return take;
  }
  size_t pending() const { return buf_.size(); }

 private:
  std::deque<char> buf_;
};

inline void write_frame(ByteStream& s, const nlohmann::json& j) {
  const std::string payload = j.dump();
  const uint32_t len = static_cast<uint32_t>(payload.size());
  char hdr[4];
  std::memcpy(hdr, &len, 4);
  s.write(hdr, 4);
  s.write(payload.data(), payload.size());
}

inline std::optional<nlohmann::json> read_frame(ByteStream& s) {
  char hdr[4];
  if (s.read(hdr, 4) != 4) return std::nullopt;
  uint32_t len = 0;
  std::memcpy(&len, hdr, 4);
  std::string payload(len, '\0');
  if (s.read(payload.data(), len) != len) {
    throw FormatError("read_frame: truncated frame");
  }
  try {
    return nlohmann::json::parse(payload);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("read_frame: bad JSON: ") + e.what());
  }
}

// --- message encode/decode ------------------------------------------------

inline nlohmann::json encode(const TelemetryMessage& m) {
  return {{"type", "telemetry"},
          {"seq", m.seq},
          {"time_s", m.time_s},
          {"q", {m.attitude.s, m.attitude.x, m.attitude.y, m.attitude.z}},
          {"omega", {m.omega.x, m.omega.y, m.omega.z}},
          {"rw_speed", {m.rw_speed.x, m.rw_speed.y, m.rw_speed.z}},
          {"last_torque", {m.last_torque.x, m.last_torque.y, m.last_torque.z}}};
}

inline nlohmann::json encode(const CommandMessage& m) {
  return {{"type", "command"},
          {"seq", m.seq},
          {"torque", {m.torque.x, m.torque.y, m.torque.z}}};
}

inline nlohmann::json encode(const ErrorMessage& m) {
  return {{"type", "error"},
          {"seq", m.seq},
          {"code", m.code},
          {"message", m.message}};
}

inline Vec3 vec3_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) {
    throw FormatError("message: expected a 3-element array");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline TelemetryMessage decode_telemetry(const nlohmann::json& j) {
  if (j.value("type", "") != "telemetry") {
    throw FormatError("message: not a telemetry frame");
  }
  TelemetryMessage m;
  m.seq = j.at("seq").get<uint64_t>();
  m.time_s = j.at("time_s").get<double>();
  const auto& q = j.at("q");
  if (!q.is_array() || q.size() != 4) {
    throw FormatError("telemetry: quaternion must have 4 entries");
  }
  m.attitude = {q[0].get<double>(), q[1].get<double>(), q[2].get<double>(),
                q[3].get<double>()};
  m.omega = vec3_from_json(j.at("omega"));
  m.rw_speed = vec3_from_json(j.at("rw_speed"));
  m.last_torque = vec3_from_json(j.at("last_torque"));
  return m;
}

inline CommandMessage decode_command(const nlohmann::json& j) {
  if (j.value("type", "") != "command") {
    throw FormatError("message: not a command frame");
  }
  CommandMessage m;
  m.seq = j.at("seq").get<uint64_t>();
  m.torque = vec3_from_json(j.at("torque"));
  return m;
}

// --- responder -------------------------------------------------------------

// Serves deterministic actor-mean torque commands for telemetry frames. One
// in-flight request at a time; out-of-order or malformed telemetry yields an
// error reply and the session continues.
class PolicyResponder {
 public:
  PolicyResponder(MlpActorCritic net, SatelliteParams params)
      : net_(std::move(net)), params_(params) {}

  // Reads one frame from `in` and writes the reply to `out`. Returns false
  // when the input stream is exhausted.
  bool serve_one(ByteStream& in, ByteStream& out) {
    const auto frame = read_frame(in);
    if (!frame) return false;

    uint64_t seq = 0;
    if (frame->contains("seq") && (*frame)["seq"].is_number_unsigned()) {
      seq = (*frame)["seq"].get<uint64_t>();
    }
    try {
      const TelemetryMessage t = decode_telemetry(*frame);
      if (have_seq_ && t.seq <= last_seq_) {
        write_frame(out, encode(ErrorMessage{t.seq, "out_of_order",
                                             "sequence must increase"}));
        return true;
      }
      if (std::abs(t.attitude.norm() - 1.0) > 1e-6) {
        write_frame(out, encode(ErrorMessage{t.seq, "bad_quaternion",
                                             "quaternion is not unit-norm"}));
        return true;
      }
      write_frame(out, encode(command_for(t)));
      last_seq_ = t.seq;
      have_seq_ = true;
    } catch (const FormatError& e) {
      write_frame(out, encode(ErrorMessage{seq, "malformed", e.what()}));
    } catch (const nlohmann::json::exception& e) {
      write_frame(out, encode(ErrorMessage{seq, "malformed", e.what()}));
    }
    return true;
  }

  CommandMessage command_for(const TelemetryMessage& t) const {
    Observation obs;
    obs.attitude = t.attitude;
    obs.omega = t.omega;
    obs.rw_speed = t.rw_speed;
    obs.last_torque = t.last_torque;
    const auto arr = observation_to_net_input(obs, params_);
    const VectorXd x = Eigen::Map<const VectorXd>(arr.data(), kObsDim);
    const GaussianPolicyOutput pol = net_.policy_forward(x);
    const double limit = params_.command_torque_limit();
    CommandMessage c;
    c.seq = t.seq;
    for (int i = 0; i < 3; ++i) {
      c.torque[i] = std::clamp(pol.mean[i], -1.0, 1.0) * limit;
    }
    return c;
  }

 private:
  MlpActorCritic net_;
  SatelliteParams params_;
  uint64_t last_seq_ = 0;
  bool have_seq_ = false;
};

// --- experiment driver ------------------------------------------------------

enum class LatencyMode { Fixed, Uniform, Replay };

struct LatencyModel {
  LatencyMode mode = LatencyMode::Fixed;
  double fixed_s = 0.5;
  double min_s = 0.5;
  double max_s = 1.0;
  std::vector<double> replay;  // cycled when exhausted

  double next(Rng& rng, size_t cycle) const {
    switch (mode) {
      case LatencyMode::Fixed:
        return fixed_s;
      case LatencyMode::Uniform:
        return uniform(rng, min_s, max_s);
      case LatencyMode::Replay:
        if (replay.empty()) {
          throw ConfigError("latency model: empty replay sequence");
        }
        return replay[cycle % replay.size()];
    }
    return fixed_s;
  }
};

enum class Verdict { TargetReached, RateViolation, TimeLimit };

inline std::string verdict_string(Verdict v) {
  switch (v) {
    case Verdict::TargetReached: return "TargetReached";
    case Verdict::RateViolation: return "RateViolation";
    default: return "TimeLimit";
  }
}

struct ExperimentPlan {
  Quaternion start_attitude;
  TaskSpec task;              // target spec + working mode
  double time_limit_s = 800.0;
  double accuracy_rad = 0.01;
  double rate_limit = 0.1;    // rad/s per axis
  double dwell_s = 5.0;       // consecutive in-band seconds before success
  double control_dt = 0.5;
  int substeps = 100;

  void validate() const {
    task.validate();
    if (!(time_limit_s > 0.0) || !(accuracy_rad > 0.0) || !(rate_limit > 0.0) ||
        dwell_s < 0.0 || !(control_dt > 0.0) || substeps < 1) {
      throw ConfigError("experiment plan: invalid limits");
    }
    if (std::abs(start_attitude.norm() - 1.0) > 1e-6) {
      throw ConfigError("experiment plan: start attitude is not unit-norm");
    }
  }
};

struct ExperimentResult {
  Verdict verdict = Verdict::TimeLimit;
  EpisodeTrace trace;
  std::string diagnostic;
};

// Drives the dynamics against a responder over the byte protocol. Torque is
// actively applied for control_dt each cycle; the satellite coasts for the
// residual latency. Stops on sustained accuracy, rate violation, or the time
// limit.
inline ExperimentResult run_experiment(const ExperimentPlan& plan,
                                       PolicyResponder& responder,
                                       const LatencyModel& latency,
                                       const SatelliteParams& params,
                                       uint64_t seed = 0) {
  plan.validate();
  params.validate();

  InMemoryByteStream to_responder;
  InMemoryByteStream to_driver;
  Rng rng(seed);

  SatelliteState state;
  state.attitude = plan.start_attitude.normalized();
  Vec3 last_torque{};
  double time_s = 0.0;
  double in_band_since = -1.0;
  uint64_t seq = 0;

  ExperimentResult result;
  result.trace.initial_error = pointing_error(state, plan.task);

  auto check_success = [&](double err) -> bool {
    if (err < plan.accuracy_rad) {
      if (in_band_since < 0.0) in_band_since = time_s;
      return time_s - in_band_since >= plan.dwell_s;
    }
    in_band_since = -1.0;
    return false;
  };

  if (check_success(result.trace.initial_error)) {
    result.verdict = Verdict::TargetReached;
    return result;
  }

  const double limit = params.command_torque_limit();
  size_t cycle = 0;
  while (time_s < plan.time_limit_s) {
    TelemetryMessage t;
    t.seq = ++seq;
    t.time_s = time_s;
    t.attitude = state.attitude;
    t.omega = state.omega;
    t.rw_speed = state.rw_speed;
    t.last_torque = last_torque;
    write_frame(to_responder, encode(t));

    if (!responder.serve_one(to_responder, to_driver)) {
      result.verdict = Verdict::TimeLimit;
      result.diagnostic = "responder timeout: no reply";
      return result;
    }
    const auto reply = read_frame(to_driver);
    if (!reply) {
      result.verdict = Verdict::TimeLimit;
      result.diagnostic = "responder timeout: empty reply";
      return result;
    }
    if (reply->value("type", "") == "error") {
      result.verdict = Verdict::TimeLimit;
      result.diagnostic = "responder error: " + reply->value("message", "");
      return result;
    }
    const CommandMessage cmd_msg = decode_command(*reply);
    if (cmd_msg.seq != seq) {
      result.verdict = Verdict::TimeLimit;
      result.diagnostic = "sequence mismatch in command reply";
      return result;
    }

    const TorqueCommand cmd = clamp_torque(cmd_msg.torque, limit);
    const double delay = latency.next(rng, cycle++);

    state = step_dynamics(state, cmd, plan.control_dt, params, plan.task.mode,
                          plan.substeps);
    const double coast = delay - plan.control_dt;
    if (coast > 0.0) {
      const int coast_sub = std::max(
          1, static_cast<int>(std::ceil(plan.substeps * coast / plan.control_dt)));
      state = step_dynamics(state, TorqueCommand{}, coast, params,
                            plan.task.mode, coast_sub);
    }
    last_torque = apply_failure(cmd, plan.task.mode).tau;
    time_s += delay;

    const double err = pointing_error(state, plan.task);
    TraceStep step;
    step.time_s = time_s;
    step.pointing_error = err;
    step.omega = state.omega;
    step.rw_speed = state.rw_speed;
    step.torque = last_torque;
    result.trace.steps.push_back(step);

    if (std::abs(state.omega.x) > plan.rate_limit ||
        std::abs(state.omega.y) > plan.rate_limit ||
        std::abs(state.omega.z) > plan.rate_limit) {
      result.verdict = Verdict::RateViolation;
      return result;
    }
    if (check_success(err)) {
      result.verdict = Verdict::TargetReached;
      return result;
    }
  }
  result.verdict = Verdict::TimeLimit;
  return result;
}

inline ExperimentPlan experiment_plan_from_json(const nlohmann::json& j);

inline ExperimentPlan load_experiment_plan(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("load_experiment_plan: cannot open " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("experiment plan: bad JSON: ") + e.what());
  }
  return experiment_plan_from_json(j);
}

inline ExperimentPlan experiment_plan_from_json(const nlohmann::json& j) {
  ExperimentPlan plan;
  if (j.contains("start_attitude")) {
    const auto& q = j["start_attitude"];
    if (!q.is_array() || q.size() != 4) {
      throw ConfigError("experiment plan: start_attitude must be [s,x,y,z]");
    }
    plan.start_attitude = {q[0].get<double>(), q[1].get<double>(),
                           q[2].get<double>(), q[3].get<double>()};
  } else if (j.contains("start_axis_angle")) {
    const auto& aa = j["start_axis_angle"];
    Vec3 axis = vec3_from_json(aa.at("axis"));
    const double n = axis.norm();
    if (!(n > 0.0)) throw ConfigError("experiment plan: zero start axis");
    plan.start_attitude =
        quat_from_axis_angle({axis / n, aa.at("theta_rad").get<double>()});
  }
  const std::string mode = j.value("mode", "nominal");
  if (mode == "nominal") plan.task.mode = FailureMode::Nominal;
  else if (mode == "failed_x") plan.task.mode = FailureMode::FailedX;
  else if (mode == "failed_y") plan.task.mode = FailureMode::FailedY;
  else if (mode == "failed_z") plan.task.mode = FailureMode::FailedZ;
  else throw ConfigError("experiment plan: unknown mode " + mode);
  const std::string align = j.value("align", "full_attitude");
  if (align == "full_attitude") plan.task.align = AlignTarget::FullAttitude;
  else if (align == "x") plan.task.align = AlignTarget::BodyAxisX;
  else if (align == "y") plan.task.align = AlignTarget::BodyAxisY;
  else if (align == "z") plan.task.align = AlignTarget::BodyAxisZ;
  else throw ConfigError("experiment plan: unknown align " + align);
  plan.time_limit_s = j.value("time_limit_s", plan.time_limit_s);
  plan.accuracy_rad = j.value("accuracy_rad", plan.accuracy_rad);
  plan.rate_limit = j.value("rate_limit_rad_s", plan.rate_limit);
  plan.dwell_s = j.value("dwell_s", plan.dwell_s);
  plan.control_dt = j.value("control_dt_s", plan.control_dt);
  plan.substeps = j.value("substeps", plan.substeps);
  plan.task.threshold = plan.accuracy_rad;
  plan.validate();
  return plan;
}

}  // namespace satrl
