#pragma once

// Statistical evaluation: per-step mean/std/worst-case pointing-error
// envelopes across episodes, settled and first-crossing convergence times,
// and CSV/JSON trace export.
//
// Export units: angles in radians, times in seconds, wheel speeds in both
// rad/s and rpm columns.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <thread>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "satrl/environment.hpp"
#include "satrl/errors.hpp"
#include "satrl/net.hpp"
#include "satrl/rng.hpp"

namespace satrl {

struct TraceStep {
  double time_s = 0.0;
  double pointing_error = 0.0;  // rad
  Vec3 omega{};                 // rad/s
  Vec3 rw_speed{};              // rad/s
  Vec3 torque{};                // applied (post-clamp, post-failure), N*m
  double reward = 0.0;
};

struct EpisodeTrace {
  double initial_error = 0.0;  // rad, at reset
  std::vector<TraceStep> steps;
};

struct EnvelopeStats {
  std::vector<double> time_s;
  std::vector<double> mean;
  std::vector<double> stddev;  // population
  std::vector<double> max;
  int episodes = 0;
};

struct ConvergenceReport {
  std::string task_id;
  double accuracy = 0.0;              // rad
  double mean_settled_time_s = 0.0;   // over settled episodes
  double mean_first_cross_time_s = 0.0;  // over episodes that ever cross
  double horizon_s = 0.0;
  double settled_fraction = 0.0;
  double first_cross_fraction = 0.0;
  int episodes = 0;
};

struct EvalOptions {
  int n_episodes = 200;
  double start_angle_min_deg = 144.0;
  double start_angle_max_deg = 180.0;
  int episode_steps = 1600;
  bool deterministic = true;   // actor mean actions
  bool delays_enabled = false; // fixed 0.5 s steps for step-aligned stats
  uint64_t seed = 0;
  int workers = 1;             // episodes are seeded independently, so the
                               // result does not depend on this
};

inline std::string task_id_string(const TaskSpec& task) {
  auto axis_name = [](int i) {
    return i == 0 ? "x" : (i == 1 ? "y" : "z");
  };
  if (task.align == AlignTarget::FullAttitude) return std::string("nominal");
  std::string s = "failed_";
  s += axis_name(failed_axis_index(task.mode));
  s += "_align_";
  s += axis_name(align_axis_index(task.align));
  return s;
}

// Runs evaluation episodes with the policy. Episodes are seeded
// independently (derive_seed of the base seed and episode index) so results
// do not depend on scheduling or worker count.
inline std::vector<EpisodeTrace> run_eval_episodes(
    const MlpActorCritic& net, const SatelliteParams& params,
    const TaskSpec& task, const RewardConfig& reward,
    const EpisodeConfig& base_episode, const EvalOptions& opt) {
  EpisodeConfig ep = base_episode;
  ep.horizon = opt.episode_steps;
  ep.delays_enabled = opt.delays_enabled;
  ep.initial_angle_min_deg = opt.start_angle_min_deg;
  ep.initial_angle_max_deg = opt.start_angle_max_deg;
  ep.curriculum_enabled = false;

  std::vector<EpisodeTrace> traces(opt.n_episodes);

  auto run_one = [&](int e) {
    Environment env(params, task, reward, ep, derive_seed(opt.seed, e));
    Rng action_rng(derive_seed(opt.seed, 100000 + e));
    Observation obs = env.reset(1.0);

    EpisodeTrace trace;
    trace.initial_error = pointing_error(env.state(), task);
    trace.steps.reserve(opt.episode_steps);

    for (int t = 0; t < opt.episode_steps; ++t) {
      const auto arr = observation_to_net_input(obs, params);
      const VectorXd x = Eigen::Map<const VectorXd>(arr.data(), kObsDim);
      const GaussianPolicyOutput pol = net.policy_forward(x);

      Action act;
      for (int i = 0; i < 3; ++i) {
        double a = pol.mean[i];
        if (!opt.deterministic) a += pol.std[i] * normal(action_rng);
        act.a[i] = std::clamp(a, -1.0, 1.0);
      }
      const StepResult r = env.step(act);

      TraceStep s;
      s.time_s = r.info.time_s;
      s.pointing_error = r.info.theta;
      s.omega = env.state().omega;
      s.rw_speed = r.info.rw_speed;
      s.torque = r.observation.last_torque;
      s.reward = r.reward;
      trace.steps.push_back(s);

      if (r.done) break;
      obs = r.observation;
    }
    traces[e] = std::move(trace);
  };

  const int workers = std::max(1, opt.workers);
  if (workers == 1) {
    for (int e = 0; e < opt.n_episodes; ++e) run_one(e);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        int e;
        while ((e = next.fetch_add(1)) < opt.n_episodes) run_one(e);
      });
    }
    for (auto& t : pool) t.join();
  }
  return traces;
}

// Per-step mean, population std, and max pointing error across episodes.
// Traces must be equal length and step-aligned.
inline EnvelopeStats aggregate_envelope(const std::vector<EpisodeTrace>& traces) {
  if (traces.empty()) {
    throw UsageError("aggregate_envelope: no traces");
  }
  const size_t n_steps = traces[0].steps.size();
  for (const auto& t : traces) {
    if (t.steps.size() != n_steps) {
      throw UsageError("aggregate_envelope: traces have unequal lengths");
    }
  }
  EnvelopeStats env;
  env.episodes = static_cast<int>(traces.size());
  env.time_s.resize(n_steps);
  env.mean.resize(n_steps);
  env.stddev.resize(n_steps);
  env.max.resize(n_steps);
  const double inv_n = 1.0 / traces.size();
  for (size_t t = 0; t < n_steps; ++t) {
    double sum = 0.0, mx = -std::numeric_limits<double>::infinity();
    for (const auto& tr : traces) {
      const double e = tr.steps[t].pointing_error;
      sum += e;
      mx = std::max(mx, e);
    }
    const double mean = sum * inv_n;
    double var = 0.0;
    for (const auto& tr : traces) {
      const double d = tr.steps[t].pointing_error - mean;
      var += d * d;
    }
    env.time_s[t] = traces[0].steps[t].time_s;
    env.mean[t] = mean;
    env.stddev[t] = std::sqrt(var * inv_n);
    env.max[t] = mx;
  }
  return env;
}

// Settled time: first entry into the accuracy band never subsequently left
// within the trace. First-crossing time is also reported since the two
// definitions differ for traces that dip in and out.
inline ConvergenceReport convergence_time(const std::vector<EpisodeTrace>& traces,
                                          const TaskSpec& task,
                                          double accuracy) {
  if (!(accuracy > 0.0)) {
    throw std::invalid_argument("convergence_time: accuracy must be > 0");
  }
  ConvergenceReport rep;
  rep.task_id = task_id_string(task);
  rep.accuracy = accuracy;
  rep.episodes = static_cast<int>(traces.size());

  double settled_sum = 0.0, cross_sum = 0.0;
  int settled_count = 0, cross_count = 0;
  for (const auto& tr : traces) {
    if (tr.steps.empty()) continue;
    rep.horizon_s = std::max(rep.horizon_s, tr.steps.back().time_s);

    // Scan backwards for the start of the trailing in-band run.
    int settled_idx = -1;
    for (int t = static_cast<int>(tr.steps.size()) - 1; t >= 0; --t) {
      if (tr.steps[t].pointing_error < accuracy) {
        settled_idx = t;
      } else {
        break;
      }
    }
    if (settled_idx == 0 && tr.initial_error < accuracy) {
      // Below accuracy from the very start counts as time 0.
      settled_sum += 0.0;
      ++settled_count;
    } else if (settled_idx >= 0) {
      settled_sum += tr.steps[settled_idx].time_s;
      ++settled_count;
    }

    for (size_t t = 0; t < tr.steps.size(); ++t) {
      if (tr.steps[t].pointing_error < accuracy) {
        cross_sum += (t == 0 && tr.initial_error < accuracy)
                         ? 0.0
                         : tr.steps[t].time_s;
        ++cross_count;
        break;
      }
    }
  }
  rep.settled_fraction =
      rep.episodes > 0 ? static_cast<double>(settled_count) / rep.episodes : 0.0;
  rep.first_cross_fraction =
      rep.episodes > 0 ? static_cast<double>(cross_count) / rep.episodes : 0.0;
  rep.mean_settled_time_s = settled_count > 0 ? settled_sum / settled_count : 0.0;
  rep.mean_first_cross_time_s =
      cross_count > 0 ? cross_sum / cross_count : 0.0;
  return rep;
}

namespace detail {

inline std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace detail

// CSV schema: "# schema_version,1" comment, then
// step,time_s,mean_rad,std_rad,max_rad with the episode count in the header.
inline void export_envelope_csv(const EnvelopeStats& env,
                                const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("export_envelope_csv: cannot open " + path);
  f << "# schema_version,1\n";
  f << "# episodes," << env.episodes << "\n";
  f << "step,time_s,mean_rad,std_rad,max_rad\n";
  for (size_t t = 0; t < env.mean.size(); ++t) {
    f << t << ',' << detail::fmt_double(env.time_s[t]) << ','
      << detail::fmt_double(env.mean[t]) << ','
      << detail::fmt_double(env.stddev[t]) << ','
      << detail::fmt_double(env.max[t]) << "\n";
  }
  if (!f) throw IoError("export_envelope_csv: write failed for " + path);
}

inline EnvelopeStats import_envelope_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("import_envelope_csv: cannot open " + path);
  EnvelopeStats env;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto pos = line.find("episodes,");
      if (pos != std::string::npos) {
        env.episodes = std::stoi(line.substr(pos + 9));
      }
      continue;
    }
    if (line.rfind("step,", 0) == 0) continue;
    std::istringstream is(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(is, cell, ',')) vals.push_back(std::stod(cell));
    if (vals.size() != 5) throw FormatError("envelope CSV: bad row in " + path);
    env.time_s.push_back(vals[1]);
    env.mean.push_back(vals[2]);
    env.stddev.push_back(vals[3]);
    env.max.push_back(vals[4]);
  }
  return env;
}

// Per-trace CSV: one row per step with rates, wheel speeds (rad/s and rpm),
// torques, and reward.
inline void export_trace_csv(const EpisodeTrace& trace, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("export_trace_csv: cannot open " + path);
  f << "# schema_version,1\n";
  f << "step,time_s,pointing_error_rad,omega_x,omega_y,omega_z,"
       "rw_x_rad_s,rw_y_rad_s,rw_z_rad_s,rw_x_rpm,rw_y_rpm,rw_z_rpm,"
       "torque_x,torque_y,torque_z,reward\n";
  for (size_t t = 0; t < trace.steps.size(); ++t) {
    const TraceStep& s = trace.steps[t];
    f << t << ',' << detail::fmt_double(s.time_s) << ','
      << detail::fmt_double(s.pointing_error) << ','
      << detail::fmt_double(s.omega.x) << ',' << detail::fmt_double(s.omega.y)
      << ',' << detail::fmt_double(s.omega.z) << ','
      << detail::fmt_double(s.rw_speed.x) << ','
      << detail::fmt_double(s.rw_speed.y) << ','
      << detail::fmt_double(s.rw_speed.z) << ','
      << detail::fmt_double(rad_s_to_rpm(s.rw_speed.x)) << ','
      << detail::fmt_double(rad_s_to_rpm(s.rw_speed.y)) << ','
      << detail::fmt_double(rad_s_to_rpm(s.rw_speed.z)) << ','
      << detail::fmt_double(s.torque.x) << ','
      << detail::fmt_double(s.torque.y) << ','
      << detail::fmt_double(s.torque.z) << ','
      << detail::fmt_double(s.reward) << "\n";
  }
  if (!f) throw IoError("export_trace_csv: write failed for " + path);
}

inline nlohmann::json convergence_report_json(const ConvergenceReport& rep) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["task"] = rep.task_id;
  j["accuracy_rad"] = rep.accuracy;
  j["mean_settled_time_s"] = rep.mean_settled_time_s;
  j["mean_first_cross_time_s"] = rep.mean_first_cross_time_s;
  j["horizon_s"] = rep.horizon_s;
  j["settled_fraction"] = rep.settled_fraction;
  j["first_cross_fraction"] = rep.first_cross_fraction;
  j["episodes"] = rep.episodes;
  return j;
}

inline void export_convergence_json(const std::vector<ConvergenceReport>& reports,
                                    const std::string& path) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["reports"] = nlohmann::json::object();
  for (const auto& rep : reports) {
    j["reports"][rep.task_id] = convergence_report_json(rep);
  }
  std::ofstream f(path);
  if (!f) throw IoError("export_convergence_json: cannot open " + path);
  f << j.dump(1) << "\n";
  if (!f) throw IoError("export_convergence_json: write failed for " + path);
}

}  // namespace satrl
