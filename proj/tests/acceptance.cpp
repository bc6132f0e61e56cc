// Acceptance gate: one pass/fail line per criterion. Criteria 5 and 6 train
// real controllers at reduced scale and dominate the runtime.

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "satrl/checkpoint.hpp"
#include "satrl/config.hpp"
#include "satrl/evaluation.hpp"
#include "satrl/loop.hpp"
#include "satrl/ppo.hpp"

using namespace satrl;
using nlohmann::json;

namespace {

int g_failures = 0;

void report(int n, const std::string& name, bool pass,
            const std::string& detail) {
  std::cout << "criterion " << n << " [" << name << "]: "
            << (pass ? "PASS" : "FAIL") << " (" << detail << ")" << std::endl;
  if (!pass) ++g_failures;
}

const SatelliteParams kRef{};

// --- criterion 1: math and dynamics exactness ------------------------------

bool quaternion_norm_stable(double& worst) {
  std::mt19937_64 rng(101);
  std::normal_distribution<double> g(0.0, 0.05);
  Quaternion q{1, 0, 0, 0};
  worst = 0.0;
  for (int i = 0; i < 100000; ++i) {
    q = propagate_quaternion(q, {g(rng), g(rng), g(rng)}, 0.005);
    worst = std::max(worst, std::abs(q.norm() - 1.0));
  }
  return worst <= 1e-9;
}

bool momentum_conserved(double& rel) {
  SatelliteState s;
  s.omega = {0.002, 0.0005, 0.001};
  const double h0 = total_angular_momentum(s, kRef).norm();
  for (int i = 0; i < 10000; ++i) {
    s = step_dynamics(s, TorqueCommand{}, 0.5, kRef, FailureMode::Nominal, 100);
  }
  const double h1 = rotate_vector(s.attitude, total_angular_momentum(s, kRef)).norm();
  rel = std::abs(h1 - h0) / h0;
  return rel < 1e-6;
}

bool dynamics_hand_values(double& worst) {
  worst = 0.0;
  // M_x / I_xx from rest.
  const Vec3 a1 = euler_dynamics(kRef, {0, 0, 0}, {0.002, 0, 0});
  worst = std::max(worst, std::abs(a1.x - 0.002 / 0.19));
  worst = std::max(worst, std::abs(a1.y));
  // Gyroscopic term: omega = (0.1, 0, 0.1) gives y accel -(Ix - Iz)*0.01/Iy.
  const Vec3 a2 = euler_dynamics(kRef, {0.1, 0, 0.1}, {0, 0, 0});
  worst = std::max(worst, std::abs(a2.y - (-(0.19 - 0.17) * 0.01 / 0.23)));
  // Quaternion derivative: q = identity, w = (0, 0, 0.01): qdot = (0,0,0,0.005).
  const OmegaMatrix om = omega_matrix({0, 0, 0.01});
  const double qdot_s = 0.5 * (om.m[0][0] * 1.0);
  const double qdot_z = 0.5 * (om.m[3][0] * 1.0);
  worst = std::max(worst, std::abs(qdot_s - 0.0));
  worst = std::max(worst, std::abs(qdot_z - 0.005));
  return worst < 1e-12;
}

void criterion_1() {
  double norm_err = 0.0, mom_rel = 0.0, hand = 0.0;
  const bool a = quaternion_norm_stable(norm_err);
  const bool b = momentum_conserved(mom_rel);
  const bool c = dynamics_hand_values(hand);
  std::ostringstream d;
  d << "quat norm err " << norm_err << " <= 1e-9; momentum rel err " << mom_rel
    << " < 1e-6; hand-value err " << hand << " < 1e-12";
  report(1, "math and dynamics exactness", a && b && c, d.str());
}

// --- criterion 2: reward oracle --------------------------------------------

double reward_oracle(double theta, const Vec3& w, const Vec3& tau,
                     const RewardConfig& cfg) {
  if (std::abs(w.x) > 0.1 || std::abs(w.y) > 0.1 || std::abs(w.z) > 0.1) {
    return -1.0;
  }
  if (theta < cfg.threshold) return 1.0;
  const double p =
      0.01 * (std::abs(tau.x) + std::abs(tau.y) + std::abs(tau.z)) / 0.002;
  return 0.5 * (1.0 - std::pow((theta - cfg.threshold) / kPi, 0.6)) - p;
}

void criterion_2() {
  RewardConfig cfg;
  Rng rng(102);
  double worst = 0.0;
  int n = 0;
  auto check = [&](double theta, const Vec3& w, const Vec3& tau) {
    const double got = compute_reward(theta, w, TorqueCommand{tau}, cfg);
    worst = std::max(worst, std::abs(got - reward_oracle(theta, w, tau, cfg)));
    ++n;
  };
  for (int i = 0; i < 10000; ++i) {
    check(uniform(rng, 0.0, kPi),
          {uniform(rng, -0.15, 0.15), uniform(rng, -0.15, 0.15),
           uniform(rng, -0.15, 0.15)},
          {uniform(rng, -0.002, 0.002), uniform(rng, -0.002, 0.002),
           uniform(rng, -0.002, 0.002)});
  }
  // Branch boundaries: theta exactly at threshold, rates exactly at the limit.
  check(cfg.threshold, {0, 0, 0}, {0, 0, 0});
  check(cfg.threshold - 1e-15, {0, 0, 0}, {0, 0, 0});
  check(0.5, {0.1, 0, 0}, {0, 0, 0});
  check(0.5, {0.1 + 1e-15, 0, 0}, {0, 0, 0});
  check(0.001, {0, -0.1001, 0}, {0.002, 0.002, 0.002});
  std::ostringstream d;
  d << n << " grid points and boundaries, max abs diff " << worst << " <= 1e-12";
  report(2, "reward oracle", worst <= 1e-12, d.str());
}

// --- criterion 3: gradient correctness --------------------------------------

void criterion_3() {
  MlpActorCritic net(103);
  std::mt19937_64 rng(104);
  std::normal_distribution<double> g(0.0, 0.5);
  std::uniform_int_distribution<int> pick_actor(0, net.actor().param_count() - 1);
  std::uniform_int_distribution<int> pick_critic(0, net.critic().param_count() - 1);
  const int critic_offset = net.actor().param_count() + 3;

  double worst = 0.0;
  int checked = 0;

  auto central = [&](int idx, auto f) {
    VectorXd p = net.flatten();
    const double orig = p[idx];
    const double h = 1e-5;
    p[idx] = orig + h;
    net.unflatten(p);
    const double fp = f();
    p[idx] = orig - h;
    net.unflatten(p);
    const double fm = f();
    p[idx] = orig;
    net.unflatten(p);
    return (fp - fm) / (2.0 * h);
  };

  for (int trial = 0; trial < 10; ++trial) {
    VectorXd x(kObsDim);
    for (int i = 0; i < kObsDim; ++i) x[i] = g(rng);

    // Critic head.
    Mlp::Tape ctape;
    net.value_forward(x, &ctape);
    auto cgrads = net.critic().zero_like();
    VectorXd cadj(1);
    cadj[0] = 1.0;
    net.critic().backward(ctape, cadj, cgrads);
    MlpActorCritic holder = net;
    for (auto& l : holder.actor().layers()) { l.W.setZero(); l.b.setZero(); }
    holder.log_std().setZero();
    for (size_t li = 0; li < cgrads.size(); ++li) {
      holder.critic().layers()[li].W = cgrads[li].W;
      holder.critic().layers()[li].b = cgrads[li].b;
    }
    VectorXd cflat = holder.flatten();
    for (int k = 0; k < 3; ++k) {
      const int idx = critic_offset + pick_critic(rng);
      const double fd = central(idx, [&] { return net.value_forward(x); });
      const double an = cflat[idx];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
      worst = std::max(worst, std::abs(fd - an) / denom);
      ++checked;
    }

    // Actor head through the tanh squash.
    Mlp::Tape atape;
    const GaussianPolicyOutput out = net.policy_forward(x, &atape);
    VectorXd aadj(kActDim);
    for (int i = 0; i < 3; ++i) aadj[i] = 1.0 - out.mean[i] * out.mean[i];
    auto agrads = net.actor().zero_like();
    net.actor().backward(atape, aadj, agrads);
    MlpActorCritic aholder = net;
    for (size_t li = 0; li < agrads.size(); ++li) {
      aholder.actor().layers()[li].W = agrads[li].W;
      aholder.actor().layers()[li].b = agrads[li].b;
    }
    aholder.log_std().setZero();
    for (auto& l : aholder.critic().layers()) { l.W.setZero(); l.b.setZero(); }
    VectorXd aflat = aholder.flatten();
    for (int k = 0; k < 3; ++k) {
      const int idx = pick_actor(rng);
      const double fd = central(idx, [&] {
        return net.policy_forward(x).mean.sum();
      });
      const double an = aflat[idx];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
      worst = std::max(worst, std::abs(fd - an) / denom);
      ++checked;
    }
  }
  std::ostringstream d;
  d << checked << " parameter/observation pairs across both heads, max rel err "
    << worst << " < 1e-4";
  report(3, "gradient correctness", checked >= 50 && worst < 1e-4, d.str());
}

// --- criterion 4: GAE and aggregation oracles --------------------------------

void criterion_4() {
  std::mt19937_64 rng(105);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_gae = 0.0;

  for (int trial = 0; trial < 1000; ++trial) {
    RolloutBuffer buf;
    const int n = 20;
    for (int i = 0; i < n; ++i) {
      buf.observations.push_back({});
      buf.actions.emplace_back(Eigen::Vector3d::Zero());
      buf.log_probs.push_back(0.0);
      buf.rewards.push_back(g(rng));
      buf.values.push_back(g(rng));
      buf.dones.push_back(u(rng) < 0.2 ? 1 : 0);
    }
    buf.bootstrap_value = g(rng);
    compute_gae(buf, 0.99, 0.95);

    for (int t = 0; t < n; ++t) {
      double acc = 0.0, w = 1.0;
      for (int l = t; l < n; ++l) {
        const double next_v = (l + 1 < n) ? buf.values[l + 1] : buf.bootstrap_value;
        const double nd = buf.dones[l] ? 0.0 : 1.0;
        acc += w * (buf.rewards[l] + 0.99 * nd * next_v - buf.values[l]);
        if (buf.dones[l]) break;
        w *= 0.99 * 0.95;
      }
      worst_gae = std::max(worst_gae, std::abs(buf.advantages[t] - acc));
    }
  }

  double worst_env = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<EpisodeTrace> traces;
    const int n_ep = 2 + trial % 7, n_steps = 5 + trial % 11;
    for (int e = 0; e < n_ep; ++e) {
      EpisodeTrace tr;
      for (int t = 0; t < n_steps; ++t) {
        TraceStep s;
        s.time_s = 0.5 * (t + 1);
        s.pointing_error = u(rng) * kPi;
        tr.steps.push_back(s);
      }
      traces.push_back(tr);
    }
    const EnvelopeStats env = aggregate_envelope(traces);
    for (int t = 0; t < n_steps; ++t) {
      double sum = 0.0, mx = 0.0;
      for (const auto& tr : traces) {
        sum += tr.steps[t].pointing_error;
        mx = std::max(mx, tr.steps[t].pointing_error);
      }
      const double mean = sum / n_ep;
      double var = 0.0;
      for (const auto& tr : traces) {
        const double d2 = tr.steps[t].pointing_error - mean;
        var += d2 * d2;
      }
      worst_env = std::max(worst_env, std::abs(env.mean[t] - mean));
      worst_env = std::max(worst_env, std::abs(env.stddev[t] - std::sqrt(var / n_ep)));
      worst_env = std::max(worst_env, std::abs(env.max[t] - mx));
    }
  }
  std::ostringstream d;
  d << "1000 GAE instances max diff " << worst_gae
    << "; 1000 envelope instances max diff " << worst_env << "; both < 1e-10";
  report(4, "GAE and aggregation oracles", worst_gae < 1e-10 && worst_env < 1e-10,
         d.str());
}

// --- criteria 5 and 6: learning at reduced scale -----------------------------

void criterion_5() {
  TaskSpec task;  // nominal, 0.01 rad
  EpisodeConfig ep;
  ep.initial_angle_min_deg = 30.0;
  ep.initial_angle_max_deg = 90.0;
  Hyperparams hp;
  hp.epochs = 10;
  hp.steps_per_epoch = 15000;

  const TrainResult res =
      train_controller(kRef, task, RewardConfig{}, ep, hp, 1);
  const double first = res.stats.front().mean_episode_return;
  const double best = res.best_epoch_return;
  const bool ratio_ok = first > 0.0 && best >= 3.0 * first;

  EvalOptions opt;
  opt.n_episodes = 100;
  opt.start_angle_min_deg = 30.0;
  opt.start_angle_max_deg = 90.0;
  opt.episode_steps = 500;  // 250 s horizon
  opt.deterministic = true;
  opt.seed = 900;
  opt.workers = 4;
  const auto traces = run_eval_episodes(res.best_net, kRef, task,
                                        RewardConfig{}, ep, opt);
  const ConvergenceReport rep = convergence_time(traces, task, 0.05);
  const bool eval_ok = rep.first_cross_fraction >= 0.80;

  std::ostringstream d;
  d << "epoch-1 return " << first << ", best " << best << " (need >= 3x); "
    << 100.0 * rep.first_cross_fraction
    << "% of 100 episodes below 0.05 rad within 250 s (need >= 80%)";
  report(5, "nominal learning progress", ratio_ok && eval_ok, d.str());
}

void criterion_6() {
  TaskSpec task{FailureMode::FailedX, AlignTarget::BodyAxisX, 0.01};
  EpisodeConfig ep;
  ep.horizon = 800;
  Hyperparams hp;
  hp.epochs = 10;
  hp.steps_per_epoch = 15000;

  const TrainResult res =
      train_controller(kRef, task, RewardConfig{}, ep, hp, 1);

  EvalOptions opt;
  opt.n_episodes = 100;
  opt.start_angle_min_deg = 90.0;
  opt.start_angle_max_deg = 144.0;
  opt.episode_steps = 800;
  opt.deterministic = true;
  opt.seed = 901;
  opt.workers = 4;
  const auto traces = run_eval_episodes(res.best_net, kRef, task,
                                        RewardConfig{}, ep, opt);
  const ConvergenceReport rep = convergence_time(traces, task, 0.05);
  const bool eval_ok = rep.first_cross_fraction >= 0.60;

  bool x_zero = true;
  for (const auto& tr : traces) {
    for (const auto& s : tr.steps) {
      if (s.torque.x != 0.0) x_zero = false;
    }
  }
  std::ostringstream d;
  d << 100.0 * rep.first_cross_fraction
    << "% of 100 episodes below 0.05 rad (need >= 60%); X torque identically "
    << (x_zero ? "zero" : "NONZERO") << " in all traces";
  report(6, "underactuated sanity", eval_ok && x_zero, d.str());
}

// --- criterion 7: harness equivalence ----------------------------------------

void criterion_7() {
  std::mt19937_64 rng(106);
  std::uniform_real_distribution<double> ang(deg_to_rad(20.0), deg_to_rad(170.0));
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0.0;
  bool ok = true;

  for (int pair = 0; pair < 20; ++pair) {
    const MlpActorCritic net(200 + pair);
    Vec3 axis{g(rng), g(rng), g(rng)};
    axis = axis / axis.norm();
    const Quaternion q0 = quat_from_axis_angle({axis, ang(rng)});

    ExperimentPlan plan;
    plan.start_attitude = q0;
    plan.time_limit_s = 40.0;
    plan.dwell_s = 0.0;
    PolicyResponder responder(net, kRef);
    LatencyModel fixed;  // 0.5 s
    const ExperimentResult res = run_experiment(plan, responder, fixed, kRef);

    EpisodeConfig ep;
    ep.horizon = 200;
    Environment env(kRef, TaskSpec{}, RewardConfig{}, ep, 1);
    env.reset(1.0);
    SatelliteState s0;
    s0.attitude = q0;
    env.set_state(s0);
    Observation obs = env.observe();

    for (size_t t = 0; t < res.trace.steps.size(); ++t) {
      const auto arr = observation_to_net_input(obs, kRef);
      const VectorXd x = Eigen::Map<const VectorXd>(arr.data(), kObsDim);
      const GaussianPolicyOutput pol = net.policy_forward(x);
      Action act;
      for (int i = 0; i < 3; ++i) act.a[i] = std::clamp(pol.mean[i], -1.0, 1.0);
      const StepResult r = env.step(act);

      const SatelliteState& es = env.state();
      const TraceStep& hs = res.trace.steps[t];
      for (const double diff :
           {std::abs(hs.pointing_error - r.info.theta),
            std::abs(hs.omega.x - es.omega.x), std::abs(hs.omega.y - es.omega.y),
            std::abs(hs.omega.z - es.omega.z),
            std::abs(hs.rw_speed.x - es.rw_speed.x),
            std::abs(hs.rw_speed.y - es.rw_speed.y),
            std::abs(hs.rw_speed.z - es.rw_speed.z)}) {
        worst = std::max(worst, diff);
      }
      if (r.done) break;
      obs = r.observation;
    }
  }

  // Protocol round trip is bit-exact.
  for (int i = 0; i < 100; ++i) {
    TelemetryMessage t;
    t.seq = i + 1;
    t.time_s = g(rng) * 100.0;
    Vec3 axis{g(rng), g(rng), g(rng)};
    axis = axis / axis.norm();
    t.attitude = quat_from_axis_angle({axis, std::abs(g(rng))});
    t.omega = {g(rng), g(rng), g(rng)};
    t.rw_speed = {g(rng) * 100, g(rng) * 100, g(rng) * 100};
    t.last_torque = {g(rng) * 1e-3, g(rng) * 1e-3, g(rng) * 1e-3};
    InMemoryByteStream s;
    write_frame(s, encode(t));
    const TelemetryMessage back = decode_telemetry(*read_frame(s));
    if (back.attitude.s != t.attitude.s || back.attitude.x != t.attitude.x ||
        back.attitude.y != t.attitude.y || back.attitude.z != t.attitude.z ||
        back.omega.x != t.omega.x || back.omega.y != t.omega.y ||
        back.omega.z != t.omega.z || back.rw_speed.x != t.rw_speed.x ||
        back.last_torque.z != t.last_torque.z || back.seq != t.seq ||
        back.time_s != t.time_s) {
      ok = false;
    }
  }
  std::ostringstream d;
  d << "20 pairs, worst state-component diff " << worst
    << " < 1e-9; 100 protocol round trips " << (ok ? "bit-exact" : "MISMATCH");
  report(7, "harness equivalence", worst < 1e-9 && ok, d.str());
}

// --- criterion 8: manifest reproducibility -----------------------------------

std::string stats_csv_string(const MultiSeedResult& res) {
  std::ostringstream f;
  f << "# schema_version,1\n";
  f << "seed,epoch,episodes,mean_return,mean_length,mean_kl,policy_loss,"
       "value_loss\n";
  for (size_t i = 0; i < res.summaries.size(); ++i) {
    if (res.summaries[i].failed) continue;
    for (const EpochStats& e : res.runs[i].stats) {
      f << res.summaries[i].seed << ',' << e.epoch << ',' << e.episodes << ','
        << std::setprecision(17) << e.mean_episode_return << ','
        << e.mean_episode_length << ',' << e.mean_kl << ',' << e.policy_loss
        << ',' << e.value_loss << "\n";
    }
  }
  return f.str();
}

void criterion_8() {
  json base = {{"training", {{"epochs", 2}, {"steps_per_epoch", 1500}}},
               {"seeds", {3, 4}}};
  const RunConfig cfg = run_config_from_json(base);
  const MultiSeedResult first = multi_seed_select(
      cfg.satellite, cfg.task, cfg.reward, cfg.episode, cfg.hp, cfg.seeds);
  const std::string csv1 = stats_csv_string(first);

  // Re-run from the manifest's embedded config snapshot.
  const json manifest = run_manifest(cfg, first.best_seed);
  const RunConfig cfg2 = run_config_from_json(manifest["config"]);
  const MultiSeedResult second = multi_seed_select(
      cfg2.satellite, cfg2.task, cfg2.reward, cfg2.episode, cfg2.hp, cfg2.seeds);
  const std::string csv2 = stats_csv_string(second);

  const bool same = csv1 == csv2 && !csv1.empty();
  const bool hash_same = config_hash(cfg) == config_hash(cfg2);
  std::ostringstream d;
  d << "manifest re-run stats CSV " << (same ? "byte-identical" : "DIFFERS")
    << ", config hash " << (hash_same ? "stable" : "UNSTABLE");
  report(8, "manifest reproducibility", same && hash_same, d.str());
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_7();
  criterion_8();
  criterion_5();
  criterion_6();
  std::cout << (g_failures == 0 ? "ALL CRITERIA PASSED"
                                : "FAILURES: " + std::to_string(g_failures))
            << std::endl;
  return g_failures == 0 ? 0 : 1;
}
