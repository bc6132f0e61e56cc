#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "satrl/evaluation.hpp"

using namespace satrl;

namespace {

const SatelliteParams kRef{};

EpisodeTrace trace_from_errors(const std::vector<double>& errs,
                               double initial, double dt = 0.5) {
  EpisodeTrace tr;
  tr.initial_error = initial;
  for (size_t t = 0; t < errs.size(); ++t) {
    TraceStep s;
    s.time_s = (t + 1) * dt;
    s.pointing_error = errs[t];
    tr.steps.push_back(s);
  }
  return tr;
}

MlpActorCritic zero_torque_net() {
  MlpActorCritic net(50);
  net.actor().layers()[2].W.setZero();
  net.actor().layers()[2].b.setZero();
  return net;
}

}  // namespace

TEST_CASE("task_id_string") {
  CHECK(task_id_string(TaskSpec{}) == "nominal");
  CHECK(task_id_string({FailureMode::FailedX, AlignTarget::BodyAxisX, 0.05}) ==
        "failed_x_align_x");
  CHECK(task_id_string({FailureMode::FailedZ, AlignTarget::BodyAxisY, 0.05}) ==
        "failed_z_align_y");
}

TEST_CASE("aggregate_envelope hand arithmetic") {
  // Two traces, two steps: errors {1,3} and {2,5}.
  std::vector<EpisodeTrace> traces{trace_from_errors({1.0, 3.0}, 1.5),
                                   trace_from_errors({2.0, 5.0}, 2.5)};
  const EnvelopeStats env = aggregate_envelope(traces);
  REQUIRE(env.mean.size() == 2);
  CHECK(env.episodes == 2);
  CHECK(env.mean[0] == 1.5);
  CHECK(env.mean[1] == 4.0);
  CHECK(env.max[0] == 2.0);
  CHECK(env.max[1] == 5.0);
  // Population std of {1,2} is 0.5; of {3,5} is 1.
  CHECK(env.stddev[0] == Catch::Approx(0.5).margin(1e-15));
  CHECK(env.stddev[1] == Catch::Approx(1.0).margin(1e-15));
  CHECK(env.time_s[0] == 0.5);
  CHECK(env.time_s[1] == 1.0);
}

TEST_CASE("aggregate_envelope matches a two-pass oracle and is permutation invariant") {
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> u(0.0, kPi);
  std::vector<EpisodeTrace> traces;
  const int n_ep = 17, n_steps = 40;
  for (int e = 0; e < n_ep; ++e) {
    std::vector<double> errs(n_steps);
    for (auto& v : errs) v = u(rng);
    traces.push_back(trace_from_errors(errs, u(rng)));
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
      const double d = tr.steps[t].pointing_error - mean;
      var += d * d;
    }
    REQUIRE(std::abs(env.mean[t] - mean) < 1e-12);
    REQUIRE(std::abs(env.stddev[t] - std::sqrt(var / n_ep)) < 1e-12);
    REQUIRE(env.max[t] == mx);
    REQUIRE(env.max[t] >= env.mean[t]);
  }

  std::vector<EpisodeTrace> shuffled = traces;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const EnvelopeStats env2 = aggregate_envelope(shuffled);
  for (int t = 0; t < n_steps; ++t) {
    REQUIRE(env2.mean[t] == Catch::Approx(env.mean[t]).margin(1e-13));
    REQUIRE(env2.max[t] == env.max[t]);
  }

  CHECK_THROWS_AS(aggregate_envelope({}), UsageError);
  std::vector<EpisodeTrace> ragged = traces;
  ragged[0].steps.pop_back();
  CHECK_THROWS_AS(aggregate_envelope(ragged), UsageError);
}

TEST_CASE("convergence_time settled vs first crossing") {
  const double acc = 0.05;
  // Dips into the band at t=1.0 s, leaves, resettles at t=2.5 s.
  const EpisodeTrace dip =
      trace_from_errors({0.5, 0.04, 0.2, 0.1, 0.03, 0.02, 0.01}, 1.0);
  ConvergenceReport rep = convergence_time({dip}, TaskSpec{}, acc);
  CHECK(rep.settled_fraction == 1.0);
  CHECK(rep.first_cross_fraction == 1.0);
  CHECK(rep.mean_first_cross_time_s == Catch::Approx(1.0));
  CHECK(rep.mean_settled_time_s == Catch::Approx(2.5));
  CHECK(rep.horizon_s == Catch::Approx(3.5));
  CHECK(rep.episodes == 1);
  CHECK(rep.task_id == "nominal");

  // Never below accuracy: counted in neither statistic.
  const EpisodeTrace never = trace_from_errors({0.5, 0.4, 0.3}, 1.0);
  rep = convergence_time({dip, never}, TaskSpec{}, acc);
  CHECK(rep.settled_fraction == 0.5);
  CHECK(rep.first_cross_fraction == 0.5);
  CHECK(rep.mean_settled_time_s == Catch::Approx(2.5));

  // Starts inside the band and stays: converged at time zero.
  const EpisodeTrace at_target = trace_from_errors({0.01, 0.01, 0.01}, 0.001);
  rep = convergence_time({at_target}, TaskSpec{}, acc);
  CHECK(rep.mean_settled_time_s == 0.0);
  CHECK(rep.mean_first_cross_time_s == 0.0);
  CHECK(rep.settled_fraction == 1.0);

  // In band only at the final step: settled at the last timestamp.
  const EpisodeTrace late = trace_from_errors({0.5, 0.4, 0.04}, 1.0);
  rep = convergence_time({late}, TaskSpec{}, acc);
  CHECK(rep.mean_settled_time_s == Catch::Approx(1.5));
  CHECK(rep.mean_first_cross_time_s == Catch::Approx(1.5));

  CHECK_THROWS_AS(convergence_time({dip}, TaskSpec{}, 0.0),
                  std::invalid_argument);
}

TEST_CASE("eval episodes with a zero-torque policy") {
  const MlpActorCritic net = zero_torque_net();
  EvalOptions opt;
  opt.n_episodes = 5;
  opt.episode_steps = 1600;
  opt.seed = 7;
  const auto traces =
      run_eval_episodes(net, kRef, TaskSpec{}, RewardConfig{}, EpisodeConfig{}, opt);

  REQUIRE(traces.size() == 5);
  for (const auto& tr : traces) {
    // Zero torque from a zero-rate start: full horizon, constant error.
    REQUIRE(tr.steps.size() == 1600);
    CHECK(tr.steps.back().time_s == Catch::Approx(800.0));
    CHECK(tr.initial_error >= deg_to_rad(144.0) - 1e-9);
    CHECK(tr.initial_error <= deg_to_rad(180.0) + 1e-9);
    for (const auto& s : tr.steps) {
      REQUIRE(s.pointing_error == Catch::Approx(tr.initial_error).margin(1e-12));
      REQUIRE(s.torque.norm() == 0.0);
      REQUIRE(s.omega.norm() == 0.0);
    }
  }
}

TEST_CASE("eval determinism and worker-count invariance") {
  const MlpActorCritic net(51);
  EvalOptions opt;
  opt.n_episodes = 6;
  opt.episode_steps = 60;
  opt.seed = 21;
  opt.deterministic = false;  // exercises the per-episode action streams too

  auto run = [&](int workers) {
    EvalOptions o = opt;
    o.workers = workers;
    return run_eval_episodes(net, kRef, TaskSpec{}, RewardConfig{},
                             EpisodeConfig{}, o);
  };
  const auto a = run(1);
  const auto b = run(1);
  const auto c = run(4);
  REQUIRE(a.size() == b.size());
  REQUIRE(a.size() == c.size());
  for (size_t e = 0; e < a.size(); ++e) {
    REQUIRE(a[e].initial_error == b[e].initial_error);
    REQUIRE(a[e].initial_error == c[e].initial_error);
    REQUIRE(a[e].steps.size() == c[e].steps.size());
    for (size_t t = 0; t < a[e].steps.size(); ++t) {
      REQUIRE(a[e].steps[t].pointing_error == b[e].steps[t].pointing_error);
      REQUIRE(a[e].steps[t].pointing_error == c[e].steps[t].pointing_error);
      REQUIRE(a[e].steps[t].reward == c[e].steps[t].reward);
    }
  }
}

TEST_CASE("envelope CSV round trip") {
  std::mt19937_64 rng(71);
  std::uniform_real_distribution<double> u(0.0, kPi);
  std::vector<EpisodeTrace> traces;
  for (int e = 0; e < 4; ++e) {
    std::vector<double> errs(25);
    for (auto& v : errs) v = u(rng);
    traces.push_back(trace_from_errors(errs, u(rng)));
  }
  const EnvelopeStats env = aggregate_envelope(traces);
  const std::string path = "envelope_test.csv";
  export_envelope_csv(env, path);
  const EnvelopeStats back = import_envelope_csv(path);

  CHECK(back.episodes == env.episodes);
  REQUIRE(back.mean.size() == env.mean.size());
  for (size_t t = 0; t < env.mean.size(); ++t) {
    REQUIRE(back.time_s[t] == env.time_s[t]);
    REQUIRE(back.mean[t] == env.mean[t]);
    REQUIRE(back.stddev[t] == env.stddev[t]);
    REQUIRE(back.max[t] == env.max[t]);
  }
  std::remove(path.c_str());

  CHECK_THROWS_AS(import_envelope_csv("no_such_file.csv"), IoError);
}

TEST_CASE("trace CSV includes rpm columns") {
  EpisodeTrace tr = trace_from_errors({0.5}, 1.0);
  tr.steps[0].rw_speed = {104.71975511965977, 0.0, -104.71975511965977};
  const std::string path = "trace_test.csv";
  export_trace_csv(tr, path);

  std::ifstream f(path);
  std::string line, header, row;
  std::getline(f, line);  // schema comment
  std::getline(f, header);
  std::getline(f, row);
  CHECK(header.find("rw_x_rpm") != std::string::npos);
  // 104.7197... rad/s is 1000 rpm; parse the rpm cells back out.
  std::vector<std::string> cells;
  std::istringstream is(row);
  std::string cell;
  while (std::getline(is, cell, ',')) cells.push_back(cell);
  REQUIRE(cells.size() == 16);
  CHECK(std::stod(cells[9]) == Catch::Approx(1000.0).epsilon(1e-12));
  CHECK(std::stod(cells[11]) == Catch::Approx(-1000.0).epsilon(1e-12));
  std::remove(path.c_str());
}

TEST_CASE("convergence JSON export") {
  const EpisodeTrace tr = trace_from_errors({0.5, 0.04, 0.03}, 1.0);
  const ConvergenceReport rep = convergence_time({tr}, TaskSpec{}, 0.05);
  const std::string path = "conv_test.json";
  export_convergence_json({rep}, path);

  std::ifstream f(path);
  nlohmann::json j;
  f >> j;
  REQUIRE(j.contains("reports"));
  REQUIRE(j["reports"].contains("nominal"));
  CHECK(j["reports"]["nominal"]["accuracy_rad"].get<double>() == 0.05);
  CHECK(j["reports"]["nominal"]["settled_fraction"].get<double>() == 1.0);
  CHECK(j["reports"]["nominal"]["mean_settled_time_s"].get<double>() ==
        Catch::Approx(1.0));
  std::remove(path.c_str());
}
