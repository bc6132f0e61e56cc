// satrl: train, evaluate, and exercise MLP attitude controllers for a
// reaction-wheel smallsat, including protocol-level control-loop emulation.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "satrl/checkpoint.hpp"
#include "satrl/config.hpp"
#include "satrl/evaluation.hpp"
#include "satrl/loop.hpp"
#include "satrl/ppo.hpp"

namespace fs = std::filesystem;
using namespace satrl;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::vector<uint64_t> seeds;
  int workers = 1;
  bool paper_scale = false;
};

json load_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError("bad JSON in " + path + ": " + e.what());
  }
  return j;
}

// Accepts either a plain run config or a manifest written by a previous run
// (in which case the embedded config snapshot and seed are used).
json load_config_json(const CommonArgs& args) {
  if (args.config_path.empty()) return json::object();
  json j = load_json_file(args.config_path);
  if (j.contains("config") && j.contains("version")) {
    return j["config"];
  }
  return j;
}

RunConfig resolve_config(const CommonArgs& args, const json& cfg_json) {
  RunConfig cfg = run_config_from_json(cfg_json);
  if (args.paper_scale) {
    cfg.hp.epochs = 40;
    cfg.hp.steps_per_epoch = 15000;
    cfg.seeds.clear();
    for (uint64_t s = 0; s < 10; ++s) cfg.seeds.push_back(s);
    cfg.eval_episodes = 10000;
  } else if (args.config_path.empty()) {
    // Bare invocations run a reduced-scale version of the reference setup.
    cfg.hp.epochs = 10;
    cfg.hp.steps_per_epoch = 3000;
    cfg.eval_episodes = 100;
  }
  if (!args.seeds.empty()) cfg.seeds = args.seeds;
  if (!args.out_dir.empty()) {
    cfg.out_dir = args.out_dir;
  } else if (const char* env = std::getenv("SATRL_OUT")) {
    cfg.out_dir = env;
  }
  cfg.validate();
  return cfg;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

// Per-epoch training statistics for every seed. Wall-clock timing is kept
// out of this file so identical runs produce identical bytes.
void write_stats_csv(const MultiSeedResult& res, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path);
  f << "# schema_version,1\n";
  f << "seed,epoch,episodes,mean_return,mean_length,mean_kl,policy_loss,"
       "value_loss\n";
  for (size_t i = 0; i < res.summaries.size(); ++i) {
    if (res.summaries[i].failed) continue;
    for (const EpochStats& e : res.runs[i].stats) {
      f << res.summaries[i].seed << ',' << e.epoch << ',' << e.episodes << ','
        << fmt(e.mean_episode_return) << ',' << fmt(e.mean_episode_length)
        << ',' << fmt(e.mean_kl) << ',' << fmt(e.policy_loss) << ','
        << fmt(e.value_loss) << "\n";
    }
  }
  if (!f) throw IoError("write failed for " + path);
}

int run_training(const RunConfig& cfg, int /*workers*/) {
  const std::string task_id = task_id_string(cfg.task);
  const fs::path dir = fs::path(cfg.out_dir) / task_id;
  fs::create_directories(dir);

  std::cout << "training task " << task_id << " with " << cfg.seeds.size()
            << " seed(s), " << cfg.hp.epochs << " epochs x "
            << cfg.hp.steps_per_epoch << " steps\n";

  const MultiSeedResult res = multi_seed_select(
      cfg.satellite, cfg.task, cfg.reward, cfg.episode, cfg.hp, cfg.seeds);

  checkpoint_save(res.best_net, (dir / "checkpoint_best.bin").string());
  write_stats_csv(res, (dir / "stats.csv").string());
  {
    std::ofstream f(dir / "manifest.json");
    if (!f) throw IoError("cannot open manifest.json");
    f << run_manifest(cfg, res.best_seed).dump(1) << "\n";
  }

  for (const SeedSummary& s : res.summaries) {
    if (s.failed) {
      std::cout << "seed " << s.seed << ": failed (" << s.error << ")\n";
    } else {
      std::cout << "seed " << s.seed << ": best epoch " << s.best_epoch
                << ", return " << s.best_epoch_return << "\n";
    }
  }
  std::cout << "selected seed " << res.best_seed << "; artifacts in "
            << dir.string() << "\n";
  return kExitOk;
}

int run_evaluation(const RunConfig& cfg, const std::string& ckpt_path,
                   int episodes_override, bool deterministic, int workers) {
  const MlpActorCritic net = checkpoint_load(ckpt_path);
  const std::string task_id = task_id_string(cfg.task);
  const fs::path dir = fs::path(cfg.out_dir) / task_id;
  fs::create_directories(dir);

  EvalOptions opt;
  opt.n_episodes = episodes_override > 0 ? episodes_override : cfg.eval_episodes;
  opt.start_angle_min_deg = cfg.eval_start_min_deg;
  opt.start_angle_max_deg = cfg.eval_start_max_deg;
  opt.episode_steps = cfg.eval_steps;
  opt.deterministic = deterministic;
  opt.seed = cfg.seeds.front();
  opt.workers = workers;

  std::cout << "evaluating " << task_id << " over " << opt.n_episodes
            << " episodes\n";
  const auto traces = run_eval_episodes(net, cfg.satellite, cfg.task,
                                        cfg.reward, cfg.episode, opt);

  const EnvelopeStats env = aggregate_envelope(traces);
  export_envelope_csv(env, (dir / "envelope.csv").string());
  export_trace_csv(traces.front(), (dir / "trace_000.csv").string());
  const ConvergenceReport rep =
      convergence_time(traces, cfg.task, cfg.task.threshold);
  export_convergence_json({rep}, (dir / "convergence.json").string());

  std::cout << "settled fraction " << rep.settled_fraction
            << ", mean settled time " << rep.mean_settled_time_s << " s\n";
  std::cout << "artifacts in " << dir.string() << "\n";
  return kExitOk;
}

std::vector<json> suite_task_specs() {
  std::vector<json> tasks;
  tasks.push_back({{"mode", "nominal"}, {"align", "full_attitude"}});
  for (const char* mode : {"failed_x", "failed_y", "failed_z"}) {
    for (const char* align : {"x", "y", "z"}) {
      tasks.push_back({{"mode", mode}, {"align", align}});
    }
  }
  return tasks;
}

int run_suite(const CommonArgs& args, bool deterministic) {
  const json base = load_config_json(args);
  for (const json& task : suite_task_specs()) {
    json j = base;
    j["task"] = task;
    const RunConfig cfg = resolve_config(args, j);
    run_training(cfg, args.workers);
    const fs::path ckpt =
        fs::path(cfg.out_dir) / task_id_string(cfg.task) / "checkpoint_best.bin";
    run_evaluation(cfg, ckpt.string(), 0, deterministic, args.workers);
  }
  return kExitOk;
}

int run_loop(const std::string& plan_path, const std::string& ckpt_path,
             const std::string& latency_mode, double latency_value,
             double latency_min, double latency_max,
             const std::string& replay_csv, uint64_t seed,
             const std::string& out_dir) {
  const ExperimentPlan plan = load_experiment_plan(plan_path);
  const MlpActorCritic net = checkpoint_load(ckpt_path);
  SatelliteParams params;

  LatencyModel latency;
  if (latency_mode == "fixed") {
    latency.mode = LatencyMode::Fixed;
    latency.fixed_s = latency_value;
  } else if (latency_mode == "uniform") {
    latency.mode = LatencyMode::Uniform;
    latency.min_s = latency_min;
    latency.max_s = latency_max;
  } else if (latency_mode == "replay") {
    latency.mode = LatencyMode::Replay;
    std::istringstream is(replay_csv);
    std::string cell;
    while (std::getline(is, cell, ',')) {
      latency.replay.push_back(std::stod(cell));
    }
  } else {
    throw ConfigError("unknown latency mode '" + latency_mode + "'");
  }

  PolicyResponder responder(net, params);
  const ExperimentResult res =
      run_experiment(plan, responder, latency, params, seed);

  std::cout << "verdict: " << verdict_string(res.verdict) << "\n";
  if (!res.diagnostic.empty()) {
    std::cout << "diagnostic: " << res.diagnostic << "\n";
  }
  if (!res.trace.steps.empty()) {
    std::cout << "final pointing error: "
              << res.trace.steps.back().pointing_error << " rad after "
              << res.trace.steps.back().time_s << " s\n";
  }
  fs::create_directories(out_dir);
  export_trace_csv(res.trace, (fs::path(out_dir) / "loop_trace.csv").string());

  return res.diagnostic.empty() ? kExitOk : kExitConfig;
}

int run_inspect(const std::string& ckpt_path) {
  const MlpActorCritic net = checkpoint_load(ckpt_path);
  std::cout << "checkpoint: " << ckpt_path << "\n";
  std::cout << "format version: " << detail::kCheckpointVersion << "\n";
  std::cout << "shapes: obs " << kObsDim << ", hidden " << kHidden << "x"
            << kHidden << ", actions " << kActDim << " (tanh)\n";
  std::cout << "parameter count: " << net.param_count() << "\n";
  std::cout << "parameter hash: " << parameter_hash(net) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RL workbench for smallsat attitude control"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string ckpt_path, plan_path;
  std::string latency_mode = "fixed";
  double latency_value = 0.5, latency_min = 0.5, latency_max = 1.0;
  std::string replay_csv;
  uint64_t loop_seed = 0;
  int episodes_override = 0;
  bool deterministic = true;

  auto add_common = [&](CLI::App* cmd, bool with_scale = true) {
    cmd->add_option("--config", common.config_path, "run config JSON (or a manifest)");
    cmd->add_option("--out", common.out_dir, "output root (default $SATRL_OUT or config)");
    cmd->add_option("--seed", common.seeds, "override training seeds");
    cmd->add_option("--workers", common.workers, "worker threads for evaluation");
    if (with_scale) {
      cmd->add_flag("--paper-scale", common.paper_scale,
                    "full-scale run: 40 epochs x 15000 steps, 10 seeds, "
                    "10000 eval episodes (long)");
    }
  };

  CLI::App* train = app.add_subcommand("train", "train controllers and select the best seed");
  add_common(train);

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint statistically");
  add_common(eval_cmd);
  eval_cmd->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  eval_cmd->add_option("--episodes", episodes_override, "evaluation episode count");
  eval_cmd->add_flag("--deterministic,!--stochastic", deterministic,
                     "act on the actor mean (default); --stochastic samples");

  CLI::App* suite = app.add_subcommand(
      "suite", "train and evaluate all 10 task configurations");
  add_common(suite);

  CLI::App* loop = app.add_subcommand("loop", "run a closed-loop protocol experiment");
  loop->add_option("--plan", plan_path, "experiment plan JSON")->required();
  loop->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  loop->add_option("--latency", latency_mode, "latency model")
      ->check(CLI::IsMember({"fixed", "uniform", "replay"}));
  loop->add_option("--latency-value", latency_value, "fixed latency seconds");
  loop->add_option("--latency-min", latency_min, "uniform latency lower bound");
  loop->add_option("--latency-max", latency_max, "uniform latency upper bound");
  loop->add_option("--latency-replay", replay_csv, "comma-separated latency sequence");
  loop->add_option("--seed", loop_seed, "latency sampling seed");
  loop->add_option("--out", common.out_dir, "output directory");

  CLI::App* inspect = app.add_subcommand("inspect", "print checkpoint metadata");
  inspect->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      return run_training(resolve_config(common, load_config_json(common)),
                          common.workers);
    }
    if (eval_cmd->parsed()) {
      return run_evaluation(resolve_config(common, load_config_json(common)),
                            ckpt_path, episodes_override, deterministic,
                            common.workers);
    }
    if (suite->parsed()) {
      return run_suite(common, deterministic);
    }
    if (loop->parsed()) {
      const std::string out = common.out_dir.empty()
                                  ? (std::getenv("SATRL_OUT")
                                         ? std::getenv("SATRL_OUT")
                                         : "runs")
                                  : common.out_dir;
      return run_loop(plan_path, ckpt_path, latency_mode, latency_value,
                      latency_min, latency_max, replay_csv, loop_seed, out);
    }
    if (inspect->parsed()) {
      return run_inspect(ckpt_path);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitIo;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
