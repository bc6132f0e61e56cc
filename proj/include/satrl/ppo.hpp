#pragma once

// Clipped-surrogate PPO with a KL early-stopping gate, GAE advantages, and
// multi-seed training with best-agent selection.
//
// The epoch buffer (15000 steps by default) is optimized for up to
// `update_passes` sweeps; each sweep reshuffles the full buffer and takes one
// Adam step per minibatch of `minibatch_size` transitions. The sweep loop
// exits early once the mean sampled KL of a sweep exceeds `kl_target`.
// Shuffling spans the whole buffer: consecutive transitions of one episode
// are strongly correlated, and stepping on contiguous slices lets each
// fragment drag the policy in its own direction.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "satrl/environment.hpp"
#include "satrl/errors.hpp"
#include "satrl/net.hpp"

namespace satrl {

struct Hyperparams {
  double gamma = 0.99;
  double kl_target = 0.035;
  int epochs = 40;
  double lr = 3e-4;
  int batch_size = 150;
  int minibatch_size = 32;
  double clip_epsilon = 0.2;
  double gae_lambda = 0.95;
  int update_passes = 10;
  int steps_per_epoch = 15000;
  double value_loss_coeff = 0.5;
  double entropy_coeff = 0.0;

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("hp: gamma in (0, 1]");
    if (!(clip_epsilon > 0.0)) throw ConfigError("hp: clip_epsilon > 0");
    if (minibatch_size > batch_size) {
      throw ConfigError("hp: minibatch_size must be <= batch_size");
    }
    if (epochs < 1 || steps_per_epoch < 1 || update_passes < 1) {
      throw ConfigError("hp: epochs, steps_per_epoch, update_passes >= 1");
    }
  }
};

struct RolloutBuffer {
  std::vector<std::array<double, kObsDim>> observations;
  std::vector<Eigen::Vector3d> actions;  // pre-clamp samples
  std::vector<double> log_probs;         // at collection time
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<char> dones;
  std::vector<double> advantages;
  std::vector<double> returns;
  // V(s_next) at horizon-timeout steps, 0 elsewhere. A timeout truncates an
  // episode rather than ending it (contrast rate violations, which are true
  // terminals), so its delta bootstraps the value of the state the episode
  // would have continued from. Empty means no truncation bootstrapping.
  std::vector<double> timeout_values;
  double bootstrap_value = 0.0;  // V(s_T) at buffer truncation

  // Episode bookkeeping for stats.
  std::vector<double> episode_returns;  // completed episodes only
  std::vector<int> episode_lengths;
  int discarded_episodes = 0;

  int size() const { return static_cast<int>(rewards.size()); }
};

struct UpdateStats {
  double mean_kl = 0.0;       // sampled KL of the final applied sweep
  double policy_loss = 0.0;
  double value_loss = 0.0;
  int sweeps = 0;             // full-buffer sweeps actually applied
  int early_stops = 0;        // 1 when the KL gate cut the sweep loop short
  bool aborted = false;       // non-finite loss, parameters restored
};

struct EpochStats {
  int epoch = 0;
  double mean_episode_return = 0.0;
  double mean_episode_length = 0.0;
  int episodes = 0;
  double mean_kl = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double wall_seconds = 0.0;
};

// Steps `env`, resetting on termination, until exactly n_steps transitions
// are stored. Actions are sampled from the Gaussian policy then clamped to
// [-1, 1] for the environment; the stored log-prob is of the pre-clamp
// sample. Episodes that blow up numerically are discarded and collection
// continues.
inline RolloutBuffer collect_rollouts(Environment& env,
                                      const MlpActorCritic& net, int n_steps,
                                      double progress, Rng& rng) {
  RolloutBuffer buf;
  buf.observations.reserve(n_steps);
  buf.actions.reserve(n_steps);
  buf.log_probs.reserve(n_steps);
  buf.rewards.reserve(n_steps);
  buf.values.reserve(n_steps);
  buf.dones.reserve(n_steps);

  const SatelliteParams& params = env.params();
  Observation obs = env.reset(progress);
  double episode_return = 0.0;
  int episode_length = 0;
  int episode_start = 0;

  while (buf.size() < n_steps) {
    const auto arr = observation_to_net_input(obs, params);
    const VectorXd x = Eigen::Map<const VectorXd>(arr.data(), kObsDim);
    const GaussianPolicyOutput pol = net.policy_forward(x);
    const double value = net.value_forward(x);

    Eigen::Vector3d sample;
    for (int i = 0; i < 3; ++i) {
      sample[i] = pol.mean[i] + pol.std[i] * normal(rng);
    }
    const double lp = log_prob(pol, sample);

    Action act;
    for (int i = 0; i < 3; ++i) act.a[i] = std::clamp(sample[i], -1.0, 1.0);

    StepResult r;
    try {
      r = env.step(act);
    } catch (const NumericalError&) {
      // Drop the partial episode and start over.
      buf.observations.resize(episode_start);
      buf.actions.resize(episode_start);
      buf.log_probs.resize(episode_start);
      buf.rewards.resize(episode_start);
      buf.values.resize(episode_start);
      buf.dones.resize(episode_start);
      buf.timeout_values.resize(episode_start);
      ++buf.discarded_episodes;
      obs = env.reset(progress);
      episode_return = 0.0;
      episode_length = 0;
      continue;
    }

    buf.observations.push_back(arr);
    buf.actions.push_back(sample);
    buf.log_probs.push_back(lp);
    buf.rewards.push_back(r.reward);
    buf.values.push_back(value);
    buf.dones.push_back(r.done ? 1 : 0);
    double timeout_v = 0.0;
    if (r.done && !r.info.rate_violation) {
      const auto next_arr = observation_to_net_input(r.observation, params);
      const VectorXd nx = Eigen::Map<const VectorXd>(next_arr.data(), kObsDim);
      timeout_v = net.value_forward(nx);
    }
    buf.timeout_values.push_back(timeout_v);
    episode_return += r.reward;
    ++episode_length;

    if (r.done) {
      buf.episode_returns.push_back(episode_return);
      buf.episode_lengths.push_back(episode_length);
      episode_return = 0.0;
      episode_length = 0;
      episode_start = buf.size();
      obs = env.reset(progress);
    } else {
      obs = r.observation;
    }
  }

  // Bootstrap value for the truncated trailing episode.
  if (buf.dones.back()) {
    buf.bootstrap_value = 0.0;
  } else {
    const auto arr = observation_to_net_input(obs, params);
    const VectorXd x = Eigen::Map<const VectorXd>(arr.data(), kObsDim);
    buf.bootstrap_value = net.value_forward(x);
  }
  return buf;
}

// GAE: A_t = delta_t + gamma*lambda*(1 - done_t)*A_{t+1},
// delta_t = r_t + gamma*(1 - done_t)*V_{t+1} - V_t; returns = A + V.
// Horizon timeouts are truncations, not terminals: when timeout_values is
// populated, delta at a timeout step bootstraps V(s_next) instead of zero
// while the advantage recursion still restarts across the episode boundary.
inline void compute_gae(RolloutBuffer& buf, double gamma, double lambda) {
  const int n = buf.size();
  if (static_cast<int>(buf.values.size()) != n) {
    throw UsageError("compute_gae: values not populated");
  }
  const bool has_timeout = static_cast<int>(buf.timeout_values.size()) == n;
  buf.advantages.assign(n, 0.0);
  buf.returns.assign(n, 0.0);
  double adv = 0.0;
  for (int t = n - 1; t >= 0; --t) {
    const double not_done = buf.dones[t] ? 0.0 : 1.0;
    double next_value = (t + 1 < n) ? buf.values[t + 1] : buf.bootstrap_value;
    next_value *= not_done;
    if (has_timeout && buf.dones[t]) {
      next_value = buf.timeout_values[t];
    }
    const double delta = buf.rewards[t] + gamma * next_value - buf.values[t];
    adv = delta + gamma * lambda * not_done * adv;
    buf.advantages[t] = adv;
    buf.returns[t] = adv + buf.values[t];
  }
}

inline void normalize_advantages(RolloutBuffer& buf) {
  const int n = buf.size();
  double mean = std::accumulate(buf.advantages.begin(), buf.advantages.end(), 0.0) / n;
  double var = 0.0;
  for (double a : buf.advantages) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / n) + 1e-8;
  for (double& a : buf.advantages) a = (a - mean) / sd;
}

// One PPO update over the buffer. Loss per sample:
//   -min(rho*A, clip(rho, 1-eps, 1+eps)*A) + value_loss_coeff*(V - R)^2
// with rho = exp(logpi_new - logpi_old).
inline UpdateStats ppo_update(const RolloutBuffer& buf, MlpActorCritic& net,
                              const Hyperparams& hp, AdamState& adam, Rng& rng) {
  UpdateStats stats;
  const int n = buf.size();
  const VectorXd params_before = net.flatten();

  double pi_loss_sum = 0.0, v_loss_sum = 0.0;
  long loss_terms = 0;
  double last_sweep_kl = 0.0;

  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);

  for (int sweep = 0; sweep < hp.update_passes; ++sweep) {
    std::shuffle(idx.begin(), idx.end(), rng);
    ++stats.sweeps;
    double sweep_kl = 0.0;
    for (size_t mb_start = 0; mb_start < idx.size();
         mb_start += hp.minibatch_size) {
      const size_t mb_end =
          std::min(idx.size(), mb_start + static_cast<size_t>(hp.minibatch_size));
      const int mb_n = static_cast<int>(mb_end - mb_start);

      auto actor_grads = net.actor().zero_like();
      auto critic_grads = net.critic().zero_like();
      Eigen::Vector3d log_std_grad = Eigen::Vector3d::Zero();
      double mb_pi_loss = 0.0, mb_v_loss = 0.0, mb_kl = 0.0;

      for (size_t s = mb_start; s < mb_end; ++s) {
        const int t = idx[s];
        const VectorXd x = Eigen::Map<const VectorXd>(
            buf.observations[t].data(), kObsDim);

        Mlp::Tape actor_tape;
        const GaussianPolicyOutput pol = net.policy_forward(x, &actor_tape);
        const double lp_new = log_prob(pol, buf.actions[t]);
        const double ratio = std::exp(lp_new - buf.log_probs[t]);
        const double adv = buf.advantages[t];

        const double unclipped = ratio * adv;
        const double clipped =
            std::clamp(ratio, 1.0 - hp.clip_epsilon, 1.0 + hp.clip_epsilon) *
            adv;
        mb_pi_loss += -std::min(unclipped, clipped);
        mb_kl += buf.log_probs[t] - lp_new;

        // d(-min)/d(lp_new): the clipped branch has zero gradient in rho.
        double dloss_dlp = 0.0;
        if (unclipped <= clipped) {
          dloss_dlp = -ratio * adv;
        }
        if (hp.entropy_coeff != 0.0) {
          // Gaussian entropy depends only on log-std; fold into its grad.
          for (int i = 0; i < 3; ++i) log_std_grad[i] -= hp.entropy_coeff;
        }

        if (dloss_dlp != 0.0) {
          // lp depends on mean (through tanh) and log-std.
          VectorXd mean_adjoint = VectorXd::Zero(kActDim);
          for (int i = 0; i < 3; ++i) {
            const double sigma = pol.std[i];
            const double diff = buf.actions[t][i] - pol.mean[i];
            const double dlp_dmean = diff / (sigma * sigma);
            const double dtanh = 1.0 - pol.mean[i] * pol.mean[i];
            mean_adjoint[i] = dloss_dlp * dlp_dmean * dtanh;
            const double dlp_dlogstd = diff * diff / (sigma * sigma) - 1.0;
            log_std_grad[i] += dloss_dlp * dlp_dlogstd;
          }
          net.actor().backward(actor_tape, mean_adjoint, actor_grads);
        }

        Mlp::Tape critic_tape;
        const double v = net.value_forward(x, &critic_tape);
        const double verr = v - buf.returns[t];
        mb_v_loss += verr * verr;
        VectorXd v_adjoint(1);
        v_adjoint[0] = hp.value_loss_coeff * 2.0 * verr;
        net.critic().backward(critic_tape, v_adjoint, critic_grads);
      }

      const double inv_n = 1.0 / mb_n;
      mb_pi_loss *= inv_n;
      mb_v_loss *= inv_n;
      mb_kl *= inv_n;
      if (!std::isfinite(mb_pi_loss) || !std::isfinite(mb_v_loss)) {
        net.unflatten(params_before);
        stats.aborted = true;
        return stats;
      }
      pi_loss_sum += mb_pi_loss;
      v_loss_sum += hp.value_loss_coeff * mb_v_loss;
      sweep_kl += mb_kl * mb_n;
      ++loss_terms;

      // Assemble the flat gradient in parameter order and step.
      MlpActorCritic grad_holder = net;  // reuse layout
      for (size_t li = 0; li < actor_grads.size(); ++li) {
        grad_holder.actor().layers()[li].W = actor_grads[li].W * inv_n;
        grad_holder.actor().layers()[li].b = actor_grads[li].b * inv_n;
      }
      grad_holder.log_std() = log_std_grad * inv_n;
      for (size_t li = 0; li < critic_grads.size(); ++li) {
        grad_holder.critic().layers()[li].W = critic_grads[li].W * inv_n;
        grad_holder.critic().layers()[li].b = critic_grads[li].b * inv_n;
      }
      VectorXd flat_params = net.flatten();
      const VectorXd flat_grads = grad_holder.flatten();
      adam_update(flat_params, flat_grads, adam, hp.lr);
      if (!flat_params.allFinite()) {
        net.unflatten(params_before);
        stats.aborted = true;
        return stats;
      }
      net.unflatten(flat_params);
      net.clamp_log_std();
    }
    last_sweep_kl = sweep_kl / static_cast<double>(idx.size());
    if (last_sweep_kl > hp.kl_target) {
      ++stats.early_stops;
      break;
    }
  }

  stats.mean_kl = last_sweep_kl;
  stats.policy_loss = loss_terms > 0 ? pi_loss_sum / loss_terms : 0.0;
  stats.value_loss = loss_terms > 0 ? v_loss_sum / loss_terms : 0.0;
  return stats;
}

struct TrainResult {
  MlpActorCritic best_net;       // parameters at the best epoch
  MlpActorCritic final_net;
  std::vector<EpochStats> stats;
  double best_epoch_return = 0.0;
  int best_epoch = 0;
};

// Full training run for one task and seed: epochs x (collect, GAE, update).
// Curriculum progress passed to sampling is epoch/epochs.
inline TrainResult train_controller(const SatelliteParams& params,
                                    const TaskSpec& task,
                                    const RewardConfig& reward,
                                    const EpisodeConfig& episode,
                                    const Hyperparams& hp, uint64_t seed) {
  hp.validate();
  Environment env(params, task, reward, episode, derive_seed(seed, 1));
  MlpActorCritic net(derive_seed(seed, 2));
  Rng sample_rng(derive_seed(seed, 3));
  Rng shuffle_rng(derive_seed(seed, 4));
  AdamState adam;

  TrainResult result;
  result.best_epoch_return = -std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double progress =
        hp.epochs > 1 ? static_cast<double>(epoch) / hp.epochs : 1.0;

    RolloutBuffer buf =
        collect_rollouts(env, net, hp.steps_per_epoch, progress, sample_rng);
    compute_gae(buf, hp.gamma, hp.gae_lambda);
    normalize_advantages(buf);
    const UpdateStats up = ppo_update(buf, net, hp, adam, shuffle_rng);

    EpochStats es;
    es.epoch = epoch + 1;
    es.episodes = static_cast<int>(buf.episode_returns.size());
    if (es.episodes > 0) {
      es.mean_episode_return =
          std::accumulate(buf.episode_returns.begin(),
                          buf.episode_returns.end(), 0.0) /
          es.episodes;
      es.mean_episode_length =
          std::accumulate(buf.episode_lengths.begin(),
                          buf.episode_lengths.end(), 0.0) /
          es.episodes;
    }
    es.mean_kl = up.mean_kl;
    es.policy_loss = up.policy_loss;
    es.value_loss = up.value_loss;
    es.wall_seconds = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
    result.stats.push_back(es);

    if (es.episodes > 0 && es.mean_episode_return > result.best_epoch_return) {
      result.best_epoch_return = es.mean_episode_return;
      result.best_epoch = es.epoch;
      result.best_net = net;
    }
  }
  result.final_net = net;
  if (result.best_epoch == 0) {
    result.best_net = net;  // no completed episode ever; keep final
  }
  return result;
}

struct SeedSummary {
  uint64_t seed = 0;
  double best_epoch_return = 0.0;
  int best_epoch = 0;
  bool failed = false;
  std::string error;
};

struct MultiSeedResult {
  MlpActorCritic best_net;
  uint64_t best_seed = 0;
  std::vector<SeedSummary> summaries;
  std::vector<TrainResult> runs;  // aligned with summaries; empty on failure
  double mean_best_return = 0.0;
  double var_best_return = 0.0;   // population variance over per-seed bests
};

// Trains one controller per seed and selects the checkpoint whose best-epoch
// return is maximal. Crashed seeds are excluded from selection and reported.
inline MultiSeedResult multi_seed_select(const SatelliteParams& params,
                                         const TaskSpec& task,
                                         const RewardConfig& reward,
                                         const EpisodeConfig& episode,
                                         const Hyperparams& hp,
                                         const std::vector<uint64_t>& seeds) {
  if (seeds.empty()) {
    throw ConfigError("multi_seed_select: at least one seed required");
  }
  MultiSeedResult out;
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> bests;

  for (uint64_t seed : seeds) {
    SeedSummary s;
    s.seed = seed;
    try {
      TrainResult r =
          train_controller(params, task, reward, episode, hp, seed);
      s.best_epoch_return = r.best_epoch_return;
      s.best_epoch = r.best_epoch;
      bests.push_back(r.best_epoch_return);
      if (r.best_epoch_return > best) {
        best = r.best_epoch_return;
        out.best_net = r.best_net;
        out.best_seed = seed;
      }
      out.runs.push_back(std::move(r));
    } catch (const std::exception& e) {
      s.failed = true;
      s.error = e.what();
      out.runs.emplace_back();
    }
    out.summaries.push_back(s);
  }
  if (bests.empty()) {
    throw NumericalError("multi_seed_select: every seed failed");
  }
  const double mean =
      std::accumulate(bests.begin(), bests.end(), 0.0) / bests.size();
  double var = 0.0;
  for (double b : bests) var += (b - mean) * (b - mean);
  out.mean_best_return = mean;
  out.var_best_return = var / bests.size();
  return out;
}

}  // namespace satrl
