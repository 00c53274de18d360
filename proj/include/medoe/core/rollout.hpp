#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "medoe/algo/boosts.hpp"
#include "medoe/core/rng.hpp"
#include "medoe/core/task.hpp"
#include "medoe/doe/classifier.hpp"
#include "medoe/nn/approximator.hpp"
#include "medoe/nn/distributions.hpp"

namespace medoe {

// Per-agent samples. Index k = step * num_envs + env.
struct AgentRollout {
  std::vector<Observation> obs;
  std::vector<int> actions;
  std::vector<double> log_prob_behaviour;  // log pi_old(a | o; T_i)
  std::vector<double> log_prob_base;       // log pi_old(a | o; T_base)
  std::vector<double> doe;                 // classifier value at o
  std::vector<double> temperature;         // T_i used to sample a
  std::vector<double> values;              // V_old(o)
  std::vector<double> next_values;         // V_old(o') before any auto-reset (bootstrap values)

  void reserve(std::size_t n) {
    obs.reserve(n);
    actions.reserve(n);
    log_prob_behaviour.reserve(n);
    log_prob_base.reserve(n);
    doe.reserve(n);
    temperature.reserve(n);
    values.reserve(n);
    next_values.reserve(n);
  }
  std::size_t size() const { return actions.size(); }
};

struct RolloutBatch {
  int n_steps = 0;
  int num_envs = 0;
  std::vector<AgentRollout> agents;
  std::vector<double> rewards;
  std::vector<char> dones;
  std::vector<char> truncated;

  std::size_t size() const { return rewards.size(); }
  std::size_t index(int step, int env) const { return static_cast<std::size_t>(step * num_envs + env); }
};

struct EpisodeStats {
  std::vector<double> returns;  // completed episodes, in completion order
  std::int64_t episodes = 0;
};

// Steps `num_envs` copies of a task in lockstep. Each copy owns its state and two RNG streams
// (dynamics and action sampling) keyed by (seed, env index), so batches do not depend on the
// order in which copies are stepped. Copies reset automatically after done/truncated.
template <Environment E>
class VecRunner {
 public:
  VecRunner(const E& env, int num_envs, std::uint64_t seed) : env_(&env), num_envs_(num_envs) {
    if (num_envs <= 0) throw std::invalid_argument("VecRunner: num_envs must be positive");
    env.spec().validate();
    for (int e = 0; e < num_envs; ++e) {
      dyn_rng_.emplace_back(seed, static_cast<std::uint64_t>(2 * e));
      act_rng_.emplace_back(seed, static_cast<std::uint64_t>(2 * e + 1));
      states_.push_back(env.reset(dyn_rng_.back()));
      running_return_.push_back(0.0);
    }
  }

  int num_envs() const { return num_envs_; }
  std::int64_t env_steps() const { return env_steps_; }
  const E& env() const { return *env_; }
  const std::vector<typename E::State>& states() const { return states_; }
  EpisodeStats& episode_stats() { return stats_; }

  RolloutBatch collect(std::span<const FunctionApproximator> policies, std::span<const FunctionApproximator> critics,
                       std::span<const DoEClassifier> classifiers, const BoostConfig& boosts, int n_steps) {
    const TaskSpec& spec = env_->spec();
    const int A = spec.num_agents;
    if (static_cast<int>(policies.size()) != A || static_cast<int>(critics.size()) != A ||
        static_cast<int>(classifiers.size()) != A)
      throw ConfigError("collect_rollout: need one policy, critic and classifier per agent");
    if (n_steps <= 0) throw std::invalid_argument("collect_rollout: n_steps must be positive");
    for (int i = 0; i < A; ++i)
      if (policies[static_cast<std::size_t>(i)].output_dim() != spec.action_count(i))
        throw ConfigError("collect_rollout: policy output does not match the action count");

    RolloutBatch batch;
    batch.n_steps = n_steps;
    batch.num_envs = num_envs_;
    batch.agents.resize(static_cast<std::size_t>(A));
    const auto total = static_cast<std::size_t>(n_steps * num_envs_);
    for (auto& a : batch.agents) a.reserve(total);
    batch.rewards.reserve(total);
    batch.dones.reserve(total);
    batch.truncated.reserve(total);

    std::vector<JointObservation> obs(static_cast<std::size_t>(num_envs_));
    std::vector<int> joint(static_cast<std::size_t>(A));
    std::vector<double> probs;
    for (int t = 0; t < n_steps; ++t) {
      for (int e = 0; e < num_envs_; ++e) obs[static_cast<std::size_t>(e)] = observe_all(*env_, states_[static_cast<std::size_t>(e)]);
      // Per agent: logits and values for every copy at once.
      std::vector<Matrix> logits(static_cast<std::size_t>(A));
      for (int i = 0; i < A; ++i) {
        InputBatch in = agent_inputs(obs, i);
        logits[static_cast<std::size_t>(i)] = policies[static_cast<std::size_t>(i)].forward(in);
        Matrix v = critics[static_cast<std::size_t>(i)].forward(in);
        auto& ar = batch.agents[static_cast<std::size_t>(i)];
        for (int e = 0; e < num_envs_; ++e) {
          ar.obs.push_back(obs[static_cast<std::size_t>(e)][static_cast<std::size_t>(i)]);
          ar.values.push_back(v(0, e));
        }
      }
      for (int e = 0; e < num_envs_; ++e) {
        auto& st = states_[static_cast<std::size_t>(e)];
        for (int i = 0; i < A; ++i) {
          const auto& o = obs[static_cast<std::size_t>(e)][static_cast<std::size_t>(i)];
          const double d = classifiers[static_cast<std::size_t>(i)].evaluate(*env_, st, i, o);
          if (!(d >= 0.0 && d <= 1.0)) throw NumericError("classifier produced a value outside [0,1]");
          const double T = boosted_temperature(d, boosts);
          const Matrix& L = logits[static_cast<std::size_t>(i)];
          std::span<const double> z(L.col(e).data(), static_cast<std::size_t>(L.rows()));
          probs.resize(z.size());
          softmax_into(z, T, probs);
          const int a = static_cast<int>(act_rng_[static_cast<std::size_t>(e)].categorical(probs));
          joint[static_cast<std::size_t>(i)] = a;
          auto& ar = batch.agents[static_cast<std::size_t>(i)];
          ar.actions.push_back(a);
          ar.doe.push_back(d);
          ar.temperature.push_back(T);
          ar.log_prob_behaviour.push_back(std::log(probs[static_cast<std::size_t>(a)]));
          ar.log_prob_base.push_back(T == boosts.base_temperature
                                         ? ar.log_prob_behaviour.back()
                                         : log_softmax_at(z, boosts.base_temperature, static_cast<std::size_t>(a)));
        }
        const StepOutcome out = env_->step(st, joint, dyn_rng_[static_cast<std::size_t>(e)]);
        batch.rewards.push_back(out.reward);
        batch.dones.push_back(out.done ? 1 : 0);
        batch.truncated.push_back(out.truncated ? 1 : 0);
        running_return_[static_cast<std::size_t>(e)] += out.reward;
        // Observations after the step (pre-reset) for bootstrapping.
        obs[static_cast<std::size_t>(e)] = observe_all(*env_, st);
      }
      for (int i = 0; i < A; ++i) {
        Matrix v = critics[static_cast<std::size_t>(i)].forward(agent_inputs(obs, i));
        for (int e = 0; e < num_envs_; ++e) batch.agents[static_cast<std::size_t>(i)].next_values.push_back(v(0, e));
      }
      for (int e = 0; e < num_envs_; ++e) {
        const std::size_t k = batch.index(t, e);
        if (batch.dones[k] || batch.truncated[k]) {
          stats_.returns.push_back(running_return_[static_cast<std::size_t>(e)]);
          stats_.episodes += 1;
          running_return_[static_cast<std::size_t>(e)] = 0.0;
          states_[static_cast<std::size_t>(e)] = env_->reset(dyn_rng_[static_cast<std::size_t>(e)]);
        }
      }
      env_steps_ += num_envs_;
    }
    return batch;
  }

 private:
  static InputBatch agent_inputs(const std::vector<JointObservation>& obs, int agent) {
    std::vector<Observation> col;
    col.reserve(obs.size());
    for (const auto& jo : obs) col.push_back(jo[static_cast<std::size_t>(agent)]);
    return InputBatch::from(col);
  }

  const E* env_;
  int num_envs_;
  std::vector<RngStream> dyn_rng_;
  std::vector<RngStream> act_rng_;
  std::vector<typename E::State> states_;
  std::vector<double> running_return_;
  std::int64_t env_steps_ = 0;
  EpisodeStats stats_;
};

// One-shot collection from freshly reset environments.
template <Environment E>
RolloutBatch collect_rollout(const E& env, std::span<const FunctionApproximator> policies,
                             std::span<const FunctionApproximator> critics, std::span<const DoEClassifier> classifiers,
                             const BoostConfig& boosts, int n_steps, int num_envs, std::uint64_t seed) {
  VecRunner<E> runner(env, num_envs, seed);
  return runner.collect(policies, critics, classifiers, boosts, n_steps);
}

struct EvalResult {
  double mean_return = 0.0;
  double ci95 = 0.0;
  std::vector<double> returns;
};

// 1.96 x standard error of the per-episode returns.
inline EvalResult summarize_returns(std::vector<double> returns) {
  EvalResult r;
  r.returns = std::move(returns);
  const auto n = static_cast<double>(r.returns.size());
  if (r.returns.empty()) return r;
  double sum = 0.0;
  for (double x : r.returns) sum += x;
  r.mean_return = sum / n;
  if (r.returns.size() > 1) {
    double ss = 0.0;
    for (double x : r.returns) ss += (x - r.mean_return) * (x - r.mean_return);
    r.ci95 = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return r;
}

// Runs `episodes` full episodes sampling every agent at `temperature`. Episode k uses the streams
// keyed (seed, 2k) for dynamics and (seed, 2k+1) for actions.
template <Environment E>
EvalResult evaluate_policies(const E& env, std::span<const FunctionApproximator> policies, double temperature,
                             int episodes, std::uint64_t seed) {
  const int A = env.spec().num_agents;
  if (static_cast<int>(policies.size()) != A) throw ConfigError("evaluate: need one policy per agent");
  std::vector<double> returns;
  returns.reserve(static_cast<std::size_t>(episodes));
  std::vector<int> joint(static_cast<std::size_t>(A));
  std::vector<double> probs;
  for (int k = 0; k < episodes; ++k) {
    RngStream dyn(seed, static_cast<std::uint64_t>(2 * k));
    RngStream act(seed, static_cast<std::uint64_t>(2 * k + 1));
    auto st = env.reset(dyn);
    double ret = 0.0;
    while (true) {
      for (int i = 0; i < A; ++i) {
        const Vector z = policies[static_cast<std::size_t>(i)].forward_one(env.observe(st, i));
        probs.resize(static_cast<std::size_t>(z.size()));
        softmax_into(std::span<const double>(z.data(), static_cast<std::size_t>(z.size())), temperature, probs);
        joint[static_cast<std::size_t>(i)] = static_cast<int>(act.categorical(probs));
      }
      const StepOutcome out = env.step(st, joint, dyn);
      ret += out.reward;
      if (out.done || out.truncated) break;
    }
    returns.push_back(ret);
  }
  return summarize_returns(std::move(returns));
}

}  // namespace medoe
