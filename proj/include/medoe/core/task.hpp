#pragma once

#include <concepts>
#include <span>
#include <string>
#include <vector>

#include "medoe/core/errors.hpp"
#include "medoe/core/rng.hpp"

namespace medoe {

// Static description of a common-reward multi-agent episodic task.
struct TaskSpec {
  std::string task_id;
  int num_agents = 0;
  std::vector<int> action_counts;  // per agent
  std::vector<int> obs_dims;       // per agent
  int num_state_ids = 0;           // > 0 when a tabular index is available
  int horizon = 0;
  double discount = 1.0;

  int action_count(int agent) const { return action_counts.at(static_cast<std::size_t>(agent)); }
  int obs_dim(int agent) const { return obs_dims.at(static_cast<std::size_t>(agent)); }

  void validate() const {
    if (num_agents <= 0) throw ConfigError(task_id + ": num_agents must be positive");
    if (static_cast<int>(action_counts.size()) != num_agents ||
        static_cast<int>(obs_dims.size()) != num_agents)
      throw ConfigError(task_id + ": per-agent action/observation sizes do not match num_agents");
    for (int a : action_counts)
      if (a <= 0) throw ConfigError(task_id + ": action count must be positive");
    for (int d : obs_dims)
      if (d <= 0) throw ConfigError(task_id + ": observation dimension must be positive");
    if (horizon <= 0) throw ConfigError(task_id + ": horizon must be positive");
    if (!(discount > 0.0 && discount <= 1.0)) throw ConfigError(task_id + ": discount must lie in (0,1]");
  }
};

// Per-agent observation: a flat real vector plus the tabular state index (or -1).
struct Observation {
  std::vector<double> features;
  int state_id = -1;
};

using JointObservation = std::vector<Observation>;

// Outcome of a single environment step.
struct StepOutcome {
  double reward = 0.0;
  bool done = false;       // terminal state reached
  bool truncated = false;  // horizon expired on a non-terminal step
};

struct Transition {
  JointObservation obs;
  std::vector<int> actions;
  double reward = 0.0;
  JointObservation next_obs;
  bool done = false;
  bool truncated = false;
};

// An environment: an immutable task description that advances a worker-local State.
template <class E>
concept Environment = requires(const E& env, typename E::State& state, const typename E::State& cstate,
                               std::span<const int> joint_action, RngStream& rng, int agent) {
  { env.spec() } -> std::convertible_to<const TaskSpec&>;
  { env.reset(rng) } -> std::same_as<typename E::State>;
  { env.step(state, joint_action, rng) } -> std::same_as<StepOutcome>;
  { env.observe(cstate, agent) } -> std::same_as<Observation>;
  { env.expert_doe(cstate, agent) } -> std::convertible_to<double>;
};

template <Environment E>
JointObservation observe_all(const E& env, const typename E::State& state) {
  JointObservation out;
  out.reserve(static_cast<std::size_t>(env.spec().num_agents));
  for (int i = 0; i < env.spec().num_agents; ++i) out.push_back(env.observe(state, i));
  return out;
}

inline void check_joint_action(const TaskSpec& spec, std::span<const int> joint_action) {
  if (static_cast<int>(joint_action.size()) != spec.num_agents)
    throw std::invalid_argument(spec.task_id + ": joint action has wrong number of agents");
  for (int i = 0; i < spec.num_agents; ++i)
    if (joint_action[static_cast<std::size_t>(i)] < 0 ||
        joint_action[static_cast<std::size_t>(i)] >= spec.action_count(i))
      throw std::invalid_argument(spec.task_id + ": action index out of range for agent " + std::to_string(i));
}

// Full Transition record around a step (the rollout collector uses the leaner StepOutcome path).
template <Environment E>
Transition step_transition(const E& env, typename E::State& state, std::span<const int> joint_action,
                           RngStream& rng) {
  Transition t;
  t.obs = observe_all(env, state);
  t.actions.assign(joint_action.begin(), joint_action.end());
  const StepOutcome out = env.step(state, joint_action, rng);
  t.reward = out.reward;
  t.done = out.done;
  t.truncated = out.truncated;
  t.next_obs = observe_all(env, state);
  return t;
}

}  // namespace medoe
