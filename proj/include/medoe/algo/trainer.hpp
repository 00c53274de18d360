#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "medoe/algo/boosts.hpp"
#include "medoe/algo/ppo.hpp"
#include "medoe/core/rng.hpp"
#include "medoe/core/rollout.hpp"
#include "medoe/doe/classifier.hpp"

namespace medoe {

// Fixed-capacity buffer keeping the most recent observations.
class ObservationRing {
 public:
  explicit ObservationRing(std::size_t capacity = 0) : capacity_(capacity) { data_.reserve(capacity); }

  void push(const Observation& o) {
    if (capacity_ == 0) return;
    if (data_.size() < capacity_) {
      data_.push_back(o);
    } else {
      data_[head_] = o;
      head_ = (head_ + 1) % capacity_;
    }
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return data_.size(); }

  // Oldest first.
  std::vector<Observation> snapshot() const {
    std::vector<Observation> out;
    out.reserve(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) out.push_back(data_[(head_ + i) % data_.size()]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Observation> data_;
};

enum class TrainerKind { ippo, medoe };

// Everything the adjustment/IPPO loop needs besides the team itself.
struct TrainingSetup {
  TrainerKind trainer = TrainerKind::ippo;
  PPOConfig ppo;
  BoostConfig boosts;                       // used by the MEDoE trainer
  std::vector<DoEClassifier> classifiers;   // per agent; drive boosts (MEDoE) or only DoE logging (IPPO)
  std::int64_t budget_steps = 0;            // environment steps for this stage
  std::int64_t eval_every = 0;              // 0 disables periodic evaluation
  int eval_episodes = 100;
  std::uint64_t seed = 0;
};

struct EvalPoint {
  std::int64_t stage_step = 0;
  EvalResult result;
  std::vector<double> doe_rate;  // mean classifier value over training samples since the last point
  int index = 0;
};

using EvalCallback = std::function<void(const EvalPoint&, const Team&)>;

struct TrainingOutcome {
  std::int64_t steps = 0;
  std::int64_t updates = 0;
  std::vector<EvalPoint> evals;
  UpdateDiagnostics last_diagnostics;
};

// Collect -> update loop for `budget_steps` environment steps. Evaluations (at T_base) run at step 0,
// every `eval_every` steps and at the end.
template <Environment E>
TrainingOutcome train_team(const E& env, Team& team, const TrainingSetup& setup, const EvalCallback& on_eval = {}) {
  setup.ppo.validate();
  const TaskSpec& spec = env.spec();
  if (team.size() != spec.num_agents) throw ConfigError("train: team size does not match the task");
  if (static_cast<int>(setup.classifiers.size()) != spec.num_agents)
    throw ConfigError("train: need one DoE classifier per agent");
  for (int i = 0; i < spec.num_agents; ++i) {
    const auto& c = setup.classifiers[static_cast<std::size_t>(i)];
    if (c.kind() == DoEClassifier::Kind::learned && c.network().kind() == ApproxKind::mlp &&
        c.network().input_dim() != spec.obs_dim(i))
      throw ConfigError("train: classifier/observation dimension mismatch");
  }
  if (setup.trainer == TrainerKind::medoe) {
    setup.boosts.validate();
    if (team.priors.size() != team.actors.size()) throw ConfigError("medoe: every agent needs a behaviour prior");
  }
  if (team.optimizers.size() != team.actors.size()) team.reset_optimizers(setup.ppo);

  const BoostConfig collection_boosts =
      setup.trainer == TrainerKind::medoe
          ? setup.boosts
          : BoostConfig::unboosted(setup.ppo.temperature, setup.ppo.entropy, setup.ppo.kl, setup.ppo.clip);

  VecRunner<E> runner(env, setup.ppo.num_envs, derive_seed(setup.seed, "rollout"));
  RngStream update_rng(derive_seed(setup.seed, "update"));
  const std::uint64_t eval_seed = derive_seed(setup.seed, "eval");
  const std::int64_t per_update = static_cast<std::int64_t>(setup.ppo.n_steps) * setup.ppo.num_envs;

  TrainingOutcome outcome;
  std::vector<double> doe_sum(static_cast<std::size_t>(spec.num_agents), 0.0);
  std::int64_t doe_count = 0;
  std::int64_t next_eval = setup.eval_every;

  auto evaluate = [&](std::int64_t step) {
    EvalPoint pt;
    pt.stage_step = step;
    pt.index = static_cast<int>(outcome.evals.size());
    pt.result = evaluate_policies(env, std::span<const FunctionApproximator>(team.actors), setup.ppo.temperature,
                                  setup.eval_episodes, derive_seed(eval_seed, static_cast<std::uint64_t>(pt.index)));
    pt.doe_rate.resize(doe_sum.size());
    for (std::size_t i = 0; i < doe_sum.size(); ++i)
      pt.doe_rate[i] = doe_count > 0 ? doe_sum[i] / static_cast<double>(doe_count) : 0.0;
    std::fill(doe_sum.begin(), doe_sum.end(), 0.0);
    doe_count = 0;
    if (on_eval) on_eval(pt, team);
    outcome.evals.push_back(std::move(pt));
  };

  if (setup.eval_every > 0) evaluate(0);
  while (outcome.steps + per_update <= setup.budget_steps) {
    RolloutBatch batch =
        runner.collect(team.actors, team.critics, setup.classifiers, collection_boosts, setup.ppo.n_steps);
    for (std::size_t i = 0; i < batch.agents.size(); ++i)
      for (double d : batch.agents[i].doe) doe_sum[i] += d;
    doe_count += static_cast<std::int64_t>(batch.size());
    outcome.last_diagnostics = setup.trainer == TrainerKind::medoe
                                   ? medoe_update(team, batch, setup.boosts, setup.ppo, update_rng)
                                   : ippo_update(team, batch, setup.ppo, update_rng);
    outcome.steps += per_update;
    outcome.updates += 1;
    if (setup.eval_every > 0 && outcome.steps >= next_eval) {
      evaluate(outcome.steps);
      while (next_eval <= outcome.steps) next_eval += setup.eval_every;
    }
  }
  if (setup.eval_every > 0 && (outcome.evals.empty() || outcome.evals.back().stage_step != outcome.steps))
    evaluate(outcome.steps);
  return outcome;
}

// ---------------------------------------------------------------------------------------------
// Source stage

struct SourceStopRule {
  double known_max = 1.0;
  double fraction = 0.9;      // stop when the recent mean return reaches fraction * known_max
  int window = 100;           // episodes in the moving mean
  std::int64_t min_steps = 0; // keep training at least this long (e.g. until the buffers are full)
  std::int64_t max_steps = 0; // hard cap
};

struct SourceResult {
  Team team;
  std::vector<ObservationRing> buffers;
  std::int64_t steps = 0;
  bool converged = false;
  double final_mean = 0.0;
};

// IPPO on a drill until the recent training-episode mean reaches the threshold or the cap is hit.
// Keeps the most recent `buffer_capacity` observations of every agent.
template <Environment E>
SourceResult train_source_stage(const E& env, Team team, const PPOConfig& cfg, const SourceStopRule& stop,
                                std::size_t buffer_capacity, std::uint64_t seed) {
  cfg.validate();
  const int A = env.spec().num_agents;
  if (team.size() != A) throw ConfigError("source stage: team size does not match the task");
  team.priors.clear();
  team.reset_optimizers(cfg);
  SourceResult res;
  res.buffers.assign(static_cast<std::size_t>(A), ObservationRing(buffer_capacity));
  std::vector<DoEClassifier> classifiers(static_cast<std::size_t>(A), DoEClassifier::constant(1.0));
  const BoostConfig boosts = BoostConfig::unboosted(cfg.temperature, cfg.entropy, 0.0, cfg.clip);
  VecRunner<E> runner(env, cfg.num_envs, derive_seed(seed, "rollout"));
  RngStream update_rng(derive_seed(seed, "update"));
  const std::int64_t per_update = static_cast<std::int64_t>(cfg.n_steps) * cfg.num_envs;
  std::deque<double> recent;
  std::size_t seen = 0;
  const double threshold = stop.fraction * stop.known_max;
  while (res.steps + per_update <= stop.max_steps) {
    RolloutBatch batch = runner.collect(team.actors, team.critics, classifiers, boosts, cfg.n_steps);
    for (std::size_t i = 0; i < batch.agents.size(); ++i)
      for (const auto& o : batch.agents[i].obs) res.buffers[i].push(o);
    ippo_update(team, batch, cfg, update_rng);
    res.steps += per_update;
    const auto& rets = runner.episode_stats().returns;
    for (; seen < rets.size(); ++seen) {
      recent.push_back(rets[seen]);
      if (static_cast<int>(recent.size()) > stop.window) recent.pop_front();
    }
    if (static_cast<int>(recent.size()) == stop.window) {
      double m = 0.0;
      for (double r : recent) m += r;
      m /= static_cast<double>(recent.size());
      res.final_mean = m;
      res.converged = m >= threshold;
      if (res.converged && res.steps >= stop.min_steps) break;
    }
  }
  res.team = std::move(team);
  return res;
}

}  // namespace medoe
