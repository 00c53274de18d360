#pragma once

// Independent oracles and randomized checks shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "medoe/algo/boosts.hpp"
#include "medoe/algo/ppo.hpp"
#include "medoe/envs/chainball.hpp"
#include "medoe/envs/overcooked.hpp"
#include "medoe/harness/runlog.hpp"

namespace medoe::checks {

// ---------------------------------------------------------------------------------------------
// Chainball dynamics

// P(s -> r) = 1.5^(r-s) / sum_{j=1}^{s-1} 1.5^(-j), with the geometric sum in closed form 2 (1 - (2/3)^(s-1)).
inline double backward_oracle(int s, int r) {
  return std::pow(1.5, r - s) / (2.0 * (1.0 - std::pow(2.0 / 3.0, s - 1)));
}

inline double backward_max_error(int num_states) {
  double worst = 0.0;
  for (int s = 1; s <= num_states; ++s) {
    const auto d = chainball::backward_distribution(s, num_states);
    if (s == 1) {
      worst = std::max(worst, std::abs(d.concede - 1.0));
      continue;
    }
    for (int r = 1; r < s; ++r)
      worst = std::max(worst, std::abs(d.to_state[static_cast<std::size_t>(r - 1)] - backward_oracle(s, r)));
  }
  return worst;
}

// Fraction of `samples` steps from state s under the designated optimal joint action that move forward.
inline double forward_frequency(const chainball::Chainball& env, int s, int samples, RngStream& rng) {
  const auto joint = env.tables().optimal_actions(s);
  const int N = env.params().num_states;
  int forward = 0;
  for (int k = 0; k < samples; ++k) {
    chainball::State st{s, 0};
    const StepOutcome out = env.step(st, joint, rng);
    if (s < N ? st.s == s + 1 : out.reward == 1.0) ++forward;
  }
  return static_cast<double>(forward) / samples;
}

// ---------------------------------------------------------------------------------------------
// Gradients

inline double relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  double diff = 0.0, scale = 1e-12;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  }
  return diff / scale;
}

struct ActorInstance {
  std::vector<double> logits;
  std::vector<double> prior;
  int action = 0;
  double old_log_prob = 0.0;
  double advantage = 0.0;
  SampleCoefficients coeffs;
  double temperature = 1.0;
};

// A random instance whose probability ratio sits clear of the clip boundaries, so the loss is smooth
// within the finite-difference stencil.
inline ActorInstance random_actor_instance(RngStream& rng) {
  ActorInstance in;
  const int K = 3 + static_cast<int>(rng.below(5));
  for (int j = 0; j < K; ++j) {
    in.logits.push_back(rng.uniform(-2.0, 2.0));
    in.prior.push_back(rng.uniform(-2.0, 2.0));
  }
  in.action = static_cast<int>(rng.below(static_cast<std::uint64_t>(K)));
  in.temperature = rng.uniform(0.5, 3.0);
  in.coeffs = {rng.uniform(0.2, 3.0), rng.uniform(0.01, 0.5), rng.uniform(0.01, 0.5), rng.uniform(0.05, 0.3)};
  in.advantage = (rng.below(2) == 0 ? -1.0 : 1.0) * rng.uniform(0.1, 2.0);
  // ratio inside (1 - delta, 1 + delta) half the time, outside otherwise
  const double d = in.coeffs.clip;
  const double ratio = rng.below(2) == 0 ? rng.uniform(1.0 - 0.8 * d, 1.0 + 0.8 * d)
                                         : (rng.below(2) == 0 ? rng.uniform(0.3, 1.0 - 1.5 * d)
                                                              : rng.uniform(1.0 + 1.5 * d, 2.0));
  in.old_log_prob = log_softmax_at(in.logits, in.temperature, static_cast<std::size_t>(in.action)) - std::log(ratio);
  return in;
}

inline double actor_loss_at(const ActorInstance& in, std::span<const double> logits) {
  std::vector<double> scratch(logits.size(), 0.0);
  return actor_sample_loss(logits, in.prior.data(), in.action, in.old_log_prob, in.advantage, in.coeffs,
                           in.temperature, 1.0, scratch)
      .loss;
}

// Relative error of the logit gradient of w * clip-term - alpha * H + kappa * KL against central
// differences. w stays fixed in the perturbed evaluations: it is a constant of the loss.
inline double actor_gradient_error(const ActorInstance& in, double h = 1e-6) {
  std::vector<double> analytic(in.logits.size(), 0.0);
  actor_sample_loss(in.logits, in.prior.data(), in.action, in.old_log_prob, in.advantage, in.coeffs, in.temperature,
                    1.0, analytic);
  std::vector<double> numeric(in.logits.size());
  std::vector<double> z = in.logits;
  for (std::size_t j = 0; j < z.size(); ++j) {
    const double z0 = z[j];
    z[j] = z0 + h;
    const double up = actor_loss_at(in, z);
    z[j] = z0 - h;
    const double down = actor_loss_at(in, z);
    z[j] = z0;
    numeric[j] = (up - down) / (2.0 * h);
  }
  return relative_error(analytic, numeric);
}

// d/dV of w (G - V)^2 against a central difference.
inline double critic_gradient_error(double value, double target, double weight, double h = 1e-6) {
  double analytic = 0.0, scratch = 0.0;
  critic_sample_loss(value, target, weight, analytic);
  const double numeric =
      (critic_sample_loss(value + h, target, weight, scratch) - critic_sample_loss(value - h, target, weight, scratch)) /
      (2.0 * h);
  return relative_error(std::span<const double>(&analytic, 1), std::span<const double>(&numeric, 1));
}

// A small synthetic batch for one agent, for checks through a whole network.
struct SyntheticAgentBatch {
  RolloutBatch batch;
  AgentTrainingData data;
};

inline SyntheticAgentBatch random_agent_batch(const FunctionApproximator& actor, int input_dim, int num_states,
                                              int samples, const BoostConfig& boosts, RngStream& rng) {
  SyntheticAgentBatch s;
  s.batch.n_steps = samples;
  s.batch.num_envs = 1;
  s.batch.agents.resize(1);
  auto& r = s.batch.agents[0];
  for (int k = 0; k < samples; ++k) {
    Observation o;
    o.state_id = static_cast<int>(rng.below(static_cast<std::uint64_t>(num_states)));
    o.features.resize(static_cast<std::size_t>(input_dim));
    for (double& f : o.features) f = rng.uniform(-1.0, 1.0);
    const Vector z = actor.forward_one(o);
    std::span<const double> zs(z.data(), static_cast<std::size_t>(z.size()));
    const double d = rng.uniform();
    const double T = boosted_temperature(d, boosts);
    const int a = static_cast<int>(rng.below(static_cast<std::uint64_t>(z.size())));
    r.obs.push_back(o);
    r.actions.push_back(a);
    r.doe.push_back(d);
    r.temperature.push_back(T);
    r.log_prob_behaviour.push_back(log_softmax_at(zs, T, static_cast<std::size_t>(a)));
    // old policy a little away from the current one
    r.log_prob_base.push_back(log_softmax_at(zs, boosts.base_temperature, static_cast<std::size_t>(a)) +
                              rng.uniform(-0.3, 0.3));
    r.values.push_back(rng.uniform(-1.0, 1.0));
    r.next_values.push_back(rng.uniform(-1.0, 1.0));
    s.batch.rewards.push_back(rng.uniform(-1.0, 1.0));
    s.batch.dones.push_back(0);
    s.batch.truncated.push_back(0);
  }
  s.data.rollout = &s.batch.agents[0];
  for (int k = 0; k < samples; ++k) {
    s.data.returns.push_back(rng.uniform(-1.0, 1.0));
    s.data.advantages.push_back(rng.uniform(-1.0, 1.0));
  }
  return s;
}

struct NetworkGradientErrors {
  double actor = 0.0;
  double critic = 0.0;
};

// Full-parameter gradients of the mean actor and critic losses against central differences, with the
// importance weights computed once and frozen.
inline NetworkGradientErrors network_gradient_error(FunctionApproximator actor, FunctionApproximator critic,
                                                    const BehaviourPrior& prior, const SyntheticAgentBatch& s,
                                                    const BoostConfig& boosts, double h = 1e-6) {
  const CoefficientRule rule = CoefficientRule::medoe(boosts);
  std::vector<std::size_t> idx(s.batch.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::vector<double> w = importance_weights(actor, *s.data.rollout, idx, rule);
  const LossEvaluation ev = evaluate_losses(actor, critic, &prior, s.data, idx, rule, w, true);

  auto numeric = [&](FunctionApproximator& f, bool is_actor) {
    std::vector<double> g(static_cast<std::size_t>(f.param_count()));
    for (Eigen::Index p = 0; p < f.param_count(); ++p) {
      const double p0 = f.params()[p];
      f.params()[p] = p0 + h;
      const auto up = evaluate_losses(actor, critic, &prior, s.data, idx, rule, w, false).summary;
      f.params()[p] = p0 - h;
      const auto down = evaluate_losses(actor, critic, &prior, s.data, idx, rule, w, false).summary;
      f.params()[p] = p0;
      g[static_cast<std::size_t>(p)] =
          is_actor ? (up.actor_loss - down.actor_loss) / (2.0 * h) : (up.critic_loss - down.critic_loss) / (2.0 * h);
    }
    return g;
  };
  NetworkGradientErrors e;
  const auto na = numeric(actor, true);
  const auto nc = numeric(critic, false);
  e.actor = relative_error(std::span<const double>(ev.actor_grad.data(), static_cast<std::size_t>(ev.actor_grad.size())), na);
  e.critic = relative_error(std::span<const double>(ev.critic_grad.data(), static_cast<std::size_t>(ev.critic_grad.size())), nc);
  return e;
}

// ---------------------------------------------------------------------------------------------
// Returns

// A random batch with episode ends scattered through it.
inline RolloutBatch random_return_batch(int n_steps, int num_envs, RngStream& rng) {
  RolloutBatch b;
  b.n_steps = n_steps;
  b.num_envs = num_envs;
  b.agents.resize(1);
  const auto n = static_cast<std::size_t>(n_steps * num_envs);
  for (std::size_t k = 0; k < n; ++k) {
    b.rewards.push_back(rng.uniform(-1.0, 1.0));
    const double u = rng.uniform();
    b.dones.push_back(u < 0.15 ? 1 : 0);
    b.truncated.push_back(u >= 0.15 && u < 0.25 ? 1 : 0);
    b.agents[0].values.push_back(rng.uniform(-2.0, 2.0));
    b.agents[0].next_values.push_back(rng.uniform(-2.0, 2.0));
    b.agents[0].actions.push_back(0);
  }
  return b;
}

// n-step return: from step t accumulate rewards up to the first episode end or the window end, then
// bootstrap from V(o') unless the episode terminated. Evaluated innermost-first (Horner form).
inline std::vector<double> n_step_returns(const RolloutBatch& b, double gamma) {
  std::vector<double> out(b.size());
  for (int e = 0; e < b.num_envs; ++e) {
    for (int t = 0; t < b.n_steps; ++t) {
      int end = t;
      while (end < b.n_steps - 1 && !b.dones[b.index(end, e)] && !b.truncated[b.index(end, e)]) ++end;
      const std::size_t ke = b.index(end, e);
      double g = b.dones[ke] ? b.rewards[ke] : b.rewards[ke] + gamma * b.agents[0].next_values[ke];
      for (int j = end - 1; j >= t; --j) g = b.rewards[b.index(j, e)] + gamma * g;
      out[b.index(t, e)] = g;
    }
  }
  return out;
}

// Same returns written as a direct discounted sum.
inline std::vector<double> n_step_returns_direct(const RolloutBatch& b, double gamma) {
  std::vector<double> out(b.size());
  for (int e = 0; e < b.num_envs; ++e) {
    for (int t = 0; t < b.n_steps; ++t) {
      double g = 0.0, disc = 1.0;
      for (int j = t; j < b.n_steps; ++j) {
        const std::size_t k = b.index(j, e);
        g += disc * b.rewards[k];
        disc *= gamma;
        if (b.dones[k]) break;
        if (b.truncated[k] || j == b.n_steps - 1) {
          g += disc * b.agents[0].next_values[k];
          break;
        }
      }
      out[b.index(t, e)] = g;
    }
  }
  return out;
}

// Number of entries where the lambda = 1 returns/advantages differ in any bit from the oracle.
inline int gae_mismatches(const RolloutBatch& b, double gamma) {
  const auto ra = compute_returns_and_advantages(b, b.agents[0], gamma, 1.0);
  const auto oracle = n_step_returns(b, gamma);
  int bad = 0;
  for (std::size_t k = 0; k < b.size(); ++k) {
    if (ra.returns[k] != oracle[k]) ++bad;
    if (ra.advantages[k] != oracle[k] - b.agents[0].values[k]) ++bad;
  }
  return bad;
}

// ---------------------------------------------------------------------------------------------
// IPPO / MEDoE equivalence

// Runs one IPPO update and one MEDoE update (all multipliers 1) from the same team, batch and RNG
// state; returns the number of parameters that differ in any bit.
inline long equivalence_mismatches(const Team& start, const RolloutBatch& batch, const PPOConfig& cfg,
                                   std::uint64_t seed) {
  Team a = start, b = start;
  a.reset_optimizers(cfg);
  b.reset_optimizers(cfg);
  RngStream ra(seed), rb(seed);
  ippo_update(a, batch, cfg, ra);
  medoe_update(b, batch, BoostConfig::unboosted(cfg.temperature, cfg.entropy, cfg.kl, cfg.clip), cfg, rb);
  long bad = 0;
  auto compare = [&](const FunctionApproximator& x, const FunctionApproximator& y) {
    for (Eigen::Index p = 0; p < x.param_count(); ++p)
      if (std::memcmp(&x.params()[p], &y.params()[p], sizeof(double)) != 0) ++bad;
  };
  for (int i = 0; i < a.size(); ++i) {
    compare(a.actors[static_cast<std::size_t>(i)], b.actors[static_cast<std::size_t>(i)]);
    compare(a.critics[static_cast<std::size_t>(i)], b.critics[static_cast<std::size_t>(i)]);
  }
  return bad;
}

// ---------------------------------------------------------------------------------------------
// Boosts

// Chainball hyperparameter-table values.
inline BoostConfig chainball_boosts() { return {1.0, 1.6e-6, 1.3e-4, 2.5e-4, 3.0, 40.0, 40.0, 400.0}; }

// Violations of: T, alpha, delta non-increasing and kappa non-decreasing in d, for random pairs.
inline int boost_monotonicity_violations(const BoostConfig& cfg, int samples, RngStream& rng) {
  int bad = 0;
  for (int k = 0; k < samples; ++k) {
    double d1 = rng.uniform(), d2 = rng.uniform();
    if (d1 > d2) std::swap(d1, d2);
    const auto lo = compute_boosts(d1, cfg), hi = compute_boosts(d2, cfg);
    if (hi.temperature > lo.temperature || hi.entropy > lo.entropy || hi.clip > lo.clip || hi.kl < lo.kl) ++bad;
    if (lo.temperature < cfg.base_temperature || lo.temperature > cfg.base_temperature * cfg.temperature_boost) ++bad;
  }
  return bad;
}

// ---------------------------------------------------------------------------------------------
// Overcooked

struct ScriptedEpisode {
  double total_reward = 0.0;
  int steps = 0;
  bool done = false;
  int reward_events = 0;
};

inline ScriptedEpisode run_scripted(const overcooked::Overcooked& env, RngStream& rng) {
  overcooked::ScriptedTargetPolicy policy;
  auto st = env.reset(rng);
  ScriptedEpisode ep;
  while (true) {
    const auto a = policy.act(st);
    const StepOutcome out = env.step(st, a, rng);
    ep.total_reward += out.reward;
    if (out.reward != 0.0) ++ep.reward_events;
    ++ep.steps;
    if (out.done || out.truncated) {
      ep.done = out.done;
      break;
    }
  }
  return ep;
}

// A hand-built kitchen: agent 0 at `agent`, items on counters unless held.
struct KitchenCase {
  overcooked::Pos agent;
  overcooked::Pos tomato;  // cell, or ignored when held
  overcooked::Pos plate;
  bool chopped;
  bool on_plate;
  int tomato_holder;  // -1 on a counter, else agent index (when not on the plate)
  int plate_holder;
  double expected;    // hand-derived expert DoE for agent 0
};

inline overcooked::KitchenState build_kitchen(const KitchenCase& c) {
  using namespace overcooked;
  KitchenState st;
  st.agents[0] = {c.agent, Dir::up};
  st.agents[1] = {c.agent.x <= 3 ? Pos{6, 2} : Pos{2, 2}, Dir::up};
  st.board = {0, 2};
  st.star = {6, 4};
  st.chopped = c.chopped || c.on_plate;
  st.tomato_on_plate = c.on_plate;
  st.plate = c.plate_holder >= 0 ? ItemLoc{true, c.plate_holder, {}} : ItemLoc{false, -1, c.plate};
  if (c.on_plate) {
    st.tomato = st.plate;
  } else {
    st.tomato = c.tomato_holder >= 0 ? ItemLoc{true, c.tomato_holder, {}} : ItemLoc{false, -1, c.tomato};
  }
  return st;
}

// Fifty kitchens with the expert DoE of agent 0 worked out by hand. Left half is x <= 4, right half
// x >= 4 (the centre counters belong to both). Left rule: tomato and plate both in the left half and
// not yet combined. Right rule: chopped tomato on a plate in the right half.
inline std::vector<KitchenCase> kitchen_truth_table() {
  using overcooked::Pos;
  const Pos L{2, 2}, L2{1, 3}, L3{3, 1}, R{6, 2}, R2{7, 1}, R3{5, 3};
  const Pos board{0, 2}, plate_l{2, 0}, centre{4, 2}, centre_top{4, 3}, tomato_r{8, 1}, tomato_r2{8, 3}, star{6, 4};
  return {
      // agent on the left: left rule
      {L, tomato_r, plate_l, false, false, -1, -1, 0.0},
      {L, tomato_r2, plate_l, false, false, -1, -1, 0.0},
      {L, centre, plate_l, false, false, -1, -1, 1.0},
      {L, centre_top, plate_l, false, false, -1, -1, 1.0},
      {L, board, plate_l, false, false, -1, -1, 1.0},
      {L, board, plate_l, true, false, -1, -1, 1.0},
      {L2, board, plate_l, true, false, -1, -1, 1.0},
      {L3, centre, plate_l, true, false, -1, -1, 1.0},
      {L, board, centre, true, false, -1, -1, 1.0},
      {L, tomato_r, centre, false, false, -1, -1, 0.0},
      {L, board, tomato_r, true, false, -1, -1, 0.0},
      {L, centre, star, false, false, -1, -1, 0.0},
      {L, {0, 0}, plate_l, false, false, 0, -1, 1.0},       // tomato held by agent 0 on the left
      {L, {0, 0}, plate_l, true, false, 0, -1, 1.0},
      {L, {0, 0}, plate_l, false, false, 1, -1, 0.0},       // held by agent 1 on the right
      {L, board, {0, 0}, true, false, -1, 0, 1.0},          // plate held by agent 0
      {L, board, {0, 0}, true, false, -1, 1, 0.0},          // plate held by agent 1 on the right
      {L, board, plate_l, true, true, -1, -1, 0.0},         // combined: left rule off
      {L, board, centre, true, true, -1, -1, 0.0},
      {L, board, {0, 0}, true, true, -1, 0, 0.0},
      {L2, tomato_r, plate_l, false, false, -1, -1, 0.0},
      {L3, tomato_r2, plate_l, false, false, -1, -1, 0.0},
      {L2, centre, centre_top, false, false, -1, -1, 1.0},
      {L3, board, centre_top, true, false, -1, -1, 1.0},
      {{1, 1}, centre_top, plate_l, false, false, -1, -1, 1.0},
      // agent on the right: right rule
      {R, tomato_r, plate_l, false, false, -1, -1, 0.0},
      {R, centre, plate_l, false, false, -1, -1, 0.0},
      {R, board, plate_l, true, false, -1, -1, 0.0},
      {R, board, centre, true, true, -1, -1, 1.0},          // plated at the centre counter
      {R, board, centre_top, true, true, -1, -1, 1.0},
      {R, board, plate_l, true, true, -1, -1, 0.0},         // plated but still on the left
      {R, board, {0, 0}, true, true, -1, 0, 1.0},           // held by agent 0 on the right
      {R, board, {0, 0}, true, true, -1, 1, 0.0},           // held by agent 1 on the left
      {R, board, star, true, true, -1, -1, 1.0},            // delivered
      {R2, board, centre, true, true, -1, -1, 1.0},
      {R3, board, centre, true, true, -1, -1, 1.0},
      {R, tomato_r, centre, false, false, -1, -1, 0.0},
      {R, tomato_r, centre, true, false, -1, -1, 0.0},      // chopped but not plated
      {R, {0, 0}, centre, false, false, 0, -1, 0.0},        // holding a raw tomato
      {R, {0, 0}, centre, true, false, 0, -1, 0.0},
      {R2, tomato_r2, plate_l, false, false, -1, -1, 0.0},
      {R3, centre, centre_top, false, false, -1, -1, 0.0},
      {R2, board, {7, 4}, true, true, -1, -1, 1.0},
      {R3, board, {5, 4}, true, true, -1, -1, 1.0},
      {R, board, {3, 0}, true, true, -1, -1, 0.0},
      {{7, 3}, board, centre, true, true, -1, -1, 1.0},
      {{5, 1}, board, {0, 1}, true, true, -1, -1, 0.0},
      {{6, 1}, tomato_r, {1, 0}, false, false, -1, -1, 0.0},
      {{6, 3}, board, {0, 0}, true, true, -1, 0, 1.0},
      {{5, 2}, {0, 0}, {0, 0}, true, false, 0, 1, 0.0},
  };
}

inline int kitchen_truth_table_mismatches() {
  const overcooked::Overcooked env(overcooked::Variant::target);
  int bad = 0;
  for (const auto& c : kitchen_truth_table())
    if (env.expert_doe(build_kitchen(c), 0) != c.expected) ++bad;
  return bad;
}

// ---------------------------------------------------------------------------------------------
// AUC

// Linear interpolation sampled at every integer step, trapezoids of unit width, divided by the span.
inline double auc_fine_grid(const std::vector<harness::RunRow>& rows) {
  double area = 0.0;
  std::size_t seg = 0;
  auto at = [&](std::int64_t x) {
    while (seg + 1 < rows.size() && rows[seg + 1].total_step < x) ++seg;
    const auto& a = rows[seg];
    const auto& b = rows[std::min(seg + 1, rows.size() - 1)];
    if (b.total_step == a.total_step) return a.mean_return;
    const double t = static_cast<double>(x - a.total_step) / static_cast<double>(b.total_step - a.total_step);
    return a.mean_return + t * (b.mean_return - a.mean_return);
  };
  const std::int64_t x0 = rows.front().total_step, x1 = rows.back().total_step;
  double prev = at(x0);
  for (std::int64_t x = x0 + 1; x <= x1; ++x) {
    const double cur = at(x);
    area += 0.5 * (prev + cur);
    prev = cur;
  }
  return area / static_cast<double>(x1 - x0);
}

inline std::vector<harness::RunRow> curve(const std::vector<std::int64_t>& steps, const std::vector<double>& values) {
  std::vector<harness::RunRow> rows;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    harness::RunRow r;
    r.run_id = "fixture";
    r.total_step = steps[i];
    r.mean_return = values[i];
    rows.push_back(r);
  }
  return rows;
}

// Irregular steps in [0, ~span] with random values.
inline std::vector<harness::RunRow> random_curve(int points, RngStream& rng) {
  std::vector<std::int64_t> steps{static_cast<std::int64_t>(rng.below(50))};
  std::vector<double> values{rng.uniform(-1.0, 1.0)};
  for (int i = 1; i < points; ++i) {
    steps.push_back(steps.back() + 1 + static_cast<std::int64_t>(rng.below(400)));
    values.push_back(rng.uniform(-1.0, 1.0));
  }
  return curve(steps, values);
}

}  // namespace medoe::checks
