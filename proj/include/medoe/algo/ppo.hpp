#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "medoe/algo/boosts.hpp"
#include "medoe/core/rng.hpp"
#include "medoe/core/rollout.hpp"
#include "medoe/nn/adam.hpp"
#include "medoe/nn/approximator.hpp"
#include "medoe/nn/distributions.hpp"

namespace medoe {

struct PPOConfig {
  double discount = 0.99;           // gamma
  double gae_lambda = 0.95;
  int n_steps = 4;
  int num_envs = 8;
  int epochs = 2;
  int minibatches = 1;
  double clip = 0.1;                // delta
  double entropy = 1e-5;            // alpha
  double kl = 8e-3;                 // kappa; ignored without a prior
  double actor_lr = 1e-2;
  double critic_lr = 2e-2;
  double adam_epsilon = 1e-5;
  double temperature = 1.0;         // T_base
  bool value_clipping = false;      // unsupported; must stay false
  bool gradient_clipping = false;   // unsupported; must stay false

  void validate() const {
    if (!(discount > 0.0 && discount <= 1.0)) throw ConfigError("ppo: discount must lie in (0,1]");
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw ConfigError("ppo: gae_lambda must lie in [0,1]");
    if (n_steps <= 0 || num_envs <= 0) throw ConfigError("ppo: n_steps and num_envs must be positive");
    if (epochs < 1) throw ConfigError("ppo: epochs must be >= 1");
    if (minibatches < 1) throw ConfigError("ppo: minibatches must be >= 1");
    if (!(clip > 0.0)) throw ConfigError("ppo: clip coefficient must be positive");
    if (entropy < 0.0 || kl < 0.0) throw ConfigError("ppo: regularisation coefficients must be non-negative");
    if (!(actor_lr > 0.0 && critic_lr > 0.0)) throw ConfigError("ppo: learning rates must be positive");
    if (!(temperature > 0.0)) throw ConfigError("ppo: temperature must be positive");
    if (value_clipping || gradient_clipping) throw ConfigError("ppo: value/gradient clipping are not supported");
  }
};

// ---------------------------------------------------------------------------------------------
// Returns and advantages

struct ReturnsAdvantages {
  std::vector<double> returns;     // G
  std::vector<double> advantages;  // A = G - V(o)
};

// lambda-returns over each environment's n-step window, via
//   G_t = r_t + gamma * [(1 - lambda) V(o_{t+1}) + lambda G_{t+1}]
// with G_t = r_t on terminal steps and G_t = r_t + gamma V(o_{t+1}) on truncated steps and at the
// end of the window. With lambda = 1 this is exactly the n-step return; with lambda = 0 it is the
// one-step TD target. Advantages are G - V(o_t).
inline ReturnsAdvantages compute_returns_and_advantages(const RolloutBatch& batch, const AgentRollout& agent,
                                                        double gamma, double lambda) {
  const std::size_t n = batch.size();
  if (agent.size() != n) throw std::invalid_argument("returns: agent rollout length mismatch");
  ReturnsAdvantages out;
  out.returns.assign(n, 0.0);
  out.advantages.assign(n, 0.0);
  for (int e = 0; e < batch.num_envs; ++e) {
    double next_return = 0.0;
    for (int t = batch.n_steps - 1; t >= 0; --t) {
      const std::size_t k = batch.index(t, e);
      const double r = batch.rewards[k];
      double g;
      if (batch.dones[k]) {
        g = r;
      } else if (batch.truncated[k] || t == batch.n_steps - 1) {
        g = r + gamma * agent.next_values[k];
      } else {
        g = r + gamma * ((1.0 - lambda) * agent.next_values[k] + lambda * next_return);
      }
      out.returns[k] = g;
      out.advantages[k] = g - agent.values[k];
      next_return = g;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Per-sample loss terms

// -min(ratio * A, clip(ratio, 1 - delta, 1 + delta) * A): minimised.
inline double ppo_clip_objective(double advantage, double ratio, double delta) {
  if (!(ratio > 0.0)) throw std::invalid_argument("ppo_clip_objective: ratio must be positive");
  const double clipped = std::clamp(ratio, 1.0 - delta, 1.0 + delta);
  return -std::min(ratio * advantage, clipped * advantage);
}

// Whether gradient flows through the unclipped branch.
inline bool clip_branch_active(double advantage, double ratio, double delta) {
  const double clipped = std::clamp(ratio, 1.0 - delta, 1.0 + delta);
  return ratio * advantage <= clipped * advantage;
}

inline constexpr double kMinImportanceWeight = 1e-3;
inline constexpr double kMaxImportanceWeight = 1e3;

// pi(a | o; T_base) / pi(a | o; T_behaviour) for one set of logits. Treated as a constant by
// every gradient below.
inline double importance_weight(std::span<const double> logits, int action, double base_temperature,
                                double behaviour_temperature) {
  const double lb = log_softmax_at(logits, base_temperature, static_cast<std::size_t>(action));
  const double lt = log_softmax_at(logits, behaviour_temperature, static_cast<std::size_t>(action));
  return std::exp(lb - lt);
}

inline double importance_weight(const FunctionApproximator& policy, const Observation& obs, int action,
                                double base_temperature, double behaviour_temperature) {
  const Vector z = policy.forward_one(obs);
  return importance_weight(std::span<const double>(z.data(), static_cast<std::size_t>(z.size())), action,
                           base_temperature, behaviour_temperature);
}

inline double clip_importance_weight(double w) { return std::clamp(w, kMinImportanceWeight, kMaxImportanceWeight); }

// Coefficients attached to one sample in the actor/critic losses.
struct SampleCoefficients {
  double weight = 1.0;  // w_i, gradient-stopped
  double entropy = 0.0;
  double kl = 0.0;
  double clip = 0.1;
};

struct ActorTerms {
  double loss = 0.0;
  double clip_term = 0.0;
  double entropy = 0.0;
  double kl = 0.0;
  double ratio = 1.0;
};

// Loss w * PPOClip - alpha * H(p) + kappa * KL(p || q), p = softmax(z / T), q = softmax(z_prior / T),
// and its gradient with respect to the logits z (accumulated into grad, scaled by `scale`).
inline ActorTerms actor_sample_loss(std::span<const double> logits, const double* prior_logits, int action,
                                    double old_log_prob, double advantage, const SampleCoefficients& c,
                                    double temperature, double scale, std::span<double> grad) {
  const std::size_t K = logits.size();
  std::vector<double> p(K);
  softmax_into(logits, temperature, p);
  const auto a = static_cast<std::size_t>(action);
  ActorTerms t;
  const double log_pa = log_softmax_at(logits, temperature, a);
  t.ratio = std::exp(log_pa - old_log_prob);
  t.clip_term = c.weight * ppo_clip_objective(advantage, t.ratio, c.clip);
  t.entropy = entropy(p);
  t.loss = t.clip_term - c.entropy * t.entropy;

  std::vector<double> q;
  if (prior_logits != nullptr && c.kl != 0.0) {
    q.resize(K);
    softmax_into(std::span<const double>(prior_logits, K), temperature, q);
    t.kl = kl_divergence(p, q);
    t.loss += c.kl * t.kl;
  }

  const double inv_t = 1.0 / temperature;
  const bool active = clip_branch_active(advantage, t.ratio, c.clip);
  for (std::size_t j = 0; j < K; ++j) {
    double g = 0.0;
    if (active) g += -c.weight * advantage * t.ratio * ((j == a ? 1.0 : 0.0) - p[j]) * inv_t;
    if (p[j] > 0.0) {
      const double log_pj = std::log(p[j]);
      g += c.entropy * p[j] * (log_pj + t.entropy) * inv_t;
      if (!q.empty()) g += c.kl * p[j] * ((log_pj - std::log(q[j])) - t.kl) * inv_t;
    }
    grad[j] += scale * g;
  }
  return t;
}

// w * (G - V)^2 and its derivative with respect to V.
inline double critic_sample_loss(double value, double target, double weight, double& dvalue) {
  const double diff = target - value;
  dvalue = -2.0 * weight * diff;
  return weight * diff * diff;
}

// ---------------------------------------------------------------------------------------------
// Update

// How per-sample coefficients are produced. Fixed: constant PPO coefficients and w = 1 (IPPO).
// Modulated: coefficients from the sample's DoE value and w from the sampling temperature (MEDoE).
struct CoefficientRule {
  bool modulated = false;
  BoostConfig boosts;  // for fixed rules only the base values are read

  static CoefficientRule fixed(const PPOConfig& cfg, bool with_prior) {
    return {false, BoostConfig::unboosted(cfg.temperature, cfg.entropy, with_prior ? cfg.kl : 0.0, cfg.clip)};
  }
  static CoefficientRule medoe(const BoostConfig& b) { return {true, b}; }

  double base_temperature() const { return boosts.base_temperature; }

  SampleCoefficients coefficients(double doe) const {
    if (!modulated) return {1.0, boosts.base_entropy, boosts.base_kl, boosts.base_clip};
    const ModulatedCoefficients m = compute_boosts(doe, boosts);
    return {1.0, m.entropy, m.kl, m.clip};
  }
};

// One agent's training data for an update.
struct AgentTrainingData {
  const AgentRollout* rollout = nullptr;
  std::vector<double> returns;
  std::vector<double> advantages;
};

struct LossSummary {
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double entropy = 0.0;
  double kl = 0.0;
  double mean_weight = 0.0;
  double clip_fraction = 0.0;
};

// Evaluates both losses (means over `indices`) and optionally their gradients. `weights` holds the
// gradient-stopped importance weights for the same indices.
struct LossEvaluation {
  LossSummary summary;
  Vector actor_grad;
  Vector critic_grad;
};

inline std::vector<double> importance_weights(const FunctionApproximator& actor, const AgentRollout& r,
                                              std::span<const std::size_t> indices, const CoefficientRule& rule,
                                              const Matrix* logits_cache = nullptr) {
  std::vector<double> w(indices.size(), 1.0);
  if (!rule.modulated) return w;
  Matrix local;
  if (logits_cache == nullptr) {
    std::vector<Observation> obs;
    obs.reserve(indices.size());
    for (std::size_t k : indices) obs.push_back(r.obs[k]);
    local = actor.forward(InputBatch::from(obs));
    logits_cache = &local;
  }
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const std::size_t k = indices[b];
    std::span<const double> z(logits_cache->col(static_cast<Eigen::Index>(b)).data(),
                              static_cast<std::size_t>(logits_cache->rows()));
    w[b] = clip_importance_weight(importance_weight(z, r.actions[k], rule.base_temperature(), r.temperature[k]));
  }
  return w;
}

inline LossEvaluation evaluate_losses(const FunctionApproximator& actor, const FunctionApproximator& critic,
                                      const BehaviourPrior* prior, const AgentTrainingData& data,
                                      std::span<const std::size_t> indices, const CoefficientRule& rule,
                                      std::span<const double> weights, bool with_gradients) {
  const AgentRollout& r = *data.rollout;
  const auto B = static_cast<Eigen::Index>(indices.size());
  std::vector<Observation> obs;
  obs.reserve(indices.size());
  for (std::size_t k : indices) obs.push_back(r.obs[k]);
  const InputBatch in = InputBatch::from(obs);

  FunctionApproximator::Cache actor_cache, critic_cache;
  const Matrix logits = actor.forward(in, with_gradients ? &actor_cache : nullptr);
  const Matrix values = critic.forward(in, with_gradients ? &critic_cache : nullptr);
  Matrix prior_logits;
  if (prior != nullptr) prior_logits = prior->policy().forward(in);

  LossEvaluation ev;
  Matrix g_logits = Matrix::Zero(logits.rows(), B);
  Matrix g_values = Matrix::Zero(1, B);
  const double scale = 1.0 / static_cast<double>(B);
  const double T = rule.base_temperature();
  std::vector<double> scratch(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index b = 0; b < B; ++b) {
    const std::size_t k = indices[static_cast<std::size_t>(b)];
    SampleCoefficients c = rule.coefficients(r.doe[k]);
    c.weight = weights[static_cast<std::size_t>(b)];
    if (prior == nullptr) c.kl = 0.0;
    std::span<const double> z(logits.col(b).data(), static_cast<std::size_t>(logits.rows()));
    std::fill(scratch.begin(), scratch.end(), 0.0);
    const ActorTerms at = actor_sample_loss(z, prior ? prior_logits.col(b).data() : nullptr, r.actions[k],
                                            r.log_prob_base[k], data.advantages[k], c, T, scale, scratch);
    for (Eigen::Index j = 0; j < logits.rows(); ++j) g_logits(j, b) = scratch[static_cast<std::size_t>(j)];
    double dv = 0.0;
    const double cl = critic_sample_loss(values(0, b), data.returns[k], c.weight, dv);
    g_values(0, b) = scale * dv;
    ev.summary.actor_loss += scale * at.loss;
    ev.summary.critic_loss += scale * cl;
    ev.summary.entropy += scale * at.entropy;
    ev.summary.kl += scale * at.kl;
    ev.summary.mean_weight += scale * c.weight;
    if (!clip_branch_active(data.advantages[k], at.ratio, c.clip)) ev.summary.clip_fraction += scale;
  }
  if (with_gradients) {
    ev.actor_grad = actor.backward(in, actor_cache, g_logits);
    ev.critic_grad = critic.backward(in, critic_cache, g_values);
  }
  return ev;
}

struct AgentOptimizers {
  AdamState actor;
  AdamState critic;

  static AgentOptimizers for_agent(const FunctionApproximator& actor, const FunctionApproximator& critic,
                                   const PPOConfig& cfg) {
    return {AdamState(actor.param_count(), cfg.actor_lr, cfg.adam_epsilon),
            AdamState(critic.param_count(), cfg.critic_lr, cfg.adam_epsilon)};
  }
};

// `epochs` passes of minibatch Adam steps on the actor and critic losses of one agent.
inline LossSummary update_agent(FunctionApproximator& actor, FunctionApproximator& critic, const BehaviourPrior* prior,
                                const AgentTrainingData& data, const CoefficientRule& rule, const PPOConfig& cfg,
                                AgentOptimizers& opt, RngStream& rng) {
  const std::size_t n = data.rollout->size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t mb = static_cast<std::size_t>(cfg.minibatches);
  LossSummary last;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (mb > 1) shuffle(order, rng);
    for (std::size_t m = 0; m < mb; ++m) {
      const std::size_t lo = m * n / mb, hi = (m + 1) * n / mb;
      if (hi <= lo) continue;
      std::span<const std::size_t> idx(order.data() + lo, hi - lo);
      const std::vector<double> w = importance_weights(actor, *data.rollout, idx, rule);
      LossEvaluation ev = evaluate_losses(actor, critic, prior, data, idx, rule, w, true);
      adam_step(actor, ev.actor_grad, opt.actor);
      adam_step(critic, ev.critic_grad, opt.critic);
      last = ev.summary;
    }
  }
  if (!actor.all_finite() || !critic.all_finite()) throw NumericError("update produced non-finite parameters");
  return last;
}

// A team under training: one actor, critic and optimizer pair per agent, optional frozen priors.
struct Team {
  std::vector<FunctionApproximator> actors;
  std::vector<FunctionApproximator> critics;
  std::vector<AgentOptimizers> optimizers;
  std::vector<BehaviourPrior> priors;  // empty when no prior is used

  int size() const { return static_cast<int>(actors.size()); }

  void reset_optimizers(const PPOConfig& cfg) {
    optimizers.clear();
    for (std::size_t i = 0; i < actors.size(); ++i)
      optimizers.push_back(AgentOptimizers::for_agent(actors[i], critics[i], cfg));
  }

  // Priors are frozen copies of the current actors.
  void freeze_priors() {
    priors.clear();
    for (const auto& a : actors) priors.emplace_back(a);
  }
};

struct UpdateDiagnostics {
  std::vector<LossSummary> agents;
};

// One learner step for every agent on a freshly collected batch. Agents are independent.
inline UpdateDiagnostics team_update(Team& team, const RolloutBatch& batch, const CoefficientRule& rule,
                                     const PPOConfig& cfg, RngStream& rng) {
  if (static_cast<int>(batch.agents.size()) != team.size()) throw ConfigError("update: batch/team size mismatch");
  UpdateDiagnostics diag;
  for (int i = 0; i < team.size(); ++i) {
    const auto ui = static_cast<std::size_t>(i);
    AgentTrainingData data;
    data.rollout = &batch.agents[ui];
    auto ra = compute_returns_and_advantages(batch, batch.agents[ui], cfg.discount, cfg.gae_lambda);
    data.returns = std::move(ra.returns);
    data.advantages = std::move(ra.advantages);
    const BehaviourPrior* prior = team.priors.empty() ? nullptr : &team.priors[ui];
    diag.agents.push_back(update_agent(team.actors[ui], team.critics[ui], prior, data, rule, cfg, team.optimizers[ui], rng));
  }
  return diag;
}

// IPPO: constant coefficients, KL term only when priors are present.
inline UpdateDiagnostics ippo_update(Team& team, const RolloutBatch& batch, const PPOConfig& cfg, RngStream& rng) {
  return team_update(team, batch, CoefficientRule::fixed(cfg, !team.priors.empty()), cfg, rng);
}

// MEDoE: per-sample modulated coefficients and importance weights. Requires priors.
inline UpdateDiagnostics medoe_update(Team& team, const RolloutBatch& batch, const BoostConfig& boosts,
                                      const PPOConfig& cfg, RngStream& rng) {
  if (team.priors.size() != team.actors.size()) throw ConfigError("medoe: every agent needs a behaviour prior");
  return team_update(team, batch, CoefficientRule::medoe(boosts), cfg, rng);
}

// Per-agent (actor loss, critic loss) at the current parameters, without updating.
inline std::vector<std::pair<double, double>> medoe_losses(const Team& team, const RolloutBatch& batch,
                                                           const BoostConfig& boosts, const PPOConfig& cfg) {
  if (team.priors.size() != team.actors.size()) throw ConfigError("medoe: every agent needs a behaviour prior");
  const CoefficientRule rule = CoefficientRule::medoe(boosts);
  std::vector<std::pair<double, double>> out;
  for (int i = 0; i < team.size(); ++i) {
    const auto ui = static_cast<std::size_t>(i);
    AgentTrainingData data;
    data.rollout = &batch.agents[ui];
    auto ra = compute_returns_and_advantages(batch, batch.agents[ui], cfg.discount, cfg.gae_lambda);
    data.returns = std::move(ra.returns);
    data.advantages = std::move(ra.advantages);
    std::vector<std::size_t> idx(batch.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const auto w = importance_weights(team.actors[ui], batch.agents[ui], idx, rule);
    const auto ev = evaluate_losses(team.actors[ui], team.critics[ui], &team.priors[ui], data, idx, rule, w, false);
    out.emplace_back(ev.summary.actor_loss, ev.summary.critic_loss);
  }
  return out;
}

}  // namespace medoe
