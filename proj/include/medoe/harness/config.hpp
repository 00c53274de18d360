#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "medoe/algo/boosts.hpp"
#include "medoe/algo/ppo.hpp"
#include "medoe/core/errors.hpp"
#include "medoe/doe/learned.hpp"
#include "medoe/envs/chainball.hpp"

namespace medoe::harness {

enum class Baseline { from_scratch, pre_skilled_bp, pre_skilled_no_bp, medoe_expert, medoe_expert_no_bp, medoe_mlp };

inline const char* to_string(Baseline b) {
  switch (b) {
    case Baseline::from_scratch: return "from-scratch";
    case Baseline::pre_skilled_bp: return "pre-skilled-BP";
    case Baseline::pre_skilled_no_bp: return "pre-skilled-no-BP";
    case Baseline::medoe_expert: return "medoe-expert";
    case Baseline::medoe_expert_no_bp: return "medoe-expert-no-BP";
    case Baseline::medoe_mlp: return "medoe-mlp";
  }
  return "?";
}

inline Baseline baseline_from_string(const std::string& s) {
  for (auto b : {Baseline::from_scratch, Baseline::pre_skilled_bp, Baseline::pre_skilled_no_bp, Baseline::medoe_expert,
                 Baseline::medoe_expert_no_bp, Baseline::medoe_mlp})
    if (s == to_string(b)) return b;
  throw ConfigError("unknown baseline '" + s + "'");
}

inline bool uses_source_stage(Baseline b) { return b != Baseline::from_scratch; }
inline bool uses_medoe(Baseline b) {
  return b == Baseline::medoe_expert || b == Baseline::medoe_expert_no_bp || b == Baseline::medoe_mlp;
}
inline bool uses_prior(Baseline b) { return b == Baseline::pre_skilled_bp || b == Baseline::medoe_expert || b == Baseline::medoe_mlp; }

enum class EnvKind { chainball, overcooked };

inline EnvKind env_from_string(const std::string& s) {
  if (s == "chainball") return EnvKind::chainball;
  if (s == "overcooked") return EnvKind::overcooked;
  throw ConfigError("unknown environment '" + s + "'");
}
inline const char* to_string(EnvKind e) { return e == EnvKind::chainball ? "chainball" : "overcooked"; }

struct ChainballSettings {
  chainball::Params params;
  std::uint64_t table_seed = 1;
};

struct SourceSettings {
  std::vector<int> seeds = {0, 1};      // per source task; teams are the cross product
  bool allow_reduced = true;            // permit fewer than 4 seeds per task
  double convergence_fraction = 0.9;
  int convergence_window = 100;
  std::int64_t min_steps = 40000;       // Chainball default: fill the 40,000-observation buffer
  std::int64_t max_steps = 2000000;
  std::size_t buffer_capacity = 40000;
  int reference_episodes = 100;         // episodes for the converged source return
};

struct ExperimentConfig {
  std::string name = "experiment";
  EnvKind environment = EnvKind::chainball;
  Baseline baseline = Baseline::medoe_expert;
  std::vector<int> seeds = {0, 1};
  std::uint64_t master_seed = 2024;

  PPOConfig ppo;
  BoostConfig boosts;
  std::string actor_architecture = "tabular";  // "tabular" or "mlp"
  std::vector<int> hidden_sizes = {256, 128};

  ChainballSettings chainball;
  int overcooked_horizon = 100;
  SourceSettings source;
  ClassifierTrainingConfig classifier;

  std::int64_t budget_steps = 1000000;   // total environment steps per run, source stage included
  std::int64_t eval_every = 50000;
  int eval_episodes = 100;
  bool track_source_returns = false;     // replay sub-teams in their source tasks at every evaluation
  std::int64_t checkpoint_every = 0;     // periodic adjustment checkpoints (0 = final only)

  std::filesystem::path output_dir = "runs";

  void validate() const {
    ppo.validate();
    if (uses_medoe(baseline)) boosts.validate();
    if (seeds.empty()) throw ConfigError("config: at least one seed is required");
    if (budget_steps <= 0) throw ConfigError("config: budget_steps must be positive");
    if (eval_every < 0 || eval_episodes <= 0) throw ConfigError("config: invalid evaluation cadence");
    if (uses_source_stage(baseline) && source.seeds.empty()) throw ConfigError("config: source seeds missing");
    if (actor_architecture != "tabular" && actor_architecture != "mlp")
      throw ConfigError("config: architecture must be 'tabular' or 'mlp'");
    if (actor_architecture == "tabular" && environment == EnvKind::overcooked)
      throw ConfigError("config: overcooked observations need an mlp architecture");
    if (source.convergence_window <= 0 || !(source.convergence_fraction > 0.0))
      throw ConfigError("config: invalid source stopping rule");
  }
};

namespace detail {

template <class T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
  }
}

}  // namespace detail

// Keys follow the hyperparameter table naming (temp_boost, kl_coef_boost, ...).
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  using detail::read;
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  detail::reject_unknown(j,
                         {"name", "environment", "baseline", "seeds", "master_seed", "general", "medoe", "chainball",
                          "overcooked", "source", "classifier", "budget_steps", "eval_every", "eval_episodes",
                          "track_source_returns", "checkpoint_every", "output_dir"},
                         "top level");
  ExperimentConfig c;
  read(j, "name", c.name);
  if (j.contains("environment")) c.environment = env_from_string(j.at("environment").get<std::string>());
  if (j.contains("baseline")) c.baseline = baseline_from_string(j.at("baseline").get<std::string>());
  read(j, "seeds", c.seeds);
  read(j, "master_seed", c.master_seed);
  read(j, "budget_steps", c.budget_steps);
  read(j, "eval_every", c.eval_every);
  read(j, "eval_episodes", c.eval_episodes);
  read(j, "track_source_returns", c.track_source_returns);
  read(j, "checkpoint_every", c.checkpoint_every);
  if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();

  if (c.environment == EnvKind::overcooked) {
    // Overcooked column of the hyperparameter table.
    c.ppo.n_steps = 16;
    c.ppo.num_envs = 32;
    c.ppo.actor_lr = 2e-4;
    c.ppo.critic_lr = 4e-4;
    c.ppo.entropy = 8e-3;
    c.boosts.base_kl = 3.2e-3;
    c.boosts.base_entropy = 1.3e-3;
    c.boosts.base_clip = 2e-4;
    c.actor_architecture = "mlp";
    c.source.buffer_capacity = 320000;
    c.source.min_steps = 320000;
  }

  if (j.contains("general")) {
    const auto& g = j.at("general");
    detail::reject_unknown(g,
                           {"discount_rate", "gae_lambda", "n_steps", "optimiser", "adam_epsilon",
                            "actor_learning_rate", "critic_learning_rate", "entropy_coefficient", "ppo_clip_coef",
                            "ppo_epochs", "ppo_num_minibatches", "ppo_value_clipping", "gradient_clipping",
                            "parallel_environments", "kl_coefficient", "actor_architecture", "critic_architecture",
                            "hidden_sizes"},
                           "general");
    read(g, "discount_rate", c.ppo.discount);
    read(g, "gae_lambda", c.ppo.gae_lambda);
    read(g, "n_steps", c.ppo.n_steps);
    read(g, "adam_epsilon", c.ppo.adam_epsilon);
    read(g, "actor_learning_rate", c.ppo.actor_lr);
    read(g, "critic_learning_rate", c.ppo.critic_lr);
    read(g, "entropy_coefficient", c.ppo.entropy);
    read(g, "ppo_clip_coef", c.ppo.clip);
    read(g, "ppo_epochs", c.ppo.epochs);
    read(g, "ppo_num_minibatches", c.ppo.minibatches);
    read(g, "ppo_value_clipping", c.ppo.value_clipping);
    read(g, "gradient_clipping", c.ppo.gradient_clipping);
    read(g, "parallel_environments", c.ppo.num_envs);
    read(g, "kl_coefficient", c.ppo.kl);
    read(g, "actor_architecture", c.actor_architecture);
    std::string critic = c.actor_architecture;
    read(g, "critic_architecture", critic);
    if (critic != c.actor_architecture) throw ConfigError("config: actor and critic architectures must match");
    read(g, "hidden_sizes", c.hidden_sizes);
    if (g.contains("optimiser") && g.at("optimiser") != "adam") throw ConfigError("config: only the adam optimiser is supported");
  }
  if (j.contains("medoe")) {
    const auto& m = j.at("medoe");
    detail::reject_unknown(m,
                           {"base_temp", "base_kl_coef", "base_ent_coef", "base_clip_coef", "temp_boost",
                            "kl_coef_boost", "ent_coef_boost", "clip_coef_boost"},
                           "medoe");
    read(m, "base_temp", c.boosts.base_temperature);
    read(m, "base_kl_coef", c.boosts.base_kl);
    read(m, "base_ent_coef", c.boosts.base_entropy);
    read(m, "base_clip_coef", c.boosts.base_clip);
    read(m, "temp_boost", c.boosts.temperature_boost);
    read(m, "kl_coef_boost", c.boosts.kl_boost);
    read(m, "ent_coef_boost", c.boosts.entropy_boost);
    read(m, "clip_coef_boost", c.boosts.clip_boost);
  }
  c.ppo.temperature = c.boosts.base_temperature;
  if (j.contains("chainball")) {
    const auto& cb = j.at("chainball");
    detail::reject_unknown(cb, {"num_states", "horizon", "table_seed", "defence_clear_reward", "source_start"}, "chainball");
    read(cb, "num_states", c.chainball.params.num_states);
    read(cb, "horizon", c.chainball.params.horizon);
    read(cb, "table_seed", c.chainball.table_seed);
    read(cb, "defence_clear_reward", c.chainball.params.defence_clear_reward);
    if (cb.contains("source_start")) {
      const auto s = cb.at("source_start").get<std::string>();
      if (s == "restart") c.chainball.params.source_start = chainball::SourceStart::restart;
      else if (s == "expert_region") c.chainball.params.source_start = chainball::SourceStart::expert_region;
      else throw ConfigError("config: source_start must be 'restart' or 'expert_region'");
    }
  }
  if (j.contains("overcooked")) {
    const auto& oc = j.at("overcooked");
    detail::reject_unknown(oc, {"horizon"}, "overcooked");
    read(oc, "horizon", c.overcooked_horizon);
  }
  if (j.contains("source")) {
    const auto& s = j.at("source");
    detail::reject_unknown(s,
                           {"seeds", "allow_reduced", "convergence_fraction", "convergence_window", "min_steps",
                            "max_steps", "buffer_size", "reference_episodes"},
                           "source");
    read(s, "seeds", c.source.seeds);
    read(s, "allow_reduced", c.source.allow_reduced);
    read(s, "convergence_fraction", c.source.convergence_fraction);
    read(s, "convergence_window", c.source.convergence_window);
    read(s, "min_steps", c.source.min_steps);
    read(s, "max_steps", c.source.max_steps);
    read(s, "buffer_size", c.source.buffer_capacity);
    read(s, "reference_episodes", c.source.reference_episodes);
  }
  if (j.contains("classifier")) {
    const auto& k = j.at("classifier");
    detail::reject_unknown(k, {"hidden_units", "learning_rate", "adam_epsilon", "batch_size", "epochs", "test_fraction"},
                           "classifier");
    read(k, "hidden_units", c.classifier.hidden_units);
    read(k, "learning_rate", c.classifier.learning_rate);
    read(k, "adam_epsilon", c.classifier.adam_epsilon);
    read(k, "batch_size", c.classifier.batch_size);
    read(k, "epochs", c.classifier.epochs);
    read(k, "test_fraction", c.classifier.test_fraction);
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
}

}  // namespace medoe::harness
