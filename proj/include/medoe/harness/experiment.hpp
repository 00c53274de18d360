#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "medoe/algo/trainer.hpp"
#include "medoe/doe/learned.hpp"
#include "medoe/envs/chainball.hpp"
#include "medoe/envs/overcooked.hpp"
#include "medoe/harness/config.hpp"
#include "medoe/harness/runlog.hpp"
#include "medoe/nn/checkpoint.hpp"

namespace medoe::harness {

// Target task plus the two drills. Sub-team m was trained in sources[m]; `slots[m]` maps target
// agent indices to the drill agent indices they came from.
template <Environment E>
struct TaskSuite {
  EnvKind kind = EnvKind::chainball;
  E target;
  std::array<E, 2> sources;
  std::array<std::string, 2> source_names;
  std::array<std::vector<std::pair<int, int>>, 2> slots;
  std::array<double, 2> known_max{1.0, 1.0};
};

inline TaskSuite<chainball::Chainball> make_chainball_suite(const ChainballSettings& s) {
  using namespace chainball;
  RngStream rng(s.table_seed, 0);
  auto target = generate_tables(s.params.num_states, Variant::target, rng);
  auto def = generate_tables(s.params.num_states, Variant::defence, rng, &target);
  auto att = generate_tables(s.params.num_states, Variant::attack, rng, &target);
  TaskSuite<Chainball> suite{EnvKind::chainball,
                             Chainball(target, s.params),
                             {Chainball(def, s.params), Chainball(att, s.params)},
                             {"def", "att"},
                             {std::vector<std::pair<int, int>>{{0, 0}, {1, 1}}, std::vector<std::pair<int, int>>{{2, 0}, {3, 1}}},
                             {}};
  for (int m = 0; m < 2; ++m) suite.known_max[static_cast<std::size_t>(m)] = optimal_expected_return(suite.sources[static_cast<std::size_t>(m)]);
  return suite;
}

// The drills' completion rewards sum to 1.
inline TaskSuite<overcooked::Overcooked> make_overcooked_suite(int horizon) {
  using namespace overcooked;
  return TaskSuite<Overcooked>{EnvKind::overcooked,
                               Overcooked(Variant::target, horizon),
                               {Overcooked(Variant::left, horizon), Overcooked(Variant::right, horizon)},
                               {"left", "right"},
                               {std::vector<std::pair<int, int>>{{0, 0}}, std::vector<std::pair<int, int>>{{1, 0}}},
                               {1.0, 1.0}};
}

// Fresh actors and critics for every agent of a task.
template <Environment E>
Team fresh_team(const E& env, const ExperimentConfig& cfg, RngStream& rng) {
  const TaskSpec& spec = env.spec();
  Team t;
  for (int i = 0; i < spec.num_agents; ++i) {
    if (cfg.actor_architecture == "tabular") {
      if (spec.num_state_ids <= 0) throw ConfigError("tabular approximators need enumerable states");
      t.actors.push_back(FunctionApproximator::tabular(spec.num_state_ids, spec.action_count(i)));
      t.critics.push_back(FunctionApproximator::tabular(spec.num_state_ids, 1));
    } else {
      t.actors.push_back(FunctionApproximator::mlp(spec.obs_dim(i), cfg.hidden_sizes, spec.action_count(i), rng));
      t.critics.push_back(FunctionApproximator::mlp(spec.obs_dim(i), cfg.hidden_sizes, 1, rng));
    }
  }
  return t;
}

// ---------------------------------------------------------------------------------------------
// Source stage

struct SourceArtifact {
  std::string task;
  int seed = 0;
  Team team;
  std::vector<std::vector<Observation>> buffers;
  std::int64_t steps = 0;
  bool converged = false;
  double final_mean = 0.0;
  double reference_return = 0.0;  // converged policies replayed in the drill at T_base
};

inline std::uint64_t source_seed(const ExperimentConfig& cfg, const std::string& task, int seed) {
  return derive_seed(derive_seed(cfg.master_seed, "source-" + task), static_cast<std::uint64_t>(seed));
}

// Evaluation seed shared by every replay of sub-team m in its drill, so the step-0 replay reproduces
// the reference return exactly.
inline std::uint64_t source_eval_seed(const ExperimentConfig& cfg, int subteam) {
  return derive_seed(derive_seed(cfg.master_seed, "source-return"), static_cast<std::uint64_t>(subteam));
}

template <Environment E>
SourceArtifact train_source(const ExperimentConfig& cfg, const TaskSuite<E>& suite, int subteam, int seed) {
  const auto m = static_cast<std::size_t>(subteam);
  const E& env = suite.sources[m];
  const std::uint64_t s = source_seed(cfg, suite.source_names[m], seed);
  RngStream init_rng(derive_seed(s, "init"));
  SourceStopRule stop;
  stop.known_max = suite.known_max[m];
  stop.fraction = cfg.source.convergence_fraction;
  stop.window = cfg.source.convergence_window;
  stop.min_steps = cfg.source.min_steps;
  stop.max_steps = cfg.source.max_steps;
  SourceResult r = train_source_stage(env, fresh_team(env, cfg, init_rng), cfg.ppo, stop, cfg.source.buffer_capacity, s);
  SourceArtifact a;
  a.task = suite.source_names[m];
  a.seed = seed;
  a.steps = r.steps;
  a.converged = r.converged;
  a.final_mean = r.final_mean;
  for (const auto& b : r.buffers) a.buffers.push_back(b.snapshot());
  a.team = std::move(r.team);
  a.team.optimizers.clear();
  a.reference_return = evaluate_policies(env, std::span<const FunctionApproximator>(a.team.actors), cfg.ppo.temperature,
                                         cfg.eval_episodes, source_eval_seed(cfg, subteam))
                           .mean_return;
  return a;
}

inline std::filesystem::path source_dir(const std::filesystem::path& root, const std::string& task, int seed) {
  return root / "source" / (task + "_seed" + std::to_string(seed));
}

inline Checkpoint buffer_checkpoint(const std::vector<Observation>& buf) {
  Checkpoint c;
  c.manifest["kind"] = "buffer";
  const std::size_t dim = buf.empty() ? 0 : buf.front().features.size();
  c.manifest["count"] = buf.size();
  c.manifest["dim"] = dim;
  auto& f = c.arrays["features"];
  auto& ids = c.arrays["state_ids"];
  f.reserve(buf.size() * dim);
  for (const auto& o : buf) {
    f.insert(f.end(), o.features.begin(), o.features.end());
    ids.push_back(static_cast<double>(o.state_id));
  }
  return c;
}

inline std::vector<Observation> buffer_from_checkpoint(const Checkpoint& c) {
  const auto n = c.manifest.at("count").get<std::size_t>();
  const auto dim = c.manifest.at("dim").get<std::size_t>();
  const auto& f = c.arrays.at("features");
  const auto& ids = c.arrays.at("state_ids");
  if (f.size() != n * dim || ids.size() != n) throw ConfigError("buffer checkpoint: inconsistent sizes");
  std::vector<Observation> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].features.assign(f.begin() + static_cast<std::ptrdiff_t>(i * dim), f.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
    out[i].state_id = static_cast<int>(ids[i]);
  }
  return out;
}

inline void save_team(const std::filesystem::path& dir, const Team& t) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < t.actors.size(); ++i) {
    save_approximator(dir / ("actor_" + std::to_string(i) + ".ckpt"), t.actors[i], "actor");
    save_approximator(dir / ("critic_" + std::to_string(i) + ".ckpt"), t.critics[i], "critic");
  }
}

inline Team load_team(const std::filesystem::path& dir, int num_agents) {
  Team t;
  for (int i = 0; i < num_agents; ++i) {
    const auto a = dir / ("actor_" + std::to_string(i) + ".ckpt");
    const auto c = dir / ("critic_" + std::to_string(i) + ".ckpt");
    if (!std::filesystem::exists(a) || !std::filesystem::exists(c))
      throw ConfigError("missing checkpoint for agent " + std::to_string(i) + " in " + dir.string());
    t.actors.push_back(load_approximator(a));
    t.critics.push_back(load_approximator(c));
  }
  return t;
}

inline void save_source(const std::filesystem::path& root, const SourceArtifact& a) {
  const auto dir = source_dir(root, a.task, a.seed);
  save_team(dir, a.team);
  for (std::size_t i = 0; i < a.buffers.size(); ++i)
    buffer_checkpoint(a.buffers[i]).save(dir / ("buffer_" + std::to_string(i) + ".ckpt"));
  nlohmann::json m;
  m["stage"] = "source";
  m["task"] = a.task;
  m["seed"] = a.seed;
  m["agents"] = a.team.size();
  m["steps"] = a.steps;
  m["converged"] = a.converged;
  m["final_mean"] = a.final_mean;
  m["reference_return"] = a.reference_return;
  std::ofstream(dir / "manifest.json") << m.dump(2) << '\n';
}

inline SourceArtifact load_source(const std::filesystem::path& root, const std::string& task, int seed) {
  const auto dir = source_dir(root, task, seed);
  const auto mpath = dir / "manifest.json";
  if (!std::filesystem::exists(mpath)) throw ConfigError("missing source checkpoint " + dir.string());
  nlohmann::json m = nlohmann::json::parse(std::ifstream(mpath));
  SourceArtifact a;
  a.task = task;
  a.seed = seed;
  a.steps = m.at("steps").get<std::int64_t>();
  a.converged = m.at("converged").get<bool>();
  a.final_mean = m.at("final_mean").get<double>();
  a.reference_return = m.at("reference_return").get<double>();
  const int agents = m.at("agents").get<int>();
  a.team = load_team(dir, agents);
  for (int i = 0; i < agents; ++i) {
    const auto p = dir / ("buffer_" + std::to_string(i) + ".ckpt");
    if (!std::filesystem::exists(p)) throw ConfigError("missing buffer checkpoint " + p.string());
    a.buffers.push_back(buffer_from_checkpoint(Checkpoint::load(p)));
  }
  return a;
}

inline Checkpoint tables_checkpoint(const chainball::ForwardTables& t) {
  Checkpoint c;
  c.manifest["kind"] = "chainball_tables";
  c.manifest["variant"] = chainball::to_string(t.variant);
  c.manifest["num_states"] = t.num_states;
  c.manifest["num_agents"] = t.num_agents;
  c.arrays["forward_probabilities"] = t.forward;
  c.arrays["optimal_joint_action"].assign(t.optimal_joint.begin(), t.optimal_joint.end());
  return c;
}

// ---------------------------------------------------------------------------------------------
// Team composition

struct ComposedTeam {
  std::string team_id;
  std::array<int, 2> source_index{0, 0};  // positions in the per-task artifact lists
  Team team;
  std::int64_t source_steps = 0;
  std::array<double, 2> reference_return{0.0, 0.0};
};

// Every pairing of a sub-team-0 artifact with a sub-team-1 artifact.
template <Environment E>
std::vector<ComposedTeam> compose_teams(const TaskSuite<E>& suite, const std::vector<SourceArtifact>& first,
                                        const std::vector<SourceArtifact>& second, bool allow_reduced = false) {
  if (!allow_reduced && (first.size() != 4 || second.size() != 4))
    throw ConfigError("compose_teams: expected four source checkpoints per task");
  if (first.empty() || second.empty()) throw ConfigError("compose_teams: no source checkpoints");
  const int A = suite.target.spec().num_agents;
  std::vector<ComposedTeam> out;
  for (std::size_t a = 0; a < first.size(); ++a) {
    for (std::size_t b = 0; b < second.size(); ++b) {
      ComposedTeam ct;
      ct.team_id = suite.source_names[0] + std::to_string(first[a].seed) + "-" + suite.source_names[1] +
                   std::to_string(second[b].seed);
      ct.source_index = {static_cast<int>(a), static_cast<int>(b)};
      ct.team.actors.resize(static_cast<std::size_t>(A));
      ct.team.critics.resize(static_cast<std::size_t>(A));
      const SourceArtifact* arts[2] = {&first[a], &second[b]};
      for (int m = 0; m < 2; ++m) {
        for (auto [tgt, src] : suite.slots[static_cast<std::size_t>(m)]) {
          ct.team.actors[static_cast<std::size_t>(tgt)] = arts[m]->team.actors.at(static_cast<std::size_t>(src));
          ct.team.critics[static_cast<std::size_t>(tgt)] = arts[m]->team.critics.at(static_cast<std::size_t>(src));
        }
        ct.reference_return[static_cast<std::size_t>(m)] = arts[m]->reference_return;
      }
      ct.source_steps = first[a].steps + second[b].steps;
      out.push_back(std::move(ct));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Forgetting: replay each sub-team's current policies in its own drill. Drill agents that are not
// part of the target team keep their source-stage policies.

template <Environment E>
std::array<double, 2> source_task_returns(const ExperimentConfig& cfg, const TaskSuite<E>& suite,
                                          std::span<const FunctionApproximator> actors,
                                          const std::array<const SourceArtifact*, 2>& sources) {
  std::array<double, 2> out{};
  for (int m = 0; m < 2; ++m) {
    const auto um = static_cast<std::size_t>(m);
    std::vector<FunctionApproximator> drill = sources[um]->team.actors;
    for (auto [tgt, src] : suite.slots[um]) drill.at(static_cast<std::size_t>(src)) = actors[static_cast<std::size_t>(tgt)];
    out[um] = evaluate_policies(suite.sources[um], std::span<const FunctionApproximator>(drill), cfg.ppo.temperature,
                                cfg.eval_episodes, source_eval_seed(cfg, m))
                  .mean_return;
  }
  return out;
}

struct ForgettingPoint {
  std::int64_t stage_step = 0;
  std::array<double, 2> source_return{};
};

// Replays saved adjustment checkpoints (step, actors) in the drills.
template <Environment E>
std::vector<ForgettingPoint> evaluate_forgetting(const ExperimentConfig& cfg, const TaskSuite<E>& suite,
                                                 const std::vector<std::pair<std::int64_t, std::vector<FunctionApproximator>>>& checkpoints,
                                                 const std::array<const SourceArtifact*, 2>& sources) {
  std::vector<ForgettingPoint> out;
  for (const auto& [step, actors] : checkpoints)
    out.push_back({step, source_task_returns(cfg, suite, std::span<const FunctionApproximator>(actors), sources)});
  return out;
}

// ---------------------------------------------------------------------------------------------
// Learned classifiers

struct ClassifierReport {
  int agent = 0;
  std::size_t dataset_size = 0;
  double test_bce = 0.0;
};

// One classifier per target agent: positives from that agent's own drill buffer, negatives from every
// buffer of the other drill.
template <Environment E>
std::vector<DoEClassifier> train_team_classifiers(const ExperimentConfig& cfg, const TaskSuite<E>& suite,
                                                  const std::array<const SourceArtifact*, 2>& sources,
                                                  std::uint64_t seed, std::vector<ClassifierReport>* reports = nullptr) {
  const int A = suite.target.spec().num_agents;
  std::vector<DoEClassifier> out(static_cast<std::size_t>(A), DoEClassifier::constant(0.5));
  for (int m = 0; m < 2; ++m) {
    const auto um = static_cast<std::size_t>(m);
    const SourceArtifact& own = *sources[um];
    const SourceArtifact& other = *sources[1 - um];
    for (auto [tgt, src] : suite.slots[um]) {
      RngStream rng(derive_seed(seed, static_cast<std::uint64_t>(tgt)));
      const auto& pos = own.buffers.at(static_cast<std::size_t>(src));
      DoEDataset ds = build_dataset(pos, other.buffers, rng, cfg.classifier.test_fraction);
      TrainedClassifier tc = train_classifier(ds, rng, cfg.classifier);
      if (reports) reports->push_back({tgt, ds.size(), tc.test_bce});
      out[static_cast<std::size_t>(tgt)] = std::move(tc.classifier);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Adjustment runs

struct RunResult {
  std::string run_id;
  RunLog log;
  Team team;
  TrainingOutcome outcome;
  std::vector<ClassifierReport> classifier_reports;
};

inline std::string make_run_id(Baseline b, const std::string& team_id, int seed) {
  return std::string(to_string(b)) + "_" + team_id + "_seed" + std::to_string(seed);
}

// Rollout/update/eval streams depend on the team and seed only, so baselines sharing a team and seed
// are paired.
inline std::uint64_t run_seed(const ExperimentConfig& cfg, const std::string& team_id, int seed) {
  return derive_seed(derive_seed(derive_seed(cfg.master_seed, "adjust"), team_id), static_cast<std::uint64_t>(seed));
}

// One baseline on one team and seed. `composed` and `sources` are ignored for from-scratch runs.
template <Environment E>
RunResult run_single(const ExperimentConfig& cfg, const TaskSuite<E>& suite, const ComposedTeam* composed,
                     const std::array<const SourceArtifact*, 2>& sources, int seed,
                     const std::filesystem::path& run_dir = {}) {
  const Baseline b = cfg.baseline;
  const bool from_scratch = !uses_source_stage(b);
  if (!from_scratch && (!composed || !sources[0] || !sources[1]))
    throw ConfigError(std::string(to_string(b)) + ": needs source checkpoints");
  const E& env = suite.target;
  const int A = env.spec().num_agents;
  const std::string team_id = from_scratch ? "scratch" : composed->team_id;
  const std::uint64_t rs = run_seed(cfg, team_id, seed);

  RunResult res;
  res.run_id = make_run_id(b, team_id, seed);
  Team team;
  if (from_scratch) {
    RngStream init_rng(derive_seed(rs, "init"));
    team = fresh_team(env, cfg, init_rng);
  } else {
    team = composed->team;
    if (uses_medoe(b) || uses_prior(b)) team.freeze_priors();
  }

  TrainingSetup setup;
  setup.trainer = uses_medoe(b) ? TrainerKind::medoe : TrainerKind::ippo;
  setup.ppo = cfg.ppo;
  setup.boosts = cfg.boosts;
  if (b == Baseline::medoe_expert_no_bp) setup.boosts.base_kl = 0.0;
  if (b == Baseline::medoe_mlp) {
    setup.classifiers = train_team_classifiers(cfg, suite, sources, derive_seed(rs, "classifier"), &res.classifier_reports);
  } else {
    setup.classifiers.assign(static_cast<std::size_t>(A), DoEClassifier::expert());
  }
  const std::int64_t offset = from_scratch ? 0 : composed->source_steps;
  if (offset >= cfg.budget_steps)
    throw ConfigError(res.run_id + ": source stage already used the whole budget");
  setup.budget_steps = cfg.budget_steps - offset;
  setup.eval_every = cfg.eval_every > 0 ? cfg.eval_every : setup.budget_steps;
  setup.eval_episodes = cfg.eval_episodes;
  setup.seed = rs;

  res.log.num_agents = A;
  res.log.num_subteams = 2;
  const bool track = cfg.track_source_returns && !from_scratch;
  std::int64_t next_ckpt = 0;
  auto on_eval = [&](const EvalPoint& pt, const Team& t) {
    RunRow row;
    row.run_id = res.run_id;
    row.baseline = to_string(b);
    row.env = to_string(suite.kind);
    row.team_id = team_id;
    row.seed = seed;
    row.total_step = offset + pt.stage_step;
    row.mean_return = pt.result.mean_return;
    row.ci95 = pt.result.ci95;
    row.doe_rate = pt.doe_rate;
    row.source_return.assign(2, std::nullopt);
    if (track) {
      const auto r = source_task_returns(cfg, suite, std::span<const FunctionApproximator>(t.actors), sources);
      row.source_return = {r[0], r[1]};
    }
    res.log.rows.push_back(std::move(row));
    if (!run_dir.empty() && cfg.checkpoint_every > 0 && pt.stage_step >= next_ckpt) {
      save_team(run_dir / "adjustment" / ("step_" + std::to_string(pt.stage_step)), t);
      while (next_ckpt <= pt.stage_step) next_ckpt += cfg.checkpoint_every;
    }
  };
  res.outcome = train_team(env, team, setup, on_eval);
  res.team = std::move(team);
  res.team.optimizers.clear();

  if (!run_dir.empty()) {
    save_team(run_dir / "adjustment", res.team);
    for (std::size_t i = 0; i < setup.classifiers.size(); ++i)
      if (setup.classifiers[i].kind() == DoEClassifier::Kind::learned)
        save_approximator(run_dir / "classifiers" / ("agent_" + std::to_string(i) + ".ckpt"),
                          setup.classifiers[i].network(), "classifier");
    nlohmann::json m;
    m["stage"] = "adjustment";
    m["run_id"] = res.run_id;
    m["baseline"] = to_string(b);
    m["env"] = to_string(suite.kind);
    m["team_id"] = team_id;
    m["seed"] = seed;
    m["source_steps"] = offset;
    m["adjustment_steps"] = res.outcome.steps;
    m["updates"] = res.outcome.updates;
    if (!from_scratch) m["sources"] = {sources[0]->task + "_seed" + std::to_string(sources[0]->seed),
                                       sources[1]->task + "_seed" + std::to_string(sources[1]->seed)};
    std::ofstream(run_dir / "manifest.json") << m.dump(2) << '\n';
    write_run_log(run_dir / "log.csv", res.log);
  }
  return res;
}

// Source artifacts for every configured seed of both drills, loaded from `root`.
template <Environment E>
std::array<std::vector<SourceArtifact>, 2> load_sources(const ExperimentConfig& cfg, const TaskSuite<E>& suite,
                                                        const std::filesystem::path& root) {
  std::array<std::vector<SourceArtifact>, 2> out;
  for (int m = 0; m < 2; ++m)
    for (int s : cfg.source.seeds) out[static_cast<std::size_t>(m)].push_back(load_source(root, suite.source_names[static_cast<std::size_t>(m)], s));
  return out;
}

template <Environment E>
std::array<std::vector<SourceArtifact>, 2> train_sources(const ExperimentConfig& cfg, const TaskSuite<E>& suite,
                                                         const std::function<void(const SourceArtifact&)>& on_done = {}) {
  std::array<std::vector<SourceArtifact>, 2> out;
  for (int m = 0; m < 2; ++m)
    for (int s : cfg.source.seeds) {
      out[static_cast<std::size_t>(m)].push_back(train_source(cfg, suite, m, s));
      if (on_done) on_done(out[static_cast<std::size_t>(m)].back());
    }
  return out;
}

// All teams x seeds for the configured baseline (seeds only for from-scratch). Rows of every run are
// concatenated in the returned log.
template <Environment E>
RunLog run_experiment(const ExperimentConfig& cfg, const TaskSuite<E>& suite,
                      const std::array<std::vector<SourceArtifact>, 2>* sources,
                      const std::filesystem::path& out_dir = {},
                      const std::function<void(const RunResult&)>& on_run = {}) {
  RunLog all;
  all.num_agents = suite.target.spec().num_agents;
  all.num_subteams = 2;
  auto take = [&](RunResult r) {
    all.rows.insert(all.rows.end(), r.log.rows.begin(), r.log.rows.end());
    if (on_run) on_run(r);
  };
  auto dir_for = [&](const std::string& id) { return out_dir.empty() ? out_dir : out_dir / id; };
  if (!uses_source_stage(cfg.baseline)) {
    for (int seed : cfg.seeds) {
      const std::string id = make_run_id(cfg.baseline, "scratch", seed);
      take(run_single(cfg, suite, nullptr, {nullptr, nullptr}, seed, dir_for(id)));
    }
  } else {
    if (!sources) throw ConfigError("run_experiment: source checkpoints are required");
    const auto teams = compose_teams(suite, (*sources)[0], (*sources)[1], cfg.source.allow_reduced);
    for (const auto& ct : teams) {
      const std::array<const SourceArtifact*, 2> src{&(*sources)[0][static_cast<std::size_t>(ct.source_index[0])],
                                                     &(*sources)[1][static_cast<std::size_t>(ct.source_index[1])]};
      for (int seed : cfg.seeds) take(run_single(cfg, suite, &ct, src, seed, dir_for(make_run_id(cfg.baseline, ct.team_id, seed))));
    }
  }
  if (!out_dir.empty()) write_run_log(out_dir / "runlog.csv", all);
  return all;
}

}  // namespace medoe::harness
