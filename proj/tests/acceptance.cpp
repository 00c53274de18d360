// Acceptance checks. One PASS/FAIL line per criterion; exit status is nonzero if any gated check fails.

#include <chrono>
#include <cstdio>
#include <map>
#include <string>

#include "medoe/harness/experiment.hpp"
#include "support/checks.hpp"

using namespace medoe;
using namespace medoe::harness;

namespace {

int failures = 0;

void report(const char* name, bool pass, const std::string& detail) {
  std::printf("%s %-26s %s\n", pass ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

ExperimentConfig config(const char* name) {
  return load_config(std::filesystem::path(MEDOE_CONFIG_DIR) / (std::string(name) + ".json"));
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Sources only depend on these fields, so configs that agree on them can share artifacts.
bool same_sources(const ExperimentConfig& a, const ExperimentConfig& b) {
  return a.master_seed == b.master_seed && a.chainball.table_seed == b.chainball.table_seed &&
         a.source.seeds == b.source.seeds && a.source.min_steps == b.source.min_steps &&
         a.source.max_steps == b.source.max_steps && a.source.buffer_capacity == b.source.buffer_capacity &&
         a.source.convergence_fraction == b.source.convergence_fraction &&
         a.source.convergence_window == b.source.convergence_window && a.eval_episodes == b.eval_episodes &&
         a.ppo.actor_lr == b.ppo.actor_lr && a.ppo.critic_lr == b.ppo.critic_lr && a.ppo.kl == b.ppo.kl;
}

using Sources = std::array<std::vector<SourceArtifact>, 2>;

void check_chainball_end_to_end(const TaskSuite<chainball::Chainball>& suite, const ExperimentConfig& medoe_cfg,
                                const Sources& sources) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto bp_cfg = config("chainball_pre_skilled_bp");
  const auto scratch_cfg = config("chainball_from_scratch");
  const RunLog medoe = run_experiment(medoe_cfg, suite, &sources);
  const RunLog bp = run_experiment(bp_cfg, suite, &sources);
  const RunLog scratch = run_experiment(scratch_cfg, suite, nullptr);

  auto final_mean = [](const RunLog& log) {
    double sum = 0.0;
    const auto runs = rows_by_run(log);
    for (const auto& r : runs) sum += r.back().mean_return;
    return sum / static_cast<double>(runs.size());
  };
  const double fm = final_mean(medoe), fb = final_mean(bp), fs = final_mean(scratch);
  report("chainball_final_return", fm > fb && fm > fs,
         fmt("medoe %.3f  pre-skilled-BP %.3f  from-scratch %.3f  (%.0f s)", fm, fb, fs, seconds_since(t0)));

  // Pair runs by team and seed.
  std::map<std::pair<std::string, std::int64_t>, double> bp_auc;
  for (const auto& r : rows_by_run(bp)) bp_auc[{r.front().team_id, r.front().seed}] = compute_auc(r);
  int wins = 0, pairs = 0;
  for (const auto& r : rows_by_run(medoe)) {
    const auto it = bp_auc.find({r.front().team_id, r.front().seed});
    if (it == bp_auc.end()) continue;
    ++pairs;
    if (compute_auc(r) > it->second) ++wins;
  }
  report("chainball_auc_wins", pairs == 8 && wins >= 7, fmt("medoe beats pre-skilled-BP on %d/%d team-seed pairs", wins, pairs));
}

void check_classifier(const TaskSuite<chainball::Chainball>& suite, const Sources& sources) {
  const auto cfg = config("chainball_medoe_mlp");
  const std::array<const SourceArtifact*, 2> src{&sources[0][0], &sources[1][0]};
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<ClassifierReport> reports;
  train_team_classifiers(cfg, suite, src, derive_seed(cfg.master_seed, "acceptance-classifier"), &reports);
  const double elapsed = seconds_since(t0);
  double mean = 0.0;
  std::string per_agent;
  for (const auto& r : reports) {
    mean += r.test_bce;
    per_agent += fmt(" %.4f", r.test_bce);
  }
  mean /= static_cast<double>(reports.size());
  report("classifier_bce", mean <= 0.05 && elapsed <= 60.0,
         fmt("mean held-out BCE %.4f (agents%s), %.1f s", mean, per_agent.c_str(), elapsed));
}

void check_dynamics() {
  RngStream tables_rng(1, 0);
  const chainball::Chainball env(chainball::generate_tables(11, chainball::Variant::target, tables_rng), chainball::Params{});
  RngStream rng(77);
  double worst = 0.0;
  for (int s = 1; s <= 11; ++s) worst = std::max(worst, std::abs(checks::forward_frequency(env, s, 10000, rng) - 0.8));
  const double back = checks::backward_max_error(11);
  report("chainball_dynamics", worst <= 0.02 && back <= 1e-12,
         fmt("max |forward freq - 0.8| %.4f over 10000 samples/state, backward error %.2e", worst, back));
}

void check_gradients() {
  RngStream rng(2024);
  int n = 0;
  double worst = 0.0;
  for (int k = 0; k < 30; ++k, ++n) worst = std::max(worst, checks::actor_gradient_error(checks::random_actor_instance(rng)));
  for (int k = 0; k < 10; ++k, ++n)
    worst = std::max(worst, checks::critic_gradient_error(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0.1, 3)));
  BoostConfig strong = checks::chainball_boosts();
  strong.base_entropy = 0.05;
  strong.base_kl = 0.05;
  strong.base_clip = 0.05;
  strong.clip_boost = 4.0;
  for (int k = 0; k < 5; ++k, ++n) {
    auto actor = FunctionApproximator::mlp(5, {6}, 4, rng);
    auto critic = FunctionApproximator::mlp(5, {6}, 1, rng);
    auto prior = FunctionApproximator::mlp(5, {6}, 4, rng);
    const auto s = checks::random_agent_batch(actor, 5, 1, 8, strong, rng);
    const auto e = checks::network_gradient_error(actor, critic, BehaviourPrior(prior), s, strong);
    worst = std::max({worst, e.actor, e.critic});
  }
  report("loss_gradients", n >= 20 && worst <= 1e-4, fmt("%d instances, max relative error %.2e", n, worst));
}

void check_equivalence() {
  RngStream rng(7);
  int gae_bad = 0;
  for (int k = 0; k < 200; ++k) {
    const auto b = checks::random_return_batch(1 + static_cast<int>(rng.below(12)), 1 + static_cast<int>(rng.below(8)), rng);
    gae_bad += checks::gae_mismatches(b, rng.uniform(0.5, 1.0));
  }
  RngStream tables_rng(1, 0);
  const chainball::Chainball env(chainball::generate_tables(11, chainball::Variant::target, tables_rng), chainball::Params{});
  PPOConfig cfg;
  long ppo_bad = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RngStream init(seed);
    Team team;
    for (int i = 0; i < 4; ++i) {
      auto a = FunctionApproximator::tabular(11, 4);
      auto c = FunctionApproximator::tabular(11, 1);
      for (Eigen::Index p = 0; p < a.param_count(); ++p) a.params()[p] = init.uniform(-1.0, 1.0);
      for (Eigen::Index p = 0; p < c.param_count(); ++p) c.params()[p] = init.uniform(-1.0, 1.0);
      team.actors.push_back(a);
      team.critics.push_back(c);
    }
    team.freeze_priors();
    for (auto& a : team.actors)
      for (Eigen::Index p = 0; p < a.param_count(); ++p) a.params()[p] += init.uniform(-0.5, 0.5);
    const std::vector<DoEClassifier> cls(4, DoEClassifier::expert());
    const auto batch = collect_rollout(env, std::span<const FunctionApproximator>(team.actors),
                                       std::span<const FunctionApproximator>(team.critics), std::span<const DoEClassifier>(cls),
                                       BoostConfig::unboosted(cfg.temperature, cfg.entropy, cfg.kl, cfg.clip), cfg.n_steps,
                                       cfg.num_envs, seed);
    ppo_bad += checks::equivalence_mismatches(team, batch, cfg, seed);
  }
  report("ippo_equivalence", gae_bad == 0 && ppo_bad == 0,
         fmt("lambda=1 return mismatches %d/200 batches, unit-boost MEDoE vs IPPO differing params %ld", gae_bad, ppo_bad));
}

void check_boosts() {
  const auto cfg = checks::chainball_boosts();
  const auto d0 = compute_boosts(0.0, cfg), d1 = compute_boosts(1.0, cfg);
  const bool exact = d0.clip == 0.1 && d0.entropy == 6.4e-5 && d0.temperature == 3.0 && d1.kl == 5.2e-3 &&
                     d1.temperature == 1.0 && d1.clip == 2.5e-4 && d1.entropy == 1.6e-6 && d0.kl == 1.3e-4;
  RngStream rng(10);
  const int bad = checks::boost_monotonicity_violations(cfg, 1000, rng);
  report("boost_algebra", exact && bad == 0,
         fmt("endpoint values %s, monotonicity violations %d/1000", exact ? "exact" : "inexact", bad));
}

void check_overcooked() {
  const overcooked::Overcooked env(overcooked::Variant::target);
  RngStream rng(8);
  const double expected = 0.267 + 0.267 + 0.476;
  int bad = 0, longest = 0;
  for (int k = 0; k < 300; ++k) {
    const auto ep = checks::run_scripted(env, rng);
    longest = std::max(longest, ep.steps);
    if (!ep.done || ep.steps > 100 || ep.total_reward != expected) ++bad;
  }
  const int table = checks::kitchen_truth_table_mismatches();
  const auto rows = checks::kitchen_truth_table().size();
  report("overcooked_rules", bad == 0 && table == 0,
         fmt("scripted episodes off-target %d/300 (longest %d steps), DoE truth table mismatches %d/%zu", bad, longest,
             table, rows));
}

void check_auc() {
  RngStream rng(31);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const auto rows = checks::random_curve(2 + static_cast<int>(rng.below(30)), rng);
    worst = std::max(worst, std::abs(compute_auc(rows) - checks::auc_fine_grid(rows)));
  }
  const double constant = compute_auc(checks::curve({0, 50000, 1000000}, {0.7, 0.7, 0.7}));
  const double ramp = compute_auc(checks::curve({0, 1000}, {0.0, 1.0}));
  report("auc", worst <= 1e-12 && std::abs(constant - 0.7) <= 1e-12 && std::abs(ramp - 0.5) <= 1e-12,
         fmt("max oracle error %.2e, constant %.15g, ramp %.15g", worst, constant, ramp));
}

// Lowest ratio of replayed source return to the converged reference, per sub-team.
std::array<double, 2> worst_retention(const RunResult& run, const ComposedTeam& team) {
  std::array<double, 2> worst{1e300, 1e300};
  for (const auto& row : run.log.rows)
    for (std::size_t m = 0; m < 2; ++m)
      if (row.source_return[m]) worst[m] = std::min(worst[m], *row.source_return[m] / team.reference_return[m]);
  return worst;
}

void check_forgetting(const TaskSuite<chainball::Chainball>& suite, const Sources& sources) {
  const auto with_bp = config("chainball_forgetting_medoe");
  const auto no_bp = config("chainball_forgetting_no_bp");
  const auto teams = compose_teams(suite, sources[0], sources[1], true);
  const std::array<const SourceArtifact*, 2> src{&sources[0][0], &sources[1][0]};
  const auto a = worst_retention(run_single(with_bp, suite, &teams[0], src, 0), teams[0]);
  const auto b = worst_retention(run_single(no_bp, suite, &teams[0], src, 0), teams[0]);
  const bool refs_positive = teams[0].reference_return[0] > 0.0 && teams[0].reference_return[1] > 0.0;
  const bool kept = a[0] >= 0.8 && a[1] >= 0.8;
  const bool dropped = b[0] < 0.8 || b[1] < 0.8;
  report("forgetting", refs_positive && kept && dropped,
         fmt("min retention with BP def %.3f att %.3f, without BP def %.3f att %.3f (references %.3f, %.3f)", a[0], a[1],
             b[0], b[1], teams[0].reference_return[0], teams[0].reference_return[1]));
}

// Reported only; not part of the exit status.
void overcooked_smoke() {
  auto cfg = config("overcooked_from_scratch");
  cfg.seeds = {0};
  cfg.budget_steps = 50000;
  cfg.eval_every = 0;
  cfg.eval_episodes = 20;
  const auto t0 = std::chrono::steady_clock::now();
  const auto suite = make_overcooked_suite(cfg.overcooked_horizon);
  const auto log = run_experiment(cfg, suite, nullptr);
  std::printf("INFO %-26s from-scratch 50k steps: final mean return %.3f (%.0f s)\n", "overcooked_smoke",
              log.rows.back().mean_return, seconds_since(t0));
}

}  // namespace

int main() {
  try {
    check_dynamics();
    check_gradients();
    check_equivalence();
    check_boosts();
    check_overcooked();
    check_auc();

    const auto medoe_cfg = config("chainball_medoe_expert");
    const auto suite = make_chainball_suite(medoe_cfg.chainball);
    const auto t0 = std::chrono::steady_clock::now();
    const Sources sources = train_sources(medoe_cfg, suite);
    std::printf("INFO %-26s %zu + %zu drill checkpoints in %.0f s\n", "source_stage", sources[0].size(),
                sources[1].size(), seconds_since(t0));
    for (const char* name : {"chainball_pre_skilled_bp", "chainball_medoe_mlp", "chainball_forgetting_medoe",
                             "chainball_forgetting_no_bp"})
      if (!same_sources(medoe_cfg, config(name))) throw ConfigError(std::string(name) + ": source settings differ");

    check_classifier(suite, sources);
    check_chainball_end_to_end(suite, medoe_cfg, sources);
    check_forgetting(suite, sources);
    overcooked_smoke();
  } catch (const std::exception& e) {
    std::printf("FAIL %-26s %s\n", "harness_error", e.what());
    return 2;
  }
  std::printf("SUMMARY %d gated check(s) failed\n", failures);
  return failures ? 1 : 0;
}
