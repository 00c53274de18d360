#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "medoe/harness/experiment.hpp"

namespace fs = std::filesystem;
using namespace medoe;
using namespace medoe::harness;

namespace {

#ifndef MEDOE_CONFIG_DIR
#define MEDOE_CONFIG_DIR "configs"
#endif

struct Common {
  std::string config;
  std::optional<int> seed;
  std::string out;
  bool force = false;
  std::optional<int> parallel_envs;
  std::optional<std::int64_t> budget;
};

void add_common(CLI::App* sub, Common& c, bool needs_config = true) {
  auto* opt = sub->add_option("--config,-c", c.config, "config name (looked up in configs/) or path");
  if (needs_config) opt->required();
  sub->add_option("--seed", c.seed, "run only this seed");
  sub->add_option("--out,-o", c.out, "output root (overrides the config's output_dir)");
  sub->add_flag("--force", c.force, "overwrite existing outputs");
  sub->add_option("--parallel-envs", c.parallel_envs, "override parallel_environments");
  sub->add_option("--budget", c.budget, "override the total step budget per run");
}

fs::path resolve_config(const std::string& name) {
  for (const fs::path& p : {fs::path(name), fs::path(name + ".json"), fs::path("configs") / (name + ".json"),
                            fs::path(MEDOE_CONFIG_DIR) / (name + ".json")})
    if (fs::is_regular_file(p)) return p;
  throw ConfigError("config '" + name + "' not found");
}

ExperimentConfig load(const Common& c) {
  ExperimentConfig cfg = load_config(resolve_config(c.config));
  if (c.seed) cfg.seeds = {*c.seed};
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (c.parallel_envs) cfg.ppo.num_envs = *c.parallel_envs;
  if (c.budget) cfg.budget_steps = *c.budget;
  cfg.validate();
  return cfg;
}

void claim_output(const fs::path& p, bool force) {
  if (fs::exists(p)) {
    if (!force) throw ConfigError(p.string() + " already exists (use --force to overwrite)");
    fs::remove_all(p);
  }
}

template <class Fn>
void with_suite(const ExperimentConfig& cfg, Fn&& fn) {
  if (cfg.environment == EnvKind::chainball) {
    fn(make_chainball_suite(cfg.chainball));
  } else {
    fn(make_overcooked_suite(cfg.overcooked_horizon));
  }
}

int cmd_train_source(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const fs::path root = cfg.output_dir;
  with_suite(cfg, [&](const auto& suite) {
    for (int m = 0; m < 2; ++m)
      for (int s : cfg.source.seeds) claim_output(source_dir(root, suite.source_names[static_cast<std::size_t>(m)], s), c.force);
    if constexpr (std::is_same_v<std::decay_t<decltype(suite)>, TaskSuite<chainball::Chainball>>) {
      tables_checkpoint(suite.target.tables()).save(root / "tables" / "target.ckpt");
      for (const auto& src : suite.sources)
        tables_checkpoint(src.tables()).save(root / "tables" / (std::string(chainball::to_string(src.variant())) + ".ckpt"));
    }
    train_sources(cfg, suite, [&](const SourceArtifact& a) {
      save_source(root, a);
      spdlog::info("source {} seed {}: {} steps, converged={}, moving mean {:.3f}, replay return {:.3f}", a.task, a.seed,
                   a.steps, a.converged, a.final_mean, a.reference_return);
    });
  });
  return 0;
}

int cmd_train_classifier(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const fs::path root = cfg.output_dir;
  with_suite(cfg, [&](const auto& suite) {
    const auto sources = load_sources(cfg, suite, root);
    const auto teams = compose_teams(suite, sources[0], sources[1], cfg.source.allow_reduced);
    for (const auto& ct : teams) {
      const fs::path dir = root / "classifiers" / ct.team_id;
      claim_output(dir, c.force);
      const std::array<const SourceArtifact*, 2> src{&sources[0][static_cast<std::size_t>(ct.source_index[0])],
                                                     &sources[1][static_cast<std::size_t>(ct.source_index[1])]};
      std::vector<ClassifierReport> reports;
      const auto classifiers =
          train_team_classifiers(cfg, suite, src, derive_seed(cfg.master_seed, "classifier-" + ct.team_id), &reports);
      for (std::size_t i = 0; i < classifiers.size(); ++i)
        save_approximator(dir / ("agent_" + std::to_string(i) + ".ckpt"), classifiers[i].network(), "classifier");
      for (const auto& r : reports)
        std::cout << ct.team_id << " agent_" << r.agent + 1 << " examples=" << r.dataset_size
                  << " test_bce=" << r.test_bce << '\n';
    }
  });
  return 0;
}

int cmd_compose(const Common& c) {
  const ExperimentConfig cfg = load(c);
  with_suite(cfg, [&](const auto& suite) {
    const auto sources = load_sources(cfg, suite, cfg.output_dir);
    const auto teams = compose_teams(suite, sources[0], sources[1], cfg.source.allow_reduced);
    nlohmann::json out = nlohmann::json::array();
    for (const auto& t : teams) {
      out.push_back({{"team_id", t.team_id}, {"source_steps", t.source_steps}});
      std::cout << t.team_id << " source_steps=" << t.source_steps << '\n';
    }
    std::ofstream(fs::path(cfg.output_dir) / "teams.json") << out.dump(2) << '\n';
  });
  return 0;
}

int cmd_run(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const fs::path dir = fs::path(cfg.output_dir) / (cfg.name + (c.seed ? "_seed" + std::to_string(*c.seed) : ""));
  with_suite(cfg, [&](const auto& suite) {
    std::optional<std::array<std::vector<SourceArtifact>, 2>> sources;
    if (uses_source_stage(cfg.baseline)) sources = load_sources(cfg, suite, cfg.output_dir);
    claim_output(dir, c.force);
    run_experiment(cfg, suite, sources ? &*sources : nullptr, dir, [](const RunResult& r) {
      const auto& last = r.log.rows.back();
      spdlog::info("{}: final mean return {:.3f} +- {:.3f}, auc {:.4f}", r.run_id, last.mean_return, last.ci95,
                   r.log.rows.size() >= 2 ? compute_auc(r.log.rows) : last.mean_return);
    });
    std::cout << (dir / "runlog.csv").string() << '\n';
  });
  return 0;
}

int cmd_sweep(const Common& c, const std::string& param, int samples) {
  ExperimentConfig cfg = load(c);
  const BoostParameter p = boost_parameter_from_string(param);
  if (!uses_medoe(cfg.baseline)) throw ConfigError("sweep: the config's baseline must be a MEDoE variant");
  const fs::path dir = fs::path(cfg.output_dir) / (cfg.name + "_sweep_" + to_string(p));
  RngStream rng(derive_seed(cfg.master_seed, std::string("sweep-") + to_string(p)));
  const auto configs = sweep_sample(cfg.boosts, p, samples, rng);
  with_suite(cfg, [&](const auto& suite) {
    const auto sources = load_sources(cfg, suite, cfg.output_dir);
    claim_output(dir, c.force);
    fs::create_directories(dir);
    std::ofstream out(dir / "sweep.csv");
    out << "sample,parameter,value,run_id,auc,final_mean_return\n";
    for (std::size_t k = 0; k < configs.size(); ++k) {
      ExperimentConfig ck = cfg;
      ck.boosts = configs[k];
      const RunLog log = run_experiment(ck, suite, &sources);
      for (const auto& run : rows_by_run(log)) {
        out << k << ',' << to_string(p) << ',' << boost_field(ck.boosts, p) << ',' << run.front().run_id << ','
            << compute_auc(run) << ',' << run.back().mean_return << '\n';
      }
      spdlog::info("sweep sample {}/{}: {} = {:.4g}", k + 1, configs.size(), to_string(p), boost_field(ck.boosts, p));
    }
  });
  std::cout << (dir / "sweep.csv").string() << '\n';
  return 0;
}

int cmd_eval_forgetting(const Common& c, const std::string& run_dir_arg) {
  const ExperimentConfig cfg = load(c);
  const fs::path run_dir = run_dir_arg;
  const fs::path manifest_path = run_dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw ConfigError("no run manifest in " + run_dir.string());
  const auto manifest = nlohmann::json::parse(std::ifstream(manifest_path));
  if (!manifest.contains("sources")) {
    spdlog::info("{}: from-scratch run, nothing to evaluate", run_dir.string());
    return 0;
  }
  const std::int64_t offset = manifest.at("source_steps").get<std::int64_t>();
  with_suite(cfg, [&](const auto& suite) {
    std::array<SourceArtifact, 2> src;
    for (int m = 0; m < 2; ++m) {
      const std::string tag = manifest.at("sources").at(static_cast<std::size_t>(m)).template get<std::string>();
      const auto pos = tag.rfind("_seed");
      src[static_cast<std::size_t>(m)] = load_source(cfg.output_dir, tag.substr(0, pos), std::stoi(tag.substr(pos + 5)));
    }
    std::vector<std::pair<std::int64_t, std::vector<FunctionApproximator>>> ckpts;
    const std::regex step_re("step_([0-9]+)");
    for (const auto& e : fs::directory_iterator(run_dir / "adjustment")) {
      std::smatch m;
      const std::string name = e.path().filename().string();
      if (e.is_directory() && std::regex_match(name, m, step_re))
        ckpts.emplace_back(std::stoll(m[1]), load_team(e.path(), suite.target.spec().num_agents).actors);
    }
    if (ckpts.empty()) throw ConfigError("no periodic checkpoints under " + (run_dir / "adjustment").string());
    std::sort(ckpts.begin(), ckpts.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    const auto pts = evaluate_forgetting(cfg, suite, ckpts, {&src[0], &src[1]});
    std::ofstream out(run_dir / "forgetting.csv");
    out << "total_step,source_return_subteam_1,source_return_subteam_2,reference_subteam_1,reference_subteam_2\n";
    for (const auto& p : pts)
      out << offset + p.stage_step << ',' << p.source_return[0] << ',' << p.source_return[1] << ','
          << src[0].reference_return << ',' << src[1].reference_return << '\n';
    std::cout << (run_dir / "forgetting.csv").string() << '\n';
  });
  return 0;
}

int cmd_auc(const std::string& path) {
  const RunLog log = read_run_log(fs::path(path));
  const auto runs = rows_by_run(log);
  if (runs.size() == 1) {
    std::cout << compute_auc(runs.front()) << '\n';
  } else {
    for (const auto& r : runs) std::cout << r.front().run_id << ',' << compute_auc(r) << '\n';
  }
  return 0;
}

int cmd_render(const std::string& env, const std::string& variant, std::uint64_t seed, int steps) {
  RngStream rng(seed, 0);
  if (env == "overcooked") {
    const overcooked::Overcooked task(overcooked::variant_from_string(variant));
    auto st = task.reset(rng);
    std::cout << overcooked::Overcooked::render(st) << '\n';
    std::vector<int> a(2);
    for (int t = 0; t < steps; ++t) {
      for (int& x : a) x = static_cast<int>(rng.below(overcooked::kNumActions));
      const auto out = task.step(st, a, rng);
      std::cout << "t=" << t + 1 << " actions=" << a[0] << ',' << a[1] << " reward=" << out.reward << '\n'
                << overcooked::Overcooked::render(st) << '\n';
      if (out.done || out.truncated) break;
    }
    return 0;
  }
  if (env == "chainball") {
    const auto suite = make_chainball_suite(ChainballSettings{});
    const auto v = chainball::variant_from_string(variant);
    const chainball::Chainball& task =
        v == chainball::Variant::target ? suite.target : suite.sources[v == chainball::Variant::defence ? 0 : 1];
    auto st = task.reset(rng);
    const int n = task.params().num_states;
    auto line = [&](int s) {
      std::string row(static_cast<std::size_t>(n), '.');
      row[static_cast<std::size_t>(s - 1)] = 'o';
      return row;
    };
    std::cout << line(st.s) << '\n';
    std::vector<int> a(static_cast<std::size_t>(task.spec().num_agents));
    for (int t = 0; t < steps; ++t) {
      for (int& x : a) x = static_cast<int>(rng.below(chainball::kActionsPerAgent));
      const auto out = task.step(st, a, rng);
      std::cout << line(st.s) << "  reward=" << out.reward << (out.done ? " done" : "") << '\n';
      if (out.done || out.truncated) break;
    }
    return 0;
  }
  throw ConfigError("render: unknown environment '" + env + "'");
}

void set_log_level() {
  const char* lvl = std::getenv("MEDOE_LOG_LEVEL");
  spdlog::set_level(lvl ? spdlog::level::from_str(lvl) : spdlog::level::info);
}

}  // namespace

int main(int argc, char** argv) {
  set_log_level();
  CLI::App app{"MEDoE curriculum pipeline"};
  app.require_subcommand(1);

  Common common;
  auto* train_source = app.add_subcommand("train-source", "train every drill for the configured source seeds");
  add_common(train_source, common);
  auto* train_classifier = app.add_subcommand("train-classifier", "train learned DoE classifiers from source buffers");
  add_common(train_classifier, common);
  auto* compose = app.add_subcommand("compose", "list the composed teams");
  add_common(compose, common);
  auto* run = app.add_subcommand("run", "run the configured baseline for every team and seed");
  add_common(run, common);

  auto* sweep = app.add_subcommand("sweep", "boost sensitivity sweep");
  add_common(sweep, common);
  std::string sweep_param = "temp_boost";
  int sweep_samples = 16;
  sweep->add_option("--param", sweep_param, "temp_boost | ent_coef_boost | kl_coef_boost | clip_coef_boost");
  sweep->add_option("--samples", sweep_samples, "number of sampled configurations");

  auto* forgetting = app.add_subcommand("eval-forgetting", "replay periodic adjustment checkpoints in the drills");
  add_common(forgetting, common);
  std::string run_dir;
  forgetting->add_option("--run", run_dir, "run directory containing adjustment/step_* checkpoints")->required();

  auto* auc = app.add_subcommand("auc", "area under the evaluation curve of a run log");
  std::string log_path;
  auc->add_option("--log", log_path, "run log CSV")->required();

  auto* render = app.add_subcommand("render", "print a text rendering of a random-policy episode");
  std::string render_env = "overcooked", render_variant = "target";
  std::uint64_t render_seed = 0;
  int render_steps = 10;
  render->add_option("--env", render_env, "chainball | overcooked");
  render->add_option("--variant", render_variant, "target | left | right | att | def");
  render->add_option("--seed", render_seed);
  render->add_option("--steps", render_steps);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train_source) return cmd_train_source(common);
    if (*train_classifier) return cmd_train_classifier(common);
    if (*compose) return cmd_compose(common);
    if (*run) return cmd_run(common);
    if (*sweep) return cmd_sweep(common, sweep_param, sweep_samples);
    if (*forgetting) return cmd_eval_forgetting(common, run_dir);
    if (*auc) return cmd_auc(log_path);
    if (*render) return cmd_render(render_env, render_variant, render_seed, render_steps);
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
