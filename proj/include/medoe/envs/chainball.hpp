#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "medoe/core/rng.hpp"
#include "medoe/core/task.hpp"

namespace medoe::chainball {

enum class Variant { target, attack, defence };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::target: return "target";
    case Variant::attack: return "att";
    case Variant::defence: return "def";
  }
  return "?";
}

inline Variant variant_from_string(const std::string& s) {
  if (s == "target") return Variant::target;
  if (s == "att" || s == "attack") return Variant::attack;
  if (s == "def" || s == "defence" || s == "defense") return Variant::defence;
  throw std::invalid_argument("unknown chainball variant '" + s + "'");
}

inline constexpr int kActionsPerAgent = 4;
inline constexpr double kOptimalForward = 0.8;
inline constexpr double kMaxNonOptimalForward = 0.5;
inline constexpr double kBackwardBase = 1.5;

inline int agents_in(Variant v) { return v == Variant::target ? 4 : 2; }

inline int restart_state(int num_states) { return (num_states + 1) / 2; }

// Chain geometry shared by the target and both drills. For N = 11: restart 6, s_Att = s_Def = 6,
// defenders are experts in 1..4 and attackers in 8..11, and the reduced-difficulty states are 5 and 7.
struct Geometry {
  int num_states = 11;

  int restart() const { return restart_state(num_states); }
  int s_att() const { return restart(); }
  int s_def() const { return restart(); }
  int defence_expert_max() const { return restart() - 2; }
  int attack_expert_min() const { return restart() + 2; }
  // Forward probability depends only on (a1, a3) here ...
  int odd_pair_state() const { return restart() - 1; }
  // ... and only on (a2, a4) here.
  int even_pair_state() const { return restart() + 1; }
};

// Forward-probability tables, stored state-major with joint actions in lexicographic order
// (agent 1 is the most significant digit).
struct ForwardTables {
  int num_states = 0;
  int num_agents = 0;
  Variant variant = Variant::target;
  std::vector<double> forward;          // num_states * joint_count()
  std::vector<int> optimal_joint;       // per state (index s-1)

  int joint_count() const {
    int c = 1;
    for (int i = 0; i < num_agents; ++i) c *= kActionsPerAgent;
    return c;
  }

  int joint_index(std::span<const int> actions) const {
    int idx = 0;
    for (int a : actions) idx = idx * kActionsPerAgent + a;
    return idx;
  }

  std::vector<int> joint_actions(int joint) const {
    std::vector<int> a(static_cast<std::size_t>(num_agents));
    for (int i = num_agents - 1; i >= 0; --i) {
      a[static_cast<std::size_t>(i)] = joint % kActionsPerAgent;
      joint /= kActionsPerAgent;
    }
    return a;
  }

  double at(int s, int joint) const {
    return forward[static_cast<std::size_t>((s - 1) * joint_count() + joint)];
  }
  double& at(int s, int joint) { return forward[static_cast<std::size_t>((s - 1) * joint_count() + joint)]; }

  std::vector<int> optimal_actions(int s) const { return joint_actions(optimal_joint[static_cast<std::size_t>(s - 1)]); }
};

namespace detail {

inline void fill_uniform(ForwardTables& t, RngStream& rng) {
  for (double& f : t.forward) f = rng.uniform(0.0, kMaxNonOptimalForward);
}

// Forces F_s to depend only on the listed agents' actions: every entry takes the value of the
// representative joint action that zeroes the free agents.
inline void impose_dependence(ForwardTables& t, int s, std::array<int, 2> kept) {
  const int J = t.joint_count();
  for (int j = 0; j < J; ++j) {
    auto a = t.joint_actions(j);
    std::vector<int> rep(a.size(), 0);
    for (int k : kept) rep[static_cast<std::size_t>(k)] = a[static_cast<std::size_t>(k)];
    t.at(s, j) = t.at(s, t.joint_index(rep));
  }
}

}  // namespace detail

// Draws the tables for one variant. Source drills take the target tables so that their optimal
// actions coincide with the target's inside each sub-team's expert region and differ outside it.
inline ForwardTables generate_tables(int num_states, Variant variant, RngStream& rng,
                                     const ForwardTables* target = nullptr) {
  if (num_states < 2) throw std::invalid_argument("chainball: N must be at least 2");
  if (variant != Variant::target) {
    if (target == nullptr) throw std::invalid_argument("chainball: source tables need the target tables");
    if (target->num_states != num_states || target->variant != Variant::target)
      throw std::invalid_argument("chainball: target tables do not match");
  }
  const Geometry geo{num_states};
  ForwardTables t;
  t.num_states = num_states;
  t.num_agents = agents_in(variant);
  t.variant = variant;
  t.forward.resize(static_cast<std::size_t>(num_states * t.joint_count()));
  t.optimal_joint.resize(static_cast<std::size_t>(num_states));
  detail::fill_uniform(t, rng);

  if (variant == Variant::target) {
    for (int s = 1; s <= num_states; ++s) {
      auto a = t.joint_actions(static_cast<int>(rng.below(static_cast<std::uint64_t>(t.joint_count()))));
      if (s == geo.odd_pair_state()) {
        a[1] = 0;
        a[3] = 0;
      } else if (s == geo.even_pair_state()) {
        a[0] = 0;
        a[2] = 0;
      }
      t.optimal_joint[static_cast<std::size_t>(s - 1)] = t.joint_index(a);
      t.at(s, t.joint_index(a)) = kOptimalForward;
      if (s == geo.odd_pair_state()) detail::impose_dependence(t, s, {0, 2});
      if (s == geo.even_pair_state()) detail::impose_dependence(t, s, {1, 3});
    }
    return t;
  }

  // Target agents represented by local agents (0, 1) of this drill.
  const std::array<int, 2> slots = variant == Variant::defence ? std::array<int, 2>{0, 1} : std::array<int, 2>{2, 3};
  auto in_overlap = [&](int s) {
    return variant == Variant::defence ? s <= geo.defence_expert_max() : s >= geo.attack_expert_min();
  };
  auto target_action_is_free = [&](int s, int target_agent) {
    if (s == geo.odd_pair_state()) return target_agent == 1 || target_agent == 3;
    if (s == geo.even_pair_state()) return target_agent == 0 || target_agent == 2;
    return false;
  };
  for (int s = 1; s <= num_states; ++s) {
    const auto target_opt = target->optimal_actions(s);
    std::vector<int> a(2);
    for (int k = 0; k < 2; ++k) {
      const int ta = target_opt[static_cast<std::size_t>(slots[static_cast<std::size_t>(k)])];
      if (in_overlap(s)) {
        a[static_cast<std::size_t>(k)] = ta;
      } else if (target_action_is_free(s, slots[static_cast<std::size_t>(k)])) {
        a[static_cast<std::size_t>(k)] = static_cast<int>(rng.below(kActionsPerAgent));
      } else {
        // One of the three actions that differ from the target's.
        int pick = static_cast<int>(rng.below(kActionsPerAgent - 1));
        a[static_cast<std::size_t>(k)] = pick >= ta ? pick + 1 : pick;
      }
    }
    t.optimal_joint[static_cast<std::size_t>(s - 1)] = t.joint_index(a);
    t.at(s, t.joint_index(a)) = kOptimalForward;
  }
  return t;
}

// Backward transition law from state s: r < s with weight 1.5^(r-s); conceding only from s = 1.
struct BackwardDistribution {
  double concede = 0.0;
  std::vector<double> to_state;  // to_state[r-1] for r in 1..s-1
};

inline BackwardDistribution backward_distribution(int s, int num_states) {
  if (s < 1 || s > num_states) throw std::out_of_range("chainball: state out of range");
  BackwardDistribution d;
  if (s == 1) {
    d.concede = 1.0;
    return d;
  }
  d.to_state.resize(static_cast<std::size_t>(s - 1));
  double total = 0.0;
  for (int r = 1; r < s; ++r) {
    d.to_state[static_cast<std::size_t>(r - 1)] = std::pow(kBackwardBase, r - s);
    total += d.to_state[static_cast<std::size_t>(r - 1)];
  }
  for (double& w : d.to_state) w /= total;
  return d;
}

// How a drill's episodes begin. The target always kicks off from the restart state.
enum class SourceStart { restart, expert_region };

struct Params {
  int num_states = 11;
  int horizon = 90;
  // Scoring or conceding ends a target episode (both drills always end on goals).
  bool target_goal_terminates = true;
  // Reward for carrying the ball out of the defence drill's region (s > s_Def).
  double defence_clear_reward = 1.0;
  SourceStart source_start = SourceStart::expert_region;
};

struct State {
  int s = 1;
  int steps_elapsed = 0;
};

class Chainball {
 public:
  using State = chainball::State;

  Chainball(ForwardTables tables, Params params)
      : tables_(std::move(tables)), params_(params), geo_{params.num_states} {
    if (tables_.num_states != params_.num_states)
      throw ConfigError("chainball: table size does not match N");
    spec_.task_id = std::string("chainball-") + std::to_string(params_.num_states) +
                    (variant() == Variant::target ? "" : std::string("-") + to_string(variant()));
    spec_.num_agents = tables_.num_agents;
    spec_.action_counts.assign(static_cast<std::size_t>(spec_.num_agents), kActionsPerAgent);
    spec_.obs_dims.assign(static_cast<std::size_t>(spec_.num_agents), params_.num_states);
    spec_.num_state_ids = params_.num_states;
    spec_.horizon = params_.horizon;
    spec_.discount = 0.99;
    spec_.validate();
  }

  const TaskSpec& spec() const { return spec_; }
  const ForwardTables& tables() const { return tables_; }
  const Params& params() const { return params_; }
  const Geometry& geometry() const { return geo_; }
  Variant variant() const { return tables_.variant; }

  State reset(RngStream& rng) const {
    State st;
    st.s = geo_.restart();
    if (variant() != Variant::target && params_.source_start == SourceStart::expert_region) {
      const int lo = variant() == Variant::defence ? 1 : geo_.attack_expert_min();
      const int hi = variant() == Variant::defence ? geo_.defence_expert_max() : params_.num_states;
      if (hi >= lo) st.s = lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
    }
    return st;
  }

  StepOutcome step(State& st, std::span<const int> joint_action, RngStream& rng) const {
    check_joint_action(spec_, joint_action);
    if (st.s < 1 || st.s > params_.num_states) throw std::out_of_range("chainball: invalid state");
    const bool source = variant() != Variant::target;
    const bool goals_end = source || params_.target_goal_terminates;
    StepOutcome out;
    const double p_forward = tables_.at(st.s, tables_.joint_index(joint_action));
    if (rng.uniform() < p_forward) {
      if (st.s == params_.num_states) {
        out.reward = 1.0;
        st.s = geo_.restart();
        out.done = goals_end;
      } else {
        st.s += 1;
        if (variant() == Variant::defence && st.s > geo_.s_def()) {
          out.reward = params_.defence_clear_reward;
          out.done = true;
        }
      }
    } else {
      const auto back = backward_distribution(st.s, params_.num_states);
      if (back.concede > 0.0) {
        out.reward = -1.0;
        st.s = geo_.restart();
        out.done = goals_end;
      } else {
        st.s = 1 + static_cast<int>(rng.categorical(back.to_state));
        if (variant() == Variant::attack && st.s < geo_.s_att()) out.done = true;
      }
    }
    st.steps_elapsed += 1;
    if (!out.done && st.steps_elapsed >= params_.horizon) out.truncated = true;
    return out;
  }

  Observation observe(const State& st, int /*agent*/) const {
    Observation o;
    o.features.assign(static_cast<std::size_t>(params_.num_states), 0.0);
    o.features[static_cast<std::size_t>(st.s - 1)] = 1.0;
    o.state_id = st.s - 1;
    return o;
  }

  // Target agents 0,1 are defenders and 2,3 attackers; a drill's agents share its sub-team's rule.
  double expert_doe(const State& st, int agent) const {
    bool defender = variant() == Variant::defence || (variant() == Variant::target && agent < 2);
    return defender ? (st.s <= geo_.defence_expert_max() ? 1.0 : 0.0)
                    : (st.s >= geo_.attack_expert_min() ? 1.0 : 0.0);
  }

  // The designated optimal joint action in a state.
  std::vector<int> optimal_actions(const State& st) const { return tables_.optimal_actions(st.s); }

 private:
  ForwardTables tables_;
  Params params_;
  Geometry geo_;
  TaskSpec spec_;
};

// Target-task DoE by target agent index (1-based, as in the task description).
inline int expert_doe(int agent_index, int s, int num_states = 11) {
  if (agent_index < 1 || agent_index > 4) throw std::out_of_range("chainball: agent index must be in 1..4");
  if (s < 1 || s > num_states) throw std::out_of_range("chainball: state out of range");
  const Geometry geo{num_states};
  return agent_index <= 2 ? (s <= geo.defence_expert_max() ? 1 : 0) : (s >= geo.attack_expert_min() ? 1 : 0);
}

// Finite-horizon dynamic programme over joint actions. Returns the optimal expected episodic
// return from the initial-state distribution (used as the drills' "known maximum").
inline double optimal_expected_return(const Chainball& env) {
  const auto& t = env.tables();
  const auto& p = env.params();
  const Geometry geo{p.num_states};
  const int N = p.num_states;
  const bool source = env.variant() != Variant::target;
  const bool goals_end = source || p.target_goal_terminates;
  // value[s] with k steps remaining; index 0 unused.
  std::vector<double> next(static_cast<std::size_t>(N + 1), 0.0), cur(next.size(), 0.0);
  auto terminal_after = [&](int s_next) {
    if (env.variant() == Variant::defence && s_next > geo.s_def()) return true;
    if (env.variant() == Variant::attack && s_next < geo.s_att()) return true;
    return false;
  };
  for (int k = 1; k <= p.horizon; ++k) {
    for (int s = 1; s <= N; ++s) {
      // Continuation values for forward and backward outcomes.
      double fwd;
      if (s == N) {
        fwd = 1.0 + (goals_end ? 0.0 : next[static_cast<std::size_t>(geo.restart())]);
      } else if (terminal_after(s + 1)) {
        fwd = env.variant() == Variant::defence ? p.defence_clear_reward : 0.0;
      } else {
        fwd = next[static_cast<std::size_t>(s + 1)];
      }
      double bwd = 0.0;
      const auto back = backward_distribution(s, N);
      if (back.concede > 0.0) {
        bwd = -1.0 + (goals_end ? 0.0 : next[static_cast<std::size_t>(geo.restart())]);
      } else {
        for (int r = 1; r < s; ++r) {
          const double w = back.to_state[static_cast<std::size_t>(r - 1)];
          bwd += w * (terminal_after(r) ? 0.0 : next[static_cast<std::size_t>(r)]);
        }
      }
      double best = -1e300;
      for (int j = 0; j < t.joint_count(); ++j) {
        const double f = t.at(s, j);
        best = std::max(best, f * fwd + (1.0 - f) * bwd);
      }
      cur[static_cast<std::size_t>(s)] = best;
    }
    std::swap(cur, next);
  }
  if (!source || p.source_start == SourceStart::restart) return next[static_cast<std::size_t>(geo.restart())];
  const int lo = env.variant() == Variant::defence ? 1 : geo.attack_expert_min();
  const int hi = env.variant() == Variant::defence ? geo.defence_expert_max() : N;
  if (hi < lo) return next[static_cast<std::size_t>(geo.restart())];
  double mean = 0.0;
  for (int s = lo; s <= hi; ++s) mean += next[static_cast<std::size_t>(s)];
  return mean / (hi - lo + 1);
}

}  // namespace medoe::chainball
