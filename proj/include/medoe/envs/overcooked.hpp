#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "medoe/core/rng.hpp"
#include "medoe/core/task.hpp"

namespace medoe::overcooked {

enum class Variant { target, left, right };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::target: return "target";
    case Variant::left: return "left";
    case Variant::right: return "right";
  }
  return "?";
}

inline Variant variant_from_string(const std::string& s) {
  if (s == "target") return Variant::target;
  if (s == "left") return Variant::left;
  if (s == "right") return Variant::right;
  throw std::invalid_argument("unknown overcooked variant '" + s + "'");
}

enum Action : int { kUp = 0, kDown, kLeft, kRight, kNoop, kInteract, kChop, kNumActions };
enum class Dir : int { up = 0, down, left, right };
enum class Side { left, right };

struct Pos {
  int x = 0, y = 0;
  friend bool operator==(Pos, Pos) = default;
};

inline Pos offset(Pos p, Dir d) {
  switch (d) {
    case Dir::up: return {p.x, p.y + 1};
    case Dir::down: return {p.x, p.y - 1};
    case Dir::left: return {p.x - 1, p.y};
    case Dir::right: return {p.x + 1, p.y};
  }
  return p;
}

// 9 x 5 kitchen. y = 0 is the bottom row. Counters line the perimeter and the central column
// x = 4; each half has a 3 x 3 walkable floor. Every spawn candidate is a counter that some
// floor cell faces.
struct KitchenLayout {
  static constexpr int kWidth = 9;
  static constexpr int kHeight = 5;
  static constexpr int kCentreX = 4;

  static constexpr std::array<Pos, 3> kPlateSpawns{{{1, 0}, {2, 0}, {3, 0}}};
  static constexpr std::array<Pos, 3> kStarSpawns{{{5, 4}, {6, 4}, {7, 4}}};
  static constexpr std::array<Pos, 3> kBoardSpawns{{{0, 1}, {0, 2}, {0, 3}}};
  static constexpr std::array<Pos, 3> kCentralCounters{{{4, 1}, {4, 2}, {4, 3}}};
  static constexpr std::array<Pos, 3> kTargetTomatoSpawns{{{8, 1}, {8, 2}, {8, 3}}};
  static constexpr Pos kLeftSpawn{2, 2};
  static constexpr Pos kRightSpawn{6, 2};

  static bool in_bounds(Pos p) { return p.x >= 0 && p.x < kWidth && p.y >= 0 && p.y < kHeight; }
  static bool is_counter(Pos p) {
    if (!in_bounds(p)) return false;
    if (p.x == 0 || p.y == 0 || p.x == kWidth - 1 || p.y == kHeight - 1) return true;
    return p.x == kCentreX;
  }
  static bool is_floor(Pos p) { return in_bounds(p) && !is_counter(p); }
  static Side side_of(Pos p) { return p.x < kCentreX ? Side::left : Side::right; }
  // Halves including the central counters.
  static bool in_left_half(Pos p) { return p.x <= kCentreX; }
  static bool in_right_half(Pos p) { return p.x >= kCentreX; }
};

enum class Held { none, tomato, chopped_tomato, plate, plate_with_chopped_tomato };

// Where an item is: on a counter cell, or in an agent's hands.
struct ItemLoc {
  bool held = false;
  int holder = -1;  // when held
  Pos cell{};       // when on a counter
};

struct AgentState {
  Pos pos{};
  Dir dir = Dir::up;
};

struct KitchenState {
  std::array<AgentState, 2> agents{};
  ItemLoc tomato{};
  ItemLoc plate{};
  bool tomato_on_plate = false;  // then `tomato` mirrors `plate`
  bool chopped = false;
  bool delivered = false;
  Pos board{};
  Pos star{};
  // Recipe-step completion flags; rewards fire on the false -> true edge only.
  bool chop_done = false;
  bool plate_done = false;
  bool deliver_done = false;
  int steps_elapsed = 0;

  Pos tomato_cell() const { return tomato.held ? agents[static_cast<std::size_t>(tomato.holder)].pos : tomato.cell; }
  Pos plate_cell() const { return plate.held ? agents[static_cast<std::size_t>(plate.holder)].pos : plate.cell; }

  Held held_by(int agent) const {
    const bool has_plate = plate.held && plate.holder == agent;
    const bool has_tomato = tomato.held && tomato.holder == agent;
    if (has_plate) return tomato_on_plate ? Held::plate_with_chopped_tomato : Held::plate;
    if (has_tomato) return chopped ? Held::chopped_tomato : Held::tomato;
    return Held::none;
  }
};

struct RewardTable {
  double chop = 0.0;
  double plate = 0.0;
  double deliver = 0.0;
};

inline RewardTable rewards_for(Variant v) {
  switch (v) {
    case Variant::target: return {0.267, 0.267, 0.476};
    case Variant::left: return {0.5, 0.5, 0.0};
    case Variant::right: return {0.0, 0.0, 1.0};
  }
  return {};
}

inline constexpr int kObsDim = 21;
inline constexpr int kHorizon = 100;

class Overcooked {
 public:
  using State = KitchenState;

  explicit Overcooked(Variant v, int horizon = kHorizon) : variant_(v), rewards_(rewards_for(v)) {
    spec_.task_id = std::string("overcooked-") + to_string(v);
    spec_.num_agents = 2;
    spec_.action_counts = {kNumActions, kNumActions};
    spec_.obs_dims = {kObsDim, kObsDim};
    spec_.num_state_ids = 0;
    spec_.horizon = horizon;
    spec_.discount = 0.99;
    spec_.validate();
  }

  const TaskSpec& spec() const { return spec_; }
  Variant variant() const { return variant_; }
  const RewardTable& rewards() const { return rewards_; }

  // In the target, agent 0 (the left sub-team's agent) always starts on the left. In the drills the
  // first agent's side is drawn uniformly.
  State reset(RngStream& rng) const {
    State st;
    bool first_left = true;
    if (variant_ != Variant::target) first_left = rng.below(2) == 0;
    st.agents[0] = {first_left ? KitchenLayout::kLeftSpawn : KitchenLayout::kRightSpawn,
                    first_left ? Dir::right : Dir::left};
    st.agents[1] = {first_left ? KitchenLayout::kRightSpawn : KitchenLayout::kLeftSpawn,
                    first_left ? Dir::left : Dir::right};
    auto pick = [&](const std::array<Pos, 3>& cells) { return cells[rng.below(3)]; };
    const Pos plate_cell = pick(KitchenLayout::kPlateSpawns);
    st.star = pick(KitchenLayout::kStarSpawns);
    st.board = pick(KitchenLayout::kBoardSpawns);
    switch (variant_) {
      case Variant::right: {
        const Pos c = pick(KitchenLayout::kCentralCounters);
        st.plate.cell = c;
        st.tomato.cell = c;
        st.tomato_on_plate = true;
        st.chopped = true;
        st.chop_done = true;
        st.plate_done = true;
        break;
      }
      case Variant::left:
        st.plate.cell = plate_cell;
        st.tomato.cell = pick(KitchenLayout::kCentralCounters);
        break;
      case Variant::target:
        st.plate.cell = plate_cell;
        st.tomato.cell = pick(KitchenLayout::kTargetTomatoSpawns);
        break;
    }
    return st;
  }

  StepOutcome step(State& st, std::span<const int> joint_action, RngStream& /*rng*/) const {
    check_joint_action(spec_, joint_action);
    StepOutcome out;
    for (int i = 0; i < 2; ++i) out.reward += act(st, i, joint_action[static_cast<std::size_t>(i)]);
    st.steps_elapsed += 1;
    out.done = complete(st);
    if (!out.done && st.steps_elapsed >= spec_.horizon) out.truncated = true;
    return out;
  }

  bool complete(const State& st) const {
    switch (variant_) {
      case Variant::target: return st.deliver_done;
      case Variant::left: return st.chop_done && st.plate_done;
      case Variant::right: return st.deliver_done;
    }
    return false;
  }

  Observation observe(const State& st, int agent) const { return {encode_observation(st, agent), -1}; }

  // The rule for the half the agent stands in.
  double expert_doe(const State& st, int agent) const {
    return expert_doe_kitchen(KitchenLayout::side_of(st.agents[static_cast<std::size_t>(agent)].pos), st);
  }

  static std::vector<double> encode_observation(const State& st, int agent) {
    constexpr double sx = KitchenLayout::kWidth - 1;
    constexpr double sy = KitchenLayout::kHeight - 1;
    const auto& me = st.agents[static_cast<std::size_t>(agent)];
    const auto& other = st.agents[static_cast<std::size_t>(1 - agent)];
    std::vector<double> o;
    o.reserve(kObsDim);
    auto rel = [&](Pos p) {
      o.push_back((p.x - me.pos.x) / sx);
      o.push_back((p.y - me.pos.y) / sy);
    };
    auto dir = [&](Dir d) {
      for (int k = 0; k < 4; ++k) o.push_back(static_cast<int>(d) == k ? 1.0 : 0.0);
    };
    o.push_back(me.pos.x / sx);
    o.push_back(me.pos.y / sy);
    dir(me.dir);
    rel(other.pos);
    dir(other.dir);
    rel(st.tomato_cell());
    o.push_back(st.chopped ? 1.0 : 0.0);
    rel(st.plate_cell());
    rel(st.board);
    rel(st.star);
    return o;
  }

  static double expert_doe_kitchen(Side side, const State& st) {
    const Pos t = st.tomato_cell();
    if (side == Side::left) {
      return KitchenLayout::in_left_half(t) && KitchenLayout::in_left_half(st.plate_cell()) && !st.tomato_on_plate
                 ? 1.0
                 : 0.0;
    }
    return st.chopped && st.tomato_on_plate && KitchenLayout::in_right_half(t) ? 1.0 : 0.0;
  }

  // One character per cell, top row first: agents '1'/'2', 't' tomato, 'c' chopped tomato, 'p' plate,
  // 'P' plate with tomato, 'B' board, '*' star, '#' counter. Held items are not drawn.
  static std::string render(const State& st) {
    std::string s;
    for (int y = KitchenLayout::kHeight - 1; y >= 0; --y) {
      for (int x = 0; x < KitchenLayout::kWidth; ++x) {
        const Pos p{x, y};
        char ch = KitchenLayout::is_counter(p) ? '#' : '.';
        if (p == st.board) ch = 'B';
        if (p == st.star) ch = '*';
        if (!st.plate.held && st.plate.cell == p) ch = st.tomato_on_plate ? 'P' : 'p';
        if (!st.tomato.held && !st.tomato_on_plate && st.tomato.cell == p) ch = st.chopped ? 'c' : 't';
        for (int i = 0; i < 2; ++i)
          if (st.agents[static_cast<std::size_t>(i)].pos == p) ch = static_cast<char>('1' + i);
        s.push_back(ch);
      }
      s.push_back('\n');
    }
    return s;
  }

 private:
  static bool item_at(const State& st, Pos c, bool& is_plate) {
    if (!st.plate.held && st.plate.cell == c) {
      is_plate = true;
      return true;
    }
    if (!st.tomato.held && !st.tomato_on_plate && st.tomato.cell == c) {
      is_plate = false;
      return true;
    }
    return false;
  }

  double act(State& st, int i, int action) const {
    auto& me = st.agents[static_cast<std::size_t>(i)];
    const auto& other = st.agents[static_cast<std::size_t>(1 - i)];
    if (action <= kRight) {
      me.dir = static_cast<Dir>(action);
      const Pos next = offset(me.pos, me.dir);
      if (KitchenLayout::is_floor(next) && !(next == other.pos)) me.pos = next;
      return 0.0;
    }
    if (action == kNoop) return 0.0;
    const Pos f = offset(me.pos, me.dir);
    if (!KitchenLayout::is_counter(f)) return 0.0;
    if (action == kChop) {
      if (f == st.board && !st.tomato.held && !st.tomato_on_plate && st.tomato.cell == f && !st.chopped) {
        st.chopped = true;
        return fire(st.chop_done, rewards_.chop);
      }
      return 0.0;
    }
    // Interact.
    const Held held = st.held_by(i);
    bool plate_there = false;
    const bool occupied = item_at(st, f, plate_there);
    if (held == Held::none) {
      if (!occupied) return 0.0;
      if (plate_there) {
        st.plate = {true, i, {}};
        if (st.tomato_on_plate) st.tomato = st.plate;
      } else {
        st.tomato = {true, i, {}};
      }
      return 0.0;
    }
    if (f == st.star) {
      if (held == Held::plate_with_chopped_tomato) {
        st.plate = {false, -1, f};
        st.tomato = st.plate;
        st.delivered = true;
        return fire(st.deliver_done, rewards_.deliver);
      }
      return 0.0;
    }
    switch (held) {
      case Held::tomato:
      case Held::chopped_tomato:
        if (!occupied) {
          st.tomato = {false, -1, f};
          return 0.0;
        }
        if (plate_there && st.chopped) {
          st.tomato = {false, -1, f};
          st.tomato_on_plate = true;
          return fire(st.plate_done, rewards_.plate);
        }
        return 0.0;
      case Held::plate:
        if (!occupied) {
          st.plate = {false, -1, f};
          return 0.0;
        }
        if (!plate_there && st.chopped) {
          st.plate = {false, -1, f};
          st.tomato = st.plate;
          st.tomato_on_plate = true;
          return fire(st.plate_done, rewards_.plate);
        }
        return 0.0;
      case Held::plate_with_chopped_tomato:
        if (!occupied) {
          st.plate = {false, -1, f};
          st.tomato = st.plate;
        }
        return 0.0;
      case Held::none: break;
    }
    return 0.0;
  }

  static double fire(bool& flag, double reward) {
    if (flag) return 0.0;
    flag = true;
    return reward;
  }

  Variant variant_;
  RewardTable rewards_;
  TaskSpec spec_;
};

// Hand-written policy that completes the target recipe: the right agent passes the tomato over the
// central counter, the left agent chops and plates it and passes the plate back, the right agent
// serves. Used as an oracle for the environment's reward accounting.
class ScriptedTargetPolicy {
 public:
  std::array<int, 2> act(const KitchenState& st) const {
    std::array<int, 2> a{kNoop, kNoop};
    for (int i = 0; i < 2; ++i) {
      const auto side = KitchenLayout::side_of(st.agents[static_cast<std::size_t>(i)].pos);
      const auto goal = side == Side::left ? left_goal(st, i) : right_goal(st, i);
      if (goal) a[static_cast<std::size_t>(i)] = navigate(st, i, goal->first, goal->second);
    }
    return a;
  }

 private:
  using Goal = std::optional<std::pair<Pos, int>>;

  static bool counter_free(const KitchenState& st, Pos c) {
    if (c == st.star) return false;
    if (!st.plate.held && st.plate.cell == c) return false;
    if (!st.tomato.held && st.tomato.cell == c) return false;
    return true;
  }

  static Goal free_centre(const KitchenState& st) {
    for (Pos c : KitchenLayout::kCentralCounters)
      if (counter_free(st, c)) return std::make_pair(c, int{kInteract});
    return std::nullopt;
  }

  static Goal left_goal(const KitchenState& st, int i) {
    switch (st.held_by(i)) {
      case Held::tomato: return std::make_pair(st.board, int{kInteract});
      case Held::chopped_tomato: return std::nullopt;
      case Held::plate: return std::make_pair(st.tomato_cell(), int{kInteract});
      case Held::plate_with_chopped_tomato: return free_centre(st);
      case Held::none: break;
    }
    const Pos t = st.tomato_cell();
    if (st.tomato.held) return std::nullopt;
    if (st.tomato_on_plate)
      return t.x == KitchenLayout::kCentreX ? Goal{} : Goal{std::make_pair(t, int{kInteract})};
    if (t == st.board) {
      if (!st.chopped) return std::make_pair(t, int{kChop});
      if (!st.plate.held) return std::make_pair(st.plate.cell, int{kInteract});
      return std::nullopt;
    }
    if (t.x == KitchenLayout::kCentreX) return std::make_pair(t, int{kInteract});
    return std::nullopt;
  }

  static Goal right_goal(const KitchenState& st, int i) {
    switch (st.held_by(i)) {
      case Held::tomato:
      case Held::chopped_tomato: return free_centre(st);
      case Held::plate_with_chopped_tomato: return std::make_pair(st.star, int{kInteract});
      case Held::plate: return free_centre(st);
      case Held::none: break;
    }
    const Pos t = st.tomato_cell();
    if (st.tomato.held) return std::nullopt;
    if (st.tomato_on_plate && t.x == KitchenLayout::kCentreX) return std::make_pair(t, int{kInteract});
    if (!st.tomato_on_plate && t.x == KitchenLayout::kWidth - 1) return std::make_pair(t, int{kInteract});
    return std::nullopt;
  }

  // Walk to the nearest floor cell adjacent to `target`, face it, then perform `action`.
  static int navigate(const KitchenState& st, int i, Pos target, int action) {
    const auto& me = st.agents[static_cast<std::size_t>(i)];
    const Pos blocked = st.agents[static_cast<std::size_t>(1 - i)].pos;
    auto faces_target_from = [&](Pos p) -> std::optional<Dir> {
      for (int d = 0; d < 4; ++d)
        if (offset(p, static_cast<Dir>(d)) == target) return static_cast<Dir>(d);
      return std::nullopt;
    };
    if (auto d = faces_target_from(me.pos)) {
      if (me.dir == *d) return action;
      return static_cast<int>(*d);  // moving into a counter only turns the agent
    }
    // Breadth-first search over floor cells.
    std::array<std::array<int, KitchenLayout::kHeight>, KitchenLayout::kWidth> first_move{};
    for (auto& col : first_move) col.fill(-1);
    std::deque<Pos> q;
    q.push_back(me.pos);
    first_move[static_cast<std::size_t>(me.pos.x)][static_cast<std::size_t>(me.pos.y)] = kNoop;
    while (!q.empty()) {
      const Pos p = q.front();
      q.pop_front();
      if (!(p == me.pos) && faces_target_from(p)) return first_move[static_cast<std::size_t>(p.x)][static_cast<std::size_t>(p.y)];
      for (int d = 0; d < 4; ++d) {
        const Pos n = offset(p, static_cast<Dir>(d));
        if (!KitchenLayout::is_floor(n) || n == blocked) continue;
        auto& fm = first_move[static_cast<std::size_t>(n.x)][static_cast<std::size_t>(n.y)];
        if (fm != -1) continue;
        fm = p == me.pos ? d : first_move[static_cast<std::size_t>(p.x)][static_cast<std::size_t>(p.y)];
        q.push_back(n);
      }
    }
    return kNoop;
  }
};

}  // namespace medoe::overcooked
