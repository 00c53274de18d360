#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <set>

#include "medoe/envs/overcooked.hpp"
#include "support/checks.hpp"

using namespace medoe;
using namespace medoe::overcooked;

namespace {

bool contains(const std::array<Pos, 3>& cells, Pos p) {
  for (Pos c : cells)
    if (c == p) return true;
  return false;
}

}  // namespace

TEST_CASE("every spawn cell faces a walkable cell", "[overcooked]") {
  for (const auto* cells : {&KitchenLayout::kPlateSpawns, &KitchenLayout::kStarSpawns, &KitchenLayout::kBoardSpawns,
                            &KitchenLayout::kCentralCounters, &KitchenLayout::kTargetTomatoSpawns}) {
    for (Pos c : *cells) {
      CHECK(KitchenLayout::is_counter(c));
      bool reachable = false;
      for (int d = 0; d < 4; ++d) reachable = reachable || KitchenLayout::is_floor(offset(c, static_cast<Dir>(d)));
      CHECK(reachable);
    }
  }
}

TEST_CASE("resets place items per variant", "[overcooked]") {
  RngStream rng(4);
  const Overcooked target(Variant::target), left(Variant::left), right(Variant::right);
  std::set<int> first_sides;
  for (int i = 0; i < 200; ++i) {
    const auto t = target.reset(rng);
    CHECK(contains(KitchenLayout::kTargetTomatoSpawns, t.tomato.cell));
    CHECK(contains(KitchenLayout::kPlateSpawns, t.plate.cell));
    CHECK(contains(KitchenLayout::kStarSpawns, t.star));
    CHECK(contains(KitchenLayout::kBoardSpawns, t.board));
    CHECK(t.agents[0].pos == KitchenLayout::kLeftSpawn);
    CHECK(t.agents[1].pos == KitchenLayout::kRightSpawn);

    const auto l = left.reset(rng);
    CHECK(contains(KitchenLayout::kCentralCounters, l.tomato.cell));
    CHECK_FALSE(l.chopped);
    first_sides.insert(l.agents[0].pos.x);

    const auto r = right.reset(rng);
    CHECK(contains(KitchenLayout::kCentralCounters, r.plate.cell));
    CHECK(r.tomato_on_plate);
    CHECK(r.chopped);
  }
  CHECK(first_sides.size() == 2);
}

TEST_CASE("scripted policy completes the target with the exact reward sum", "[overcooked]") {
  const Overcooked env(Variant::target);
  RngStream rng(8);
  const double expected = 0.267 + 0.267 + 0.476;
  for (int k = 0; k < 300; ++k) {
    const auto ep = checks::run_scripted(env, rng);
    REQUIRE(ep.done);
    CHECK(ep.steps <= 100);
    CHECK(ep.total_reward == expected);
    CHECK(ep.reward_events == 3);
  }
}

TEST_CASE("chop, plate and deliver events", "[overcooked]") {
  RngStream rng(1);
  KitchenState st;
  st.agents[0] = {{1, 2}, Dir::left};
  st.agents[1] = {{6, 2}, Dir::up};
  st.board = {0, 2};
  st.star = {6, 4};
  st.tomato = {false, -1, {0, 2}};
  st.plate = {false, -1, {1, 0}};

  const Overcooked target(Variant::target);
  auto s = st;
  std::array<int, 2> a{kChop, kNoop};
  auto out = target.step(s, a, rng);
  CHECK(s.chopped);
  CHECK(out.reward == 0.267);
  out = target.step(s, a, rng);  // chopping twice pays once
  CHECK(out.reward == 0.0);

  const Overcooked left(Variant::left);
  s = st;
  out = left.step(s, a, rng);
  CHECK(out.reward == 0.5);
  CHECK_FALSE(out.done);
  // pick up the chopped tomato, walk to the plate and plate it
  a = {kInteract, kNoop};
  left.step(s, a, rng);
  CHECK(s.held_by(0) == Held::chopped_tomato);
  a = {kDown, kNoop};
  left.step(s, a, rng);
  CHECK(s.agents[0].pos == Pos{1, 1});
  left.step(s, a, rng);  // into the counter: turn only
  CHECK(s.agents[0].pos == Pos{1, 1});
  CHECK(s.agents[0].dir == Dir::down);
  a = {kInteract, kNoop};
  out = left.step(s, a, rng);
  CHECK(out.reward == 0.5);
  CHECK(out.done);
  CHECK(s.tomato_on_plate);

  const Overcooked right(Variant::right);
  KitchenState r;
  r.agents[0] = {{2, 2}, Dir::right};
  r.agents[1] = {{6, 3}, Dir::up};
  r.star = {6, 4};
  r.board = {0, 1};
  r.plate = {true, 1, {}};
  r.tomato = r.plate;
  r.tomato_on_plate = true;
  r.chopped = true;
  a = {kNoop, kInteract};
  out = right.step(r, a, rng);
  CHECK(out.reward == 1.0);
  CHECK(out.done);

  KitchenState t2 = r;
  t2.deliver_done = false;
  t2.chop_done = t2.plate_done = true;
  t2.plate = {true, 1, {}};
  t2.tomato = t2.plate;
  out = target.step(t2, a, rng);
  CHECK(out.reward == 0.476);
  CHECK(out.done);
}

TEST_CASE("moves are blocked by counters and the other agent", "[overcooked]") {
  RngStream rng(1);
  const Overcooked env(Variant::target);
  KitchenState st;
  st.agents[0] = {{3, 2}, Dir::up};
  st.agents[1] = {{5, 2}, Dir::up};
  st.tomato = {false, -1, {8, 1}};
  st.plate = {false, -1, {1, 0}};
  st.board = {0, 2};
  st.star = {6, 4};
  std::array<int, 2> a{kRight, kLeft};
  env.step(st, a, rng);
  CHECK(st.agents[0].pos == Pos{3, 2});
  CHECK(st.agents[1].pos == Pos{5, 2});
  st.agents[1].pos = {3, 3};
  a = {kUp, kNoop};
  env.step(st, a, rng);
  CHECK(st.agents[0].pos == Pos{3, 2});
  CHECK(st.agents[0].dir == Dir::up);
  const std::array<int, 2> bad{0, 7};
  CHECK_THROWS(env.step(st, bad, rng));
}

TEST_CASE("observations have 21 bounded entries", "[overcooked]") {
  const Overcooked env(Variant::target);
  RngStream rng(6);
  RngStream act(7);
  for (int ep = 0; ep < 20; ++ep) {
    auto st = env.reset(rng);
    for (int t = 0; t < 100; ++t) {
      for (int i = 0; i < 2; ++i) {
        const auto o = env.observe(st, i);
        REQUIRE(o.features.size() == 21);
        for (double f : o.features) {
          CHECK(f >= -1.0);
          CHECK(f <= 1.0);
        }
      }
      const std::array<int, 2> a{static_cast<int>(act.below(7)), static_cast<int>(act.below(7))};
      const auto out = env.step(st, a, rng);
      if (out.done || out.truncated) break;
    }
  }
  KitchenState st;
  st.agents[0] = {{2, 2}, Dir::up};
  st.agents[1] = {{6, 2}, Dir::up};
  st.tomato = {true, 0, {}};
  st.plate = {false, -1, {1, 0}};
  const auto o = Overcooked::encode_observation(st, 0);
  CHECK(o[12] == 0.0);  // tomato relative x
  CHECK(o[13] == 0.0);
}

TEST_CASE("expert DoE matches the hand-built truth table", "[overcooked]") {
  REQUIRE(checks::kitchen_truth_table().size() == 50);
  const Overcooked env(Variant::target);
  int row = 0;
  for (const auto& c : checks::kitchen_truth_table()) {
    INFO("row " << row++);
    CHECK(env.expert_doe(checks::build_kitchen(c), 0) == c.expected);
  }
}

TEST_CASE("horizon truncates", "[overcooked]") {
  const Overcooked env(Variant::target, 5);
  RngStream rng(1);
  auto st = env.reset(rng);
  const std::array<int, 2> a{kNoop, kNoop};
  for (int t = 0; t < 4; ++t) CHECK_FALSE(env.step(st, a, rng).truncated);
  CHECK(env.step(st, a, rng).truncated);
}
