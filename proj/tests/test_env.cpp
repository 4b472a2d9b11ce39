#include <doctest.h>

#include <cmath>
#include <random>
#include <string>

#include "sil/error.hpp"
#include "sil/env.hpp"

using namespace sil::env;

namespace {

const char* kTiny =
    "#######\n"
    "#S.K#T#\n"
    "#A..D.#\n"
    "#######\n";

GridSpec tiny(int time_limit = 50) { return GridSpec::parse(kTiny, RewardTable{}, time_limit); }

GridSpec shipped(const char* name) { return GridSpec::load(std::string(SIL_LAB_DATA_DIR) + "/maps/" + name); }

}  // namespace

TEST_CASE("map parser finds objects and computes returns") {
  const auto spec = tiny();
  CHECK(spec.rows() == 4);
  CHECK(spec.cols() == 7);
  CHECK(spec.start() == Cell{1, 1});
  REQUIRE(spec.key());
  CHECK(*spec.key() == Cell{1, 3});
  CHECK(*spec.door() == Cell{2, 4});
  CHECK(spec.apples().size() == 1);
  CHECK(spec.key_door_treasure_return() == 7.0);
  CHECK(spec.full_collection_return() == 8.0);
  CHECK(spec.obs_dim() == 4 * 7 + 2 + 1);
}

TEST_CASE("malformed maps are rejected") {
  CHECK_THROWS_AS(GridSpec::parse(""), sil::ConfigError);
  CHECK_THROWS_AS(GridSpec::parse("###\n#S#\n##\n"), sil::ConfigError);
  CHECK_THROWS_AS(GridSpec::parse("####\n#SX#\n####\n"), sil::ConfigError);
  CHECK_THROWS_AS(GridSpec::parse("#####\n#S.T#\n#####\n", {}, 0), sil::ConfigError);
  CHECK_THROWS_AS(GridSpec::parse("#####\n#..T#\n#####\n"), sil::ConfigError);
  CHECK_THROWS_AS(GridSpec::parse("######\n#SSDT#\n######\n"), sil::ConfigError);
  // Treasure reachable around the door.
  CHECK_THROWS_AS(GridSpec::parse("######\n#SKDT#\n#....#\n######\n"), sil::ConfigError);
  // Door without a key.
  CHECK_THROWS_AS(GridSpec::parse("#####\n#SDT#\n#####\n"), sil::ConfigError);
  CHECK_THROWS_AS(GridSpec::load("/nonexistent/map.map"), sil::ConfigError);
}

TEST_CASE("key, door and treasure give their rewards once") {
  GridWorld w(tiny());
  CHECK(w.step(Action::right).reward == 0.0);
  auto r = w.step(Action::right);
  CHECK(r.reward == 1.0);
  CHECK(w.state().has_key);
  CHECK(w.step(Action::left).reward == 0.0);
  CHECK(w.step(Action::right).reward == 0.0);  // key already taken
  w.step(Action::down);
  r = w.step(Action::right);
  CHECK(r.reward == 1.0);
  CHECK(w.state().door_open);
  w.step(Action::left);
  CHECK(w.step(Action::right).reward == 0.0);  // door stays open, no second reward
  w.step(Action::right);
  r = w.step(Action::up);
  CHECK(r.reward == 5.0);
  CHECK(r.done);
  CHECK_FALSE(r.info.time_limit);
  CHECK_THROWS_AS(w.step(Action::up), sil::UsageError);
}

TEST_CASE("door blocks without the key and walls block") {
  GridWorld w(tiny());
  w.step(Action::down);   // apple
  w.step(Action::right);
  w.step(Action::right);
  w.step(Action::right);  // bumps the closed door
  CHECK(w.state().pos == Cell{2, 3});
  CHECK_FALSE(w.state().door_open);
  w.reset();
  w.step(Action::up);
  CHECK(w.state().pos == Cell{1, 1});
}

TEST_CASE("apples pay once each and set their observation bit") {
  const auto spec = tiny();
  GridWorld w(spec);
  auto r = w.step(Action::down);
  CHECK(r.reward == 1.0);
  CHECK(r.observation[static_cast<std::size_t>(spec.rows() * spec.cols()) + 2] == 1.0);
  w.step(Action::up);
  CHECK(w.step(Action::down).reward == 0.0);
}

TEST_CASE("time limit ends the episode and is flagged") {
  GridWorld w(tiny(3));
  w.step(Action::up);
  w.step(Action::up);
  const auto r = w.step(Action::up);
  CHECK(r.done);
  CHECK(r.info.time_limit);
  CHECK(w.state().step_count == 3);
}

TEST_CASE("observation is a one-hot position plus flags") {
  const auto spec = tiny();
  GridWorld w(spec);
  const auto obs = w.reset();
  double total = 0.0;
  for (double x : obs) total += x;
  CHECK(total == 1.0);
  CHECK(obs[static_cast<std::size_t>(1 * 7 + 1)] == 1.0);
}

TEST_CASE("identical action sequences give identical trajectories") {
  const auto spec = shipped("key_door_treasure.v1.map");
  std::mt19937_64 rng(1);
  std::vector<Action> actions;
  for (int i = 0; i < 50; ++i) actions.push_back(static_cast<Action>(rng() % 4));
  GridWorld a(spec), b(spec);
  a.reset(1);
  b.reset(99);
  for (auto act : actions) {
    const auto ra = a.step(act);
    const auto rb = b.step(act);
    CHECK(ra.observation == rb.observation);
    CHECK(ra.reward == rb.reward);
    CHECK(a.state() == b.state());
    if (ra.done) break;
  }
}

TEST_CASE("random rollouts respect the episode invariants") {
  for (const char* name : {"key_door_treasure.v1.map", "apple_key_door_treasure.v1.map"}) {
    const auto spec = shipped(name);
    GridWorld w(spec);
    std::mt19937_64 rng(17);
    std::size_t key_hits = 0;
    const int episodes = 4000;
    for (int ep = 0; ep < episodes; ++ep) {
      w.reset();
      int steps = 0;
      bool had_key_before = false;
      while (true) {
        const bool door_before = w.state().door_open;
        const auto r = w.step(static_cast<Action>(rng() % 4));
        ++steps;
        CHECK(std::isfinite(r.reward));
        if (!door_before && w.state().door_open) CHECK(had_key_before);
        had_key_before = w.state().has_key;
        if (r.done) break;
      }
      CHECK(steps <= spec.time_limit());
      if (w.state().has_key) ++key_hits;
    }
    // Shipped maps keep the key rare for a uniform policy.
    const double rate = static_cast<double>(key_hits) / episodes;
    CAPTURE(name);
    CHECK(rate >= 0.001);
    CHECK(rate <= 0.05);
  }
}

TEST_CASE("shipped maps are 9x9 with the documented objects") {
  const auto kdt = shipped("key_door_treasure.v1.map");
  CHECK(kdt.rows() == 9);
  CHECK(kdt.cols() == 9);
  CHECK(kdt.apples().empty());
  CHECK(kdt.full_collection_return() == 7.0);
  const auto akdt = shipped("apple_key_door_treasure.v1.map");
  CHECK(akdt.apples().size() == 2);
  for (const auto& a : akdt.apples())
    CHECK(std::abs(a.row - akdt.start().row) + std::abs(a.col - akdt.start().col) == 1);
  CHECK(akdt.full_collection_return() == 9.0);
}

TEST_CASE("delayed reward conserves the episode total") {
  for (int period : {1, 3, 20}) {
    DelayedReward delay(period);
    GridWorld w(shipped("apple_key_door_treasure.v1.map"));
    std::mt19937_64 rng(period);
    for (int ep = 0; ep < 200; ++ep) {
      w.reset();
      delay.reset();
      double raw = 0.0, delayed = 0.0;
      int since = 0;
      while (true) {
        const auto inner = w.step(static_cast<Action>(rng() % 4));
        raw += inner.reward;
        const auto out = delay.apply(inner);
        delayed += out.reward;
        ++since;
        if (out.reward != 0.0) {
          CHECK((since == period || out.done));
        }
        if (since == period) since = 0;
        if (out.done) break;
      }
      CHECK(delayed == doctest::Approx(raw).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(DelayedReward(0), sil::ConfigError);
}

TEST_CASE("count bonus decays as one over sqrt N") {
  VisitCounter counter;
  GridState s;
  s.pos = {2, 3};
  double prev = 1e9;
  for (int n = 1; n <= 16; ++n) {
    const auto r = bonus_step(counter, StepResult{}, s, 0.1);
    CHECK(r.info.bonus_reward == doctest::Approx(0.1 / std::sqrt(n)));
    CHECK(r.info.bonus_reward <= prev);
    prev = r.info.bonus_reward;
  }
  CHECK(counter.count(state_key(s)) == 16);
  // Flags are part of the count key.
  GridState keyed = s;
  keyed.has_key = true;
  CHECK(bonus_step(counter, StepResult{}, keyed, 0.1).info.bonus_reward == doctest::Approx(0.1));
  // Zero beta counts nothing and adds nothing.
  const auto untouched = bonus_step(counter, StepResult{}, s, 0.0);
  CHECK(untouched.reward == 0.0);
  CHECK(counter.count(state_key(s)) == 16);
  CHECK_THROWS_AS(bonus_step(counter, StepResult{}, s, -1.0), sil::ConfigError);
}
