#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <span>
#include <string>

#include "sil/env.hpp"
#include "sil/error.hpp"
#include "sil/trainer.hpp"

using namespace sil::trainer;

namespace {

std::string map_path(const char* name) { return std::string(SIL_LAB_DATA_DIR) + "/maps/" + name; }

TrainConfig small_config(Variant v = Variant::sil) {
  TrainConfig c;
  c.variant = v;
  c.env_map = map_path("key_door_treasure.v1.map");
  c.n_envs = 4;
  c.hidden = {16, 16};
  c.sil_batch = 32;
  c.sil_updates = 2;
  c.buffer_capacity = 500;
  c.total_steps = 3000;
  c.seed = 3;
  return c;
}

bool bit_equal(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

bool same_metrics(const TrainResult& a, const TrainResult& b) {
  if (a.metrics.size() != b.metrics.size()) return false;
  for (std::size_t i = 0; i < a.metrics.size(); ++i) {
    const auto& x = a.metrics[i];
    const auto& y = b.metrics[i];
    const double xs[] = {x.mean_return, x.best_return, x.policy_loss, x.value_loss, x.entropy, x.sil_policy_loss,
                         x.sil_value_loss, x.sil_valid_fraction};
    const double ys[] = {y.mean_return, y.best_return, y.policy_loss, y.value_loss, y.entropy, y.sil_policy_loss,
                         y.sil_value_loss, y.sil_valid_fraction};
    if (!bit_equal(xs, ys) || x.env_steps != y.env_steps || x.buffer_size != y.buffer_size) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("variant names round trip") {
  for (auto v : {Variant::a2c, Variant::sil, Variant::exp, Variant::sil_exp})
    CHECK(parse_variant(variant_name(v)) == v);
  CHECK(variant_name(Variant::sil_exp) == "sil+exp");
  CHECK_THROWS_AS(parse_variant("ppo"), sil::ConfigError);
}

TEST_CASE("variants switch SIL updates and the exploration bonus") {
  auto c = small_config(Variant::a2c);
  CHECK(c.effective_sil_updates() == 0);
  CHECK(c.effective_exploration_beta() == 0.0);
  c.variant = Variant::sil;
  CHECK(c.effective_sil_updates() == 2);
  CHECK(c.effective_exploration_beta() == 0.0);
  c.variant = Variant::exp;
  CHECK(c.effective_sil_updates() == 0);
  CHECK(c.effective_exploration_beta() == 0.1);
  c.variant = Variant::sil_exp;
  CHECK(c.effective_sil_updates() == 2);
  CHECK(c.effective_exploration_beta() == 0.1);
}

TEST_CASE("validation names the offending key") {
  auto c = small_config();
  c.n_envs = 0;
  try {
    c.validate();
    FAIL("expected ConfigError");
  } catch (const sil::ConfigError& e) {
    CHECK(std::string(e.what()).find("a2c.n_envs") != std::string::npos);
  }
  c = small_config();
  c.gamma = 1.5;
  CHECK_THROWS_AS(c.validate(), sil::ConfigError);
  c = small_config();
  c.lr = -1.0;
  CHECK_THROWS_AS(c.validate(), sil::ConfigError);
  CHECK_THROWS_AS(train(c), sil::ConfigError);
}

TEST_CASE("training is deterministic for a fixed seed") {
  const auto c = small_config(Variant::sil_exp);
  const auto a = train(c);
  const auto b = train(c);
  CHECK(same_metrics(a, b));
  CHECK(bit_equal(a.params.values(), b.params.values()));
  auto other = c;
  other.seed = 4;
  CHECK_FALSE(bit_equal(a.params.values(), train(other).params.values()));
}

TEST_CASE("worker thread count does not change results") {
  const auto c = small_config(Variant::sil);
  const auto serial = train(c);
  ::setenv("SIL_LAB_THREADS", "3", 1);
  const auto threaded = train(c);
  ::unsetenv("SIL_LAB_THREADS");
  CHECK(same_metrics(serial, threaded));
  CHECK(bit_equal(serial.params.values(), threaded.params.values()));
}

TEST_CASE("no SIL updates and no bonus reproduce plain A2C bit for bit") {
  auto ref = small_config(Variant::a2c);
  auto ablated = ref;
  ablated.variant = Variant::sil_exp;
  ablated.sil_updates = 0;
  ablated.exploration_beta = 0.0;
  const auto a = train(ref);
  const auto b = train(ablated);
  CHECK(same_metrics(a, b));
  CHECK(bit_equal(a.params.values(), b.params.values()));
}

TEST_CASE("metrics are monotone and sized by the step budget") {
  const auto c = small_config();
  const auto r = train(c);
  const std::size_t per_iter = c.n_envs * c.n_steps;
  CHECK(r.metrics.size() == (c.total_steps + per_iter - 1) / per_iter);
  for (std::size_t i = 1; i < r.metrics.size(); ++i) {
    CHECK(r.metrics[i].env_steps > r.metrics[i - 1].env_steps);
    CHECK(r.metrics[i].best_return >= r.metrics[i - 1].best_return);
    CHECK(r.metrics[i].episodes >= r.metrics[i - 1].episodes);
  }
  CHECK(r.metrics.back().env_steps >= c.total_steps);
  CHECK(r.metrics.back().buffer_size <= c.buffer_capacity);
  CHECK(r.episodes.size() == r.metrics.back().episodes);
}

TEST_CASE("replay holds exactly the completed episode transitions") {
  // The key is out of reach within the time limit, so every episode lasts
  // exactly three steps.
  const auto spec = sil::env::GridSpec::parse(
      "#######\n"
      "#S...K#\n"
      "#####D#\n"
      "#####T#\n"
      "#######\n",
      {}, 3);
  auto c = small_config(Variant::sil);
  c.buffer_capacity = 1000000;
  c.total_steps = 600;
  TrainHooks hooks;
  std::size_t checked = 0;
  hooks.on_iteration = [&](const IterationMetrics& m) {
    CHECK(m.buffer_size == 3 * m.episodes);
    ++checked;
  };
  const auto r = train(c, spec, hooks);
  CHECK(checked == r.metrics.size());
  CHECK(r.metrics.back().episodes > 0);
}

TEST_CASE("SIL gradient signal is zero outside the valid mask") {
  auto c = small_config(Variant::sil);
  std::size_t updates = 0, invalid_rows = 0;
  TrainHooks hooks;
  hooks.on_sil_update = [&](const std::vector<std::uint8_t>& valid, const sil::nn::Matrix& dlogits,
                            const std::vector<double>& dvalue) {
    ++updates;
    for (std::size_t i = 0; i < valid.size(); ++i) {
      if (valid[i]) continue;
      ++invalid_rows;
      for (double g : dlogits.row(i)) CHECK(g == 0.0);
      CHECK(dvalue[i] == 0.0);
    }
  };
  train(c, hooks);
  CHECK(updates > 0);
  CHECK(invalid_rows > 0);
}

TEST_CASE("loss hook sees one A2C loss then M SIL losses per iteration") {
  auto c = small_config(Variant::sil);
  c.total_steps = 400;
  c.sil_min_fill = 1;
  std::vector<bool> seen;
  TrainHooks hooks;
  hooks.on_loss = [&](bool is_sil, double total) {
    CHECK(std::isfinite(total));
    seen.push_back(is_sil);
  };
  const auto r = train(c, hooks);
  std::size_t a2c = 0;
  for (bool s : seen) a2c += s ? 0 : 1;
  CHECK(a2c == r.metrics.size());
  CHECK(seen.front() == false);
}

TEST_CASE("evaluation and action replay use raw rewards") {
  const auto spec = sil::env::GridSpec::load(map_path("key_door_treasure.v1.map"));
  using A = sil::env::Action;
  // Start -> key -> door -> treasure along the shortest path.
  const std::vector<A> path{A::right, A::right, A::up,    A::up,   A::left,  A::left,  A::up,    A::up,
                            A::right, A::right, A::up,    A::up,   A::left,  A::left,  A::right, A::right,
                            A::down,  A::right, A::right, A::up,   A::right, A::right};
  CHECK(replay_actions(spec, path) == 7.0);

  auto c = small_config(Variant::a2c);
  c.total_steps = 200;
  const auto r = train(c);
  const auto a = evaluate(r.params, spec, 5, EvalMode::argmax);
  const auto b = evaluate(r.params, spec, 5, EvalMode::argmax);
  CHECK(a.returns == b.returns);
  CHECK(a.returns.size() == 5);
  const auto s = evaluate(r.params, spec, 20, EvalMode::sample, 1);
  CHECK(s.min <= s.mean);
  CHECK(s.mean <= s.max);
}

TEST_CASE("episode returns exclude the exploration bonus") {
  auto c = small_config(Variant::exp);
  c.env_map = map_path("apple_key_door_treasure.v1.map");
  c.total_steps = 4000;
  c.exploration_beta = 0.37;
  const auto r = train(c);
  REQUIRE_FALSE(r.episodes.empty());
  for (const auto& e : r.episodes) CHECK(e.raw_return == std::round(e.raw_return));
}

TEST_CASE("delayed rewards leave reported returns raw") {
  auto c = small_config(Variant::a2c);
  c.env_map = map_path("apple_key_door_treasure.v1.map");
  c.total_steps = 4000;
  c.delayed_reward_period = 20;
  const auto r = train(c);
  double best = 0.0;
  for (const auto& e : r.episodes) {
    CHECK(e.raw_return == std::round(e.raw_return));
    best = std::max(best, e.raw_return);
  }
  // Apples sit next to the start, so some episode collects one.
  CHECK(best >= 1.0);
}
