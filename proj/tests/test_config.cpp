#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "sil/behavior.hpp"
#include "sil/checkpoint.hpp"
#include "sil/config.hpp"
#include "sil/error.hpp"

namespace fs = std::filesystem;
using sil::trainer::TrainConfig;
using sil::trainer::Variant;

namespace {

std::string error_of(std::string_view text) {
  try {
    sil::config::parse(text, "/tmp");
  } catch (const sil::ConfigError& e) {
    return e.what();
  }
  return "";
}

fs::path temp_file(const char* name) { return fs::temp_directory_path() / name; }

}  // namespace

TEST_CASE("config parses sections, comments and defaults") {
  const auto c = sil::config::parse(
      "# comment\n"
      "[env]\n"
      "map = maps/x.map   # trailing comment\n"
      "delayed_reward_period = 20\n"
      "[a2c]\n"
      "n_envs = 8\n"
      "[optimizer]\n"
      "kind = adam\n"
      "[exploration]\n"
      "bonus_in_replay = false\n"
      "[train]\n"
      "variant = sil+exp\n",
      "/data/run");
  CHECK(c.env_map == "/data/run/maps/x.map");
  CHECK(c.delayed_reward_period == 20);
  CHECK(c.n_envs == 8);
  CHECK(c.n_steps == 5);
  CHECK(c.optimizer.kind == sil::nn::OptimizerKind::adam);
  CHECK_FALSE(c.bonus_in_replay);
  CHECK(c.variant == Variant::sil_exp);
}

TEST_CASE("config errors name section and key") {
  CHECK(error_of("[a2c]\nn_env = 3\n").find("a2c.n_env") != std::string::npos);
  CHECK(error_of("[a2c]\nn_envs = three\n").find("a2c.n_envs") != std::string::npos);
  CHECK(error_of("[a2c]\nn_envs = 3\nn_envs = 4\n").find("a2c.n_envs") != std::string::npos);
  CHECK(error_of("[nope]\nx = 1\n").find("nope") != std::string::npos);
  CHECK(error_of("[train]\nvariant = ppo\n").find("train.variant") != std::string::npos);
  CHECK(error_of("[a2c]\ngamma\n") != "");
  CHECK(error_of("n_envs = 3\n") != "");
  CHECK_THROWS_AS(sil::config::load("/nonexistent.cfg"), sil::ConfigError);
}

TEST_CASE("serialize then parse is the identity") {
  TrainConfig c;
  c.env_map = "/abs/map.map";
  c.variant = Variant::exp;
  c.gamma = 0.1 + 0.2;  // not exactly representable in short decimal
  c.lr = 7e-4;
  c.hidden = {32, 16, 8};
  c.delayed_reward_period = 20;
  c.bonus_in_replay = false;
  c.rewards.treasure = 5.5;
  c.total_steps = 123457;
  const auto text = sil::config::serialize(c);
  CHECK(sil::config::parse(text) == c);
  CHECK(sil::config::serialize(sil::config::parse(text)) == text);
}

TEST_CASE("shipped configs load and validate") {
  for (const char* name : {"keydoor_sil.cfg", "keydoor_a2c.cfg", "keydoor_delayed_sil.cfg", "keydoor_delayed_a2c.cfg",
                           "apples_sil_exp.cfg", "apples_a2c.cfg"}) {
    CAPTURE(name);
    const auto c = sil::config::load(fs::path(SIL_LAB_CONFIG_DIR) / name);
    CHECK_NOTHROW(c.validate());
    CHECK(fs::exists(c.env_map));
    CHECK(c.total_steps == 200000);
  }
}

TEST_CASE("checkpoint round trip is exact") {
  sil::nn::MlpShape shape;
  shape.input_dim = 83;
  shape.hidden = {64, 32};
  shape.action_count = 4;
  const auto p = sil::nn::MlpParams::initialized(shape, 12);
  const auto path = temp_file("sil_ckpt_roundtrip.ckpt");
  sil::checkpoint::save(path, p);
  const auto q = sil::checkpoint::load(path);
  CHECK(q == p);
  fs::remove(path);
}

TEST_CASE("corrupt checkpoints are rejected") {
  sil::nn::MlpShape shape;
  shape.input_dim = 5;
  shape.hidden = {4};
  shape.action_count = 2;
  const auto p = sil::nn::MlpParams::initialized(shape, 1);
  const auto path = temp_file("sil_ckpt_corrupt.ckpt");
  sil::checkpoint::save(path, p);
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& b) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << b;
  };
  write(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(sil::checkpoint::load(path), sil::ConfigError);
  write(bytes + "x");
  CHECK_THROWS_AS(sil::checkpoint::load(path), sil::ConfigError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  write(bad_magic);
  CHECK_THROWS_AS(sil::checkpoint::load(path), sil::ConfigError);
  auto bad_version = bytes;
  bad_version[8] = 9;
  write(bad_version);
  CHECK_THROWS_AS(sil::checkpoint::load(path), sil::ConfigError);
  fs::remove(path);
  CHECK_THROWS_AS(sil::checkpoint::load(path), sil::ConfigError);
}

TEST_CASE("seed outcome marks the first iteration over the success line") {
  std::vector<sil::trainer::IterationMetrics> m(4);
  const double means[] = {1.0, 6.2, 6.3, 5.0};
  for (std::size_t i = 0; i < 4; ++i) {
    m[i].env_steps = 80 * (i + 1);
    m[i].mean_return = means[i];
    m[i].best_return = 7.0;
    m[i].episodes = 10;
  }
  const auto o = sil::behavior::summarize(m, 7.0, 5);
  CHECK(o.reached);
  CHECK(o.steps_to_target == 240);
  CHECK(o.final_mean == 5.0);
  CHECK(o.seed == 5);
  CHECK_FALSE(sil::behavior::summarize(m, 8.0).reached);
}

TEST_CASE("median steps treats unreached seeds as past the budget") {
  using sil::behavior::SeedOutcome;
  std::vector<SeedOutcome> v(4);
  v[0] = {0, true, 100, 7, 7};
  v[1] = {1, true, 300, 7, 7};
  v[2] = {2, false, 0, 1, 1};
  v[3] = {3, false, 0, 1, 1};
  CHECK(sil::behavior::count_reached(v) == 2);
  CHECK(sil::behavior::median_steps_to_target(v, 1000) == doctest::Approx(0.5 * (300 + 1001)));
  v[2] = {2, true, 200, 7, 7};
  CHECK(sil::behavior::median_steps_to_target(v, 1000) == 250.0);
  CHECK(sil::behavior::count_final_near(v, 1.0, 0.5) == 1);
}
