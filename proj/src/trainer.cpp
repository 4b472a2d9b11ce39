#include "sil/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include "sil/error.hpp"
#include "sil/losses.hpp"
#include "sil/random.hpp"
#include "sil/replay.hpp"

namespace sil::trainer {

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::a2c:
      return "a2c";
    case Variant::sil:
      return "sil";
    case Variant::exp:
      return "exp";
    case Variant::sil_exp:
      return "sil+exp";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  if (name == "a2c") return Variant::a2c;
  if (name == "sil") return Variant::sil;
  if (name == "exp") return Variant::exp;
  if (name == "sil+exp") return Variant::sil_exp;
  throw ConfigError("unknown variant '" + std::string(name) + "' (expected a2c, sil, exp or sil+exp)");
}

std::size_t TrainConfig::effective_sil_updates() const {
  return (variant == Variant::sil || variant == Variant::sil_exp) ? sil_updates : 0;
}

double TrainConfig::effective_exploration_beta() const {
  return (variant == Variant::exp || variant == Variant::sil_exp) ? exploration_beta : 0.0;
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* key, const char* what) {
    if (!ok) throw ConfigError(std::string(key) + ": " + what);
  };
  require(n_envs > 0, "a2c.n_envs", "must be positive");
  require(n_steps > 0, "a2c.n_steps", "must be positive");
  require(gamma >= 0.0 && gamma <= 1.0, "a2c.gamma", "must lie in [0, 1]");
  require(alpha >= 0.0, "a2c.entropy_alpha", "must be non-negative");
  require(beta_a2c >= 0.0, "a2c.value_weight", "must be non-negative");
  require(sil_batch > 0, "sil.batch_size", "must be positive");
  require(beta_sil >= 0.0, "sil.value_weight", "must be non-negative");
  require(sil_min_fill > 0, "sil.min_fill", "must be positive");
  require(buffer_capacity > 0, "replay.capacity", "must be positive");
  require(priority_exponent >= 0.0, "replay.exponent", "must be non-negative");
  require(bias_correction >= 0.0, "replay.bias_correction", "must be non-negative");
  require(priority_epsilon > 0.0, "replay.epsilon", "must be positive");
  require(exploration_beta >= 0.0, "exploration.beta", "must be non-negative");
  require(time_limit > 0, "env.time_limit", "must be positive");
  require(delayed_reward_period >= 0, "env.delayed_reward_period", "must be non-negative");
  require(lr > 0.0, "optimizer.lr", "must be positive");
  require(optimizer.decay >= 0.0 && optimizer.decay < 1.0, "optimizer.decay", "must lie in [0, 1)");
  require(optimizer.epsilon > 0.0, "optimizer.epsilon", "must be positive");
  require(total_steps > 0, "train.total_steps", "must be positive");
  require(return_window > 0, "train.return_window", "must be positive");
  for (auto h : hidden) require(h > 0, "net.hidden", "layer widths must be positive");
}

nn::MlpShape network_shape(const TrainConfig& config, const env::GridSpec& spec) {
  nn::MlpShape shape;
  shape.input_dim = spec.obs_dim();
  shape.hidden = config.hidden;
  shape.action_count = env::kActionCount;
  return shape;
}

namespace {

constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kSilStream = 1;
constexpr std::uint64_t kLaneStreamBase = 1000;

std::size_t sample_action(std::span<const double> logits, Rng& rng) {
  const auto probs = nn::softmax(logits);
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t a = 0; a < probs.size(); ++a) {
    acc += probs[a];
    if (u < acc) return a;
  }
  return probs.size() - 1;
}

std::size_t rollout_workers(std::size_t lanes) {
  std::size_t workers = 1;
  if (const char* env = std::getenv("SIL_LAB_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) workers = static_cast<std::size_t>(v);
  }
  return std::clamp<std::size_t>(workers, 1, lanes);
}

template <class Fn>
void parallel_lanes(std::size_t lanes, std::size_t workers, Fn&& fn) {
  if (workers <= 1) {
    for (std::size_t e = 0; e < lanes; ++e) fn(e);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t e = w; e < lanes; e += workers) fn(e);
    });
  }
}

struct Lane {
  env::GridWorld world;
  std::optional<env::DelayedReward> delay;
  Rng rng;
  std::vector<double> obs;
  replay::EpisodeBuffer episode;
  double raw_return = 0.0;
  env::StepResult pending;
  std::size_t pending_action = 0;
};

void check_finite(double value, const char* what, std::uint64_t iteration) {
  if (!std::isfinite(value)) {
    std::ostringstream os;
    os << what << " became non-finite at iteration " << iteration;
    throw NumericError(os.str());
  }
}

}  // namespace

TrainResult train(const TrainConfig& config, const TrainHooks& hooks) {
  if (config.env_map.empty()) throw ConfigError("env.map: no map file configured");
  const auto spec = env::GridSpec::load(config.env_map, config.rewards, config.time_limit);
  return train(config, spec, hooks);
}

TrainResult train(const TrainConfig& config, const env::GridSpec& spec, const TrainHooks& hooks) {
  config.validate();
  const std::size_t lanes = config.n_envs;
  const std::size_t obs_dim = spec.obs_dim();
  const std::size_t sil_updates = config.effective_sil_updates();
  const double beta = config.effective_exploration_beta();
  const std::size_t workers = rollout_workers(lanes);

  TrainResult result{{}, {}, nn::MlpParams::initialized(network_shape(config, spec),
                                                        make_rng(config.seed, kInitStream)())};
  nn::MlpParams& params = result.params;
  nn::Optimizer optimizer(config.optimizer, params.size());
  replay::PrioritizedBuffer buffer(
      {config.buffer_capacity, config.priority_exponent, config.bias_correction, config.priority_epsilon}, obs_dim);
  env::VisitCounter visits;
  Rng sil_rng = make_rng(config.seed, kSilStream);

  std::vector<Lane> lane_state;
  lane_state.reserve(lanes);
  for (std::size_t e = 0; e < lanes; ++e) {
    Lane lane{env::GridWorld(spec), std::nullopt, make_rng(config.seed, kLaneStreamBase + e), {}, {}, 0.0, {}, 0};
    if (config.delayed_reward_period > 0) lane.delay.emplace(config.delayed_reward_period);
    lane.obs = lane.world.reset(config.seed);
    lane_state.push_back(std::move(lane));
  }

  std::deque<double> window;
  double window_sum = 0.0;
  double best_return = 0.0;
  bool any_episode = false;
  std::uint64_t env_steps = 0;

  losses::A2cRollout rollout;
  rollout.n_envs = lanes;
  rollout.n_steps = config.n_steps;
  rollout.gamma = config.gamma;

  for (std::uint64_t iteration = 1; env_steps < config.total_steps; ++iteration) {
    rollout.observations = nn::Matrix(lanes * config.n_steps, obs_dim);
    rollout.actions.assign(lanes * config.n_steps, 0);
    rollout.rewards.assign(lanes * config.n_steps, 0.0);
    rollout.dones.assign(lanes * config.n_steps, 0);

    // Collect on-policy samples; parameters are read-only here.
    for (std::size_t t = 0; t < config.n_steps; ++t) {
      nn::Matrix obs(lanes, obs_dim);
      for (std::size_t e = 0; e < lanes; ++e) std::copy(lane_state[e].obs.begin(), lane_state[e].obs.end(), obs.row(e).begin());
      const auto out = nn::forward(params, obs);

      parallel_lanes(lanes, workers, [&](std::size_t e) {
        auto& lane = lane_state[e];
        lane.pending_action = sample_action(out.logits.row(e), lane.rng);
        lane.pending = lane.world.step(static_cast<env::Action>(lane.pending_action));
        if (lane.delay) lane.pending = lane.delay->apply(std::move(lane.pending));
      });

      // Shared state (visit counts, replay) is updated in lane order.
      for (std::size_t e = 0; e < lanes; ++e) {
        auto& lane = lane_state[e];
        auto res = env::bonus_step(visits, std::move(lane.pending), lane.world.state(), beta);
        const std::size_t row = t * lanes + e;
        std::copy(lane.obs.begin(), lane.obs.end(), rollout.observations.row(row).begin());
        rollout.actions[row] = static_cast<int>(lane.pending_action);
        rollout.rewards[row] = res.reward;
        rollout.dones[row] = res.done ? 1 : 0;

        const double replay_reward = config.bonus_in_replay ? res.reward : res.reward - res.info.bonus_reward;
        lane.episode.push(std::move(lane.obs), static_cast<int>(lane.pending_action), replay_reward);
        lane.raw_return += res.info.raw_reward;

        if (res.done) {
          auto entries = replay::compute_returns(lane.episode, config.gamma);
          nn::Matrix ep_obs(entries.size(), obs_dim);
          for (std::size_t i = 0; i < entries.size(); ++i)
            std::copy(entries[i].observation.begin(), entries[i].observation.end(), ep_obs.row(i).begin());
          const auto values = nn::forward(params, ep_obs).values;
          buffer.push_episode(entries, values);
          lane.episode.clear();

          const std::uint64_t finished_at = env_steps + (t + 1) * lanes;
          result.episodes.push_back({finished_at, lane.raw_return});
          window.push_back(lane.raw_return);
          window_sum += lane.raw_return;
          if (window.size() > config.return_window) {
            window_sum -= window.front();
            window.pop_front();
          }
          best_return = any_episode ? std::max(best_return, lane.raw_return) : lane.raw_return;
          any_episode = true;
          lane.raw_return = 0.0;
          if (lane.delay) lane.delay->reset();
          lane.obs = lane.world.reset(config.seed);
        } else {
          lane.obs = std::move(res.observation);
        }
      }
    }
    env_steps += lanes * config.n_steps;

    IterationMetrics m;
    m.iteration = iteration;
    m.env_steps = env_steps;

    // Actor-critic update on the rollout.
    {
      nn::Matrix boot(lanes, obs_dim);
      for (std::size_t e = 0; e < lanes; ++e) std::copy(lane_state[e].obs.begin(), lane_state[e].obs.end(), boot.row(e).begin());
      rollout.bootstrap_observations = boot;
      const auto boot_values = nn::forward(params, boot).values;
      const auto out = nn::forward(params, rollout.observations);
      const auto loss = losses::a2c_loss(rollout, out.logits, out.values, boot_values, config.alpha, config.beta_a2c);
      check_finite(loss.total, "a2c loss", iteration);
      if (hooks.on_loss) hooks.on_loss(false, loss.total);
      const auto grads = nn::backprop(params, out.cache, loss.dlogits, loss.dvalue);
      const auto step = optimizer.step(params, grads, config.lr);
      if (!step.applied) {
        throw NumericError("a2c gradient has " + std::to_string(step.non_finite_count) +
                           " non-finite entries (first at " + std::to_string(step.first_non_finite) +
                           ") at iteration " + std::to_string(iteration));
      }
      m.policy_loss = loss.policy_loss;
      m.value_loss = loss.value_loss;
      m.entropy = loss.entropy;
    }

    // Self-imitation updates from the prioritized replay.
    std::size_t sil_done = 0;
    for (std::size_t k = 0; k < sil_updates; ++k) {
      if (buffer.size() < config.sil_min_fill) {
        ++result.sil_skipped_rounds;
        break;
      }
      auto sample = buffer.sample(config.sil_batch, sil_rng);
      const auto out = nn::forward(params, sample.batch.observations);
      const auto loss = losses::sil_loss(sample.batch, out.logits, out.values, config.beta_sil);
      check_finite(loss.total, "sil loss", iteration);
      if (hooks.on_loss) hooks.on_loss(true, loss.total);
      if (hooks.on_sil_update) hooks.on_sil_update(loss.valid, loss.dlogits, loss.dvalue);
      if (loss.valid_fraction > 0.0) {
        const auto grads = nn::backprop(params, out.cache, loss.dlogits, loss.dvalue);
        const auto step = optimizer.step(params, grads, config.lr);
        if (!step.applied) throw NumericError("sil gradient became non-finite at iteration " + std::to_string(iteration));
      }

      const auto refreshed = nn::forward(params, sample.batch.observations).values;
      std::vector<double> advantages(refreshed.size());
      for (std::size_t i = 0; i < refreshed.size(); ++i)
        advantages[i] = std::max(sample.batch.returns[i] - refreshed[i], 0.0);
      result.stale_priority_updates += buffer.update_priorities(sample.handles, advantages);

      m.sil_policy_loss += loss.policy_loss;
      m.sil_value_loss += loss.value_loss;
      m.sil_valid_fraction += loss.valid_fraction;
      ++sil_done;
    }
    if (sil_done > 0) {
      const double inv = 1.0 / static_cast<double>(sil_done);
      m.sil_policy_loss *= inv;
      m.sil_value_loss *= inv;
      m.sil_valid_fraction *= inv;
    }

    m.mean_return = window.empty() ? 0.0 : window_sum / static_cast<double>(window.size());
    m.best_return = best_return;
    m.buffer_size = buffer.size();
    m.episodes = result.episodes.size();
    result.metrics.push_back(m);
    if (hooks.on_iteration) hooks.on_iteration(m);
  }
  return result;
}

EvalStats evaluate(const nn::MlpParams& params, const env::GridSpec& spec, std::size_t n_episodes, EvalMode mode,
                   std::uint64_t seed) {
  EvalStats stats;
  Rng rng = make_rng(seed, kSilStream + 7);
  env::GridWorld world(spec);
  nn::Matrix obs(1, spec.obs_dim());
  for (std::size_t ep = 0; ep < n_episodes; ++ep) {
    auto o = world.reset(seed);
    double ret = 0.0;
    for (;;) {
      std::copy(o.begin(), o.end(), obs.row(0).begin());
      const auto out = nn::forward(params, obs);
      const auto logits = out.logits.row(0);
      std::size_t a;
      if (mode == EvalMode::argmax) {
        a = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
      } else {
        a = sample_action(logits, rng);
      }
      auto res = world.step(static_cast<env::Action>(a));
      ret += res.info.raw_reward;
      if (res.done) break;
      o = std::move(res.observation);
    }
    stats.returns.push_back(ret);
  }
  if (stats.returns.empty()) return stats;
  double sum = 0.0;
  for (double r : stats.returns) sum += r;
  stats.mean = sum / static_cast<double>(stats.returns.size());
  double sq = 0.0;
  for (double r : stats.returns) sq += (r - stats.mean) * (r - stats.mean);
  stats.stddev = std::sqrt(sq / static_cast<double>(stats.returns.size()));
  stats.max = *std::max_element(stats.returns.begin(), stats.returns.end());
  stats.min = *std::min_element(stats.returns.begin(), stats.returns.end());
  return stats;
}

double replay_actions(const env::GridSpec& spec, const std::vector<env::Action>& actions) {
  env::GridWorld world(spec);
  double total = 0.0;
  for (auto a : actions) {
    const auto res = world.step(a);
    total += res.info.raw_reward;
    if (res.done) break;
  }
  return total;
}

void write_csv_row(std::ostream& out, const IterationMetrics& m) {
  char line[512];
  std::snprintf(line, sizeof line, "%llu,%llu,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%zu\n",
                static_cast<unsigned long long>(m.iteration), static_cast<unsigned long long>(m.env_steps),
                m.mean_return, m.best_return, m.policy_loss, m.value_loss, m.entropy, m.sil_policy_loss,
                m.sil_value_loss, m.sil_valid_fraction, m.buffer_size);
  out << line;
}

}  // namespace sil::trainer
