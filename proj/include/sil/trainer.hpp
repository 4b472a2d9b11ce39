#pragma once

// Synchronous advantage actor-critic with optional self-imitation updates
// from a prioritized replay of past episodes and an optional count-based
// exploration bonus.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "sil/env.hpp"
#include "sil/nn.hpp"

namespace sil::trainer {

enum class Variant { a2c, sil, exp, sil_exp };

std::string_view variant_name(Variant v);
/// Accepts a2c, sil, exp, sil+exp. Throws ConfigError otherwise.
Variant parse_variant(std::string_view name);

struct TrainConfig {
  Variant variant = Variant::sil;

  // Environment.
  std::string env_map;
  env::RewardTable rewards;
  int time_limit = env::GridSpec::kDefaultTimeLimit;
  int delayed_reward_period = 0;  // 0 = rewards every step

  // Actor-critic.
  std::size_t n_envs = 16;
  std::size_t n_steps = 5;
  double gamma = 0.99;
  double alpha = 0.01;  // entropy weight
  double beta_a2c = 0.5;

  // Self-imitation; used when the variant enables it.
  std::size_t sil_updates = 4;
  std::size_t sil_batch = 512;
  double beta_sil = 0.01;
  std::size_t sil_min_fill = 1;

  // Prioritized replay.
  std::size_t buffer_capacity = 100000;
  double priority_exponent = 0.6;
  double bias_correction = 0.1;
  double priority_epsilon = 1e-6;

  // Count-based exploration; used when the variant enables it.
  double exploration_beta = 0.1;
  bool bonus_in_replay = true;

  // Network and optimizer.
  std::vector<std::size_t> hidden{64, 64};
  nn::OptimizerConfig optimizer;
  double lr = 0.0007;

  std::uint64_t total_steps = 200000;
  std::uint64_t seed = 0;
  std::size_t return_window = 100;

  std::size_t effective_sil_updates() const;
  double effective_exploration_beta() const;

  /// Throws ConfigError naming the first offending key.
  void validate() const;

  bool operator==(const TrainConfig&) const = default;
};

struct IterationMetrics {
  std::uint64_t iteration = 0;
  std::uint64_t env_steps = 0;
  double mean_return = 0.0;  // rolling mean of raw episode returns, 0 before the first episode
  double best_return = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double sil_policy_loss = 0.0;
  double sil_value_loss = 0.0;
  double sil_valid_fraction = 0.0;
  std::size_t buffer_size = 0;
  std::size_t episodes = 0;
};

struct EpisodeRecord {
  std::uint64_t env_steps = 0;  // total env steps when the episode finished
  double raw_return = 0.0;
};

struct TrainResult {
  std::vector<IterationMetrics> metrics;
  std::vector<EpisodeRecord> episodes;
  nn::MlpParams params;
  std::uint64_t sil_skipped_rounds = 0;
  std::uint64_t stale_priority_updates = 0;
};

using MetricsCallback = std::function<void(const IterationMetrics&)>;

struct TrainHooks {
  MetricsCallback on_iteration;
  // Called after every SIL update with the valid mask and the gradient
  // signals; lets tests assert that only R > V samples carry signal.
  std::function<void(const std::vector<std::uint8_t>& valid, const nn::Matrix& dlogits,
                     const std::vector<double>& dvalue)>
      on_sil_update;
  // Called with every A2C and SIL loss report (A2C first each iteration).
  std::function<void(bool is_sil, double total_loss)> on_loss;
};

/// Deterministic for a given config (including seed) and kernel ISA.
/// Throws NumericError if a loss or gradient becomes non-finite.
TrainResult train(const TrainConfig& config, const TrainHooks& hooks = {});

/// Same as train() with a caller-supplied map instead of config.env_map.
TrainResult train(const TrainConfig& config, const env::GridSpec& spec, const TrainHooks& hooks = {});

nn::MlpShape network_shape(const TrainConfig& config, const env::GridSpec& spec);

enum class EvalMode { sample, argmax };

struct EvalStats {
  double mean = 0.0;
  double stddev = 0.0;
  double max = 0.0;
  double min = 0.0;
  std::vector<double> returns;
};

/// Raw-reward episodes with no learning, bonus or delay. In argmax mode the
/// first maximal logit wins ties.
EvalStats evaluate(const nn::MlpParams& params, const env::GridSpec& spec, std::size_t n_episodes,
                   EvalMode mode, std::uint64_t seed = 0);

/// Episode return of a fixed action sequence from reset.
double replay_actions(const env::GridSpec& spec, const std::vector<env::Action>& actions);

inline constexpr std::string_view kCsvHeader =
    "iteration,env_steps,mean_return,best_return,policy_loss,value_loss,entropy,"
    "sil_policy_loss,sil_value_loss,sil_valid_fraction,buffer_size";

void write_csv_row(std::ostream& out, const IterationMetrics& m);

}  // namespace sil::trainer
