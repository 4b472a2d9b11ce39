#pragma once

// Seed-level outcomes of training runs: whether the rolling mean return hit
// a target, when it first did, and where it ended.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sil/trainer.hpp"

namespace sil::behavior {

/// A seed succeeds once the rolling mean return reaches this share of the target.
inline constexpr double kSuccessFraction = 0.9;

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool reached = false;
  std::uint64_t steps_to_target = 0;  // env steps at the first hit; 0 if never
  double final_mean = 0.0;
  double best_return = 0.0;
};

/// First iteration with mean_return >= kSuccessFraction * target.
SeedOutcome summarize(const std::vector<trainer::IterationMetrics>& metrics, double target,
                      std::uint64_t seed = 0);

std::size_t count_reached(const std::vector<SeedOutcome>& outcomes);

/// Median env steps to the target. Seeds that never reach it count as
/// `budget + 1`, so the result exceeds the budget when fewer than half reach.
double median_steps_to_target(const std::vector<SeedOutcome>& outcomes, std::uint64_t budget);

/// Seeds whose final rolling mean lies within `tolerance` of `value`.
std::size_t count_final_near(const std::vector<SeedOutcome>& outcomes, double value, double tolerance);

using SeedProgress = std::function<void(const SeedOutcome&)>;

/// Trains seeds config.seed, config.seed + 1, ... in order.
std::vector<SeedOutcome> run_seeds(const trainer::TrainConfig& config, std::size_t n_seeds, double target,
                                   const SeedProgress& progress = {});

/// "seed 3: reached at 41920 (final 7.00, best 7)".
std::string format_outcome(const SeedOutcome& outcome);

}  // namespace sil::behavior
