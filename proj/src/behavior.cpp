#include "sil/behavior.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "sil/env.hpp"

namespace sil::behavior {

SeedOutcome summarize(const std::vector<trainer::IterationMetrics>& metrics, double target, std::uint64_t seed) {
  SeedOutcome out;
  out.seed = seed;
  const double threshold = kSuccessFraction * target;
  for (const auto& m : metrics) {
    if (!out.reached && m.episodes > 0 && m.mean_return >= threshold) {
      out.reached = true;
      out.steps_to_target = m.env_steps;
    }
    out.best_return = std::max(out.best_return, m.best_return);
  }
  if (!metrics.empty()) out.final_mean = metrics.back().mean_return;
  return out;
}

std::size_t count_reached(const std::vector<SeedOutcome>& outcomes) {
  return static_cast<std::size_t>(
      std::count_if(outcomes.begin(), outcomes.end(), [](const SeedOutcome& o) { return o.reached; }));
}

double median_steps_to_target(const std::vector<SeedOutcome>& outcomes, std::uint64_t budget) {
  if (outcomes.empty()) return static_cast<double>(budget) + 1.0;
  std::vector<double> steps;
  steps.reserve(outcomes.size());
  for (const auto& o : outcomes)
    steps.push_back(o.reached ? static_cast<double>(o.steps_to_target) : static_cast<double>(budget) + 1.0);
  std::sort(steps.begin(), steps.end());
  const std::size_t n = steps.size();
  return n % 2 == 1 ? steps[n / 2] : 0.5 * (steps[n / 2 - 1] + steps[n / 2]);
}

std::size_t count_final_near(const std::vector<SeedOutcome>& outcomes, double value, double tolerance) {
  return static_cast<std::size_t>(std::count_if(outcomes.begin(), outcomes.end(), [&](const SeedOutcome& o) {
    return std::abs(o.final_mean - value) <= tolerance;
  }));
}

std::vector<SeedOutcome> run_seeds(const trainer::TrainConfig& config, std::size_t n_seeds, double target,
                                   const SeedProgress& progress) {
  const auto spec = env::GridSpec::load(config.env_map, config.rewards, config.time_limit);
  std::vector<SeedOutcome> outcomes;
  outcomes.reserve(n_seeds);
  for (std::size_t i = 0; i < n_seeds; ++i) {
    auto cfg = config;
    cfg.seed = config.seed + i;
    const auto result = trainer::train(cfg, spec);
    outcomes.push_back(summarize(result.metrics, target, cfg.seed));
    if (progress) progress(outcomes.back());
  }
  return outcomes;
}

std::string format_outcome(const SeedOutcome& o) {
  char buf[160];
  if (o.reached)
    std::snprintf(buf, sizeof buf, "seed %llu: reached at %llu (final %.2f, best %g)",
                  static_cast<unsigned long long>(o.seed), static_cast<unsigned long long>(o.steps_to_target),
                  o.final_mean, o.best_return);
  else
    std::snprintf(buf, sizeof buf, "seed %llu: not reached (final %.2f, best %g)",
                  static_cast<unsigned long long>(o.seed), o.final_mean, o.best_return);
  return buf;
}

}  // namespace sil::behavior
