#pragma once

// Numerical certification of the losses, the tabular lower-bound theory and
// the prioritized sampler. Shared by the `verify` subcommand and the
// acceptance binary.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace sil::verify {

struct Options {
  bool quick = false;            // reduced sweep sizes
  bool inject_clip_bug = false;  // lower-bound Q-learning regresses on (R - Q)_- instead
  std::uint64_t seed = 20180621;
};

struct Check {
  int criterion = 0;
  std::string name;
  bool passed = false;
  bool informational = false;  // reported, never affects the verdict
  double value = 0.0;          // the measured residual
  double tolerance = 0.0;
  std::string detail;
  double seconds = 0.0;
};

struct Report {
  std::vector<Check> checks;
  double seconds = 0.0;

  /// False if any non-informational check of the criterion failed.
  bool criterion_passed(int criterion) const;
  bool all_passed() const;
};

using Progress = std::function<void(const Check&)>;

std::vector<Check> check_loss_gradients(const Options& options);
std::vector<Check> check_lower_bound(const Options& options);
std::vector<Check> check_grad_equivalence(const Options& options);
std::vector<Check> check_alpha_limit(const Options& options);
std::vector<Check> check_lb_q_learning(const Options& options);
std::vector<Check> check_prioritized_sampling(const Options& options);
std::vector<Check> check_sil_clip(const Options& options);

/// Runs every check in criterion order; `progress` sees each as it finishes.
Report run_all(const Options& options, const Progress& progress = {});

/// One line: "[PASS] 3 grad-equivalence alpha=0.1  value=... tol=...  detail".
std::string format_check(const Check& check);

}  // namespace sil::verify
