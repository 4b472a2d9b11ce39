// Acceptance report: one PASS/FAIL line per criterion, 1 to 11.
// Exit status is 0 only when every criterion passes.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sil/behavior.hpp"
#include "sil/config.hpp"
#include "sil/env.hpp"
#include "sil/error.hpp"
#include "sil/kernels.hpp"
#include "sil/platform.hpp"
#include "sil/trainer.hpp"
#include "sil/verify.hpp"

namespace fs = std::filesystem;
using sil::behavior::SeedOutcome;

namespace {

struct Line {
  int criterion;
  bool passed;
  std::string summary;
};

std::vector<Line> g_lines;

void report(int criterion, bool passed, const std::string& summary) {
  g_lines.push_back({criterion, passed, summary});
  std::printf("criterion %2d: %s  %s\n", criterion, passed ? "PASS" : "FAIL", summary.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

const char* kCriterionNames[] = {
    "",
    "loss gradients match finite differences",
    "per-trajectory lower bound Q* >= R",
    "direct and decomposed gradients agree",
    "lb/sil loss gap shrinks as alpha -> 0",
    "lower-bound Q-learning monotone and convergent",
    "prioritized sampling and sum-tree invariant",
    "SIL clip zeroes gradients when R <= V",
};

void theory_suite(bool quick) {
  sil::verify::Options options;
  options.quick = quick;
  const auto start = std::chrono::steady_clock::now();
  const auto rep = sil::verify::run_all(options, [](const sil::verify::Check& c) {
    std::printf("  %s\n", sil::verify::format_check(c).c_str());
    std::fflush(stdout);
  });
  const double total = seconds_since(start);
  for (int k = 1; k <= 7; ++k) {
    int checks = 0, failed = 0;
    std::string first_failure;
    for (const auto& c : rep.checks) {
      if (c.criterion != k || c.informational) continue;
      ++checks;
      if (!c.passed) {
        if (failed++ == 0) first_failure = c.name + ": " + c.detail;
      }
    }
    std::string summary = fmt("%s (%d checks", kCriterionNames[k], checks);
    if (failed > 0) summary += fmt(", %d failed; first: %s", failed, first_failure.c_str());
    summary += ")";
    report(k, rep.criterion_passed(k) && checks > 0, summary);
  }
  std::printf("  theory suite wall time %.1f s (limit 300 s)\n", total);
}

struct Scenario {
  std::string label;
  sil::trainer::TrainConfig config;
  double optimal = 0.0;
  std::vector<SeedOutcome> outcomes;
};

Scenario run_scenario(const fs::path& config_path, std::size_t seeds, std::uint64_t steps) {
  Scenario s;
  s.label = config_path.stem().string();
  s.config = sil::config::load(config_path);
  s.config.total_steps = steps;
  const auto spec = sil::env::GridSpec::load(s.config.env_map, s.config.rewards, s.config.time_limit);
  s.optimal = spec.full_collection_return();
  std::printf("  %s: %zu seeds x %llu steps, optimal %g\n", s.label.c_str(), seeds,
              static_cast<unsigned long long>(steps), s.optimal);
  std::fflush(stdout);
  const auto start = std::chrono::steady_clock::now();
  s.outcomes = sil::behavior::run_seeds(s.config, seeds, s.optimal, [](const SeedOutcome& o) {
    std::printf("    %s\n", sil::behavior::format_outcome(o).c_str());
    std::fflush(stdout);
  });
  std::printf("  %s: %zu/%zu reached in %.1f s\n", s.label.c_str(), sil::behavior::count_reached(s.outcomes),
              seeds, seconds_since(start));
  return s;
}

std::string median_text(double median, std::uint64_t budget) {
  return median > static_cast<double>(budget) ? std::string("censored") : fmt("%.0f", median);
}

bool bit_equal(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

bool metrics_bit_equal(const std::vector<sil::trainer::IterationMetrics>& a,
                       const std::vector<sil::trainer::IterationMetrics>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a[i];
    const auto& y = b[i];
    const double xs[] = {x.mean_return, x.best_return, x.policy_loss, x.value_loss, x.entropy,
                         x.sil_policy_loss, x.sil_value_loss, x.sil_valid_fraction};
    const double ys[] = {y.mean_return, y.best_return, y.policy_loss, y.value_loss, y.entropy,
                         y.sil_policy_loss, y.sil_value_loss, y.sil_valid_fraction};
    if (x.iteration != y.iteration || x.env_steps != y.env_steps || x.buffer_size != y.buffer_size ||
        x.episodes != y.episodes || !bit_equal(xs, ys))
      return false;
  }
  return true;
}

void ablation_identity(const fs::path& configs, std::uint64_t steps) {
  auto reference = sil::config::load(configs / "keydoor_a2c.cfg");
  reference.total_steps = steps;
  reference.variant = sil::trainer::Variant::a2c;
  auto ablated = reference;
  ablated.variant = sil::trainer::Variant::sil_exp;
  ablated.sil_updates = 0;
  ablated.exploration_beta = 0.0;
  const auto a = sil::trainer::train(reference);
  const auto b = sil::trainer::train(ablated);
  const bool params_equal = bit_equal(a.params.values(), b.params.values());
  const bool metrics_equal = metrics_bit_equal(a.metrics, b.metrics);
  report(11, params_equal && metrics_equal,
         fmt("sil+exp with M=0, beta=0 vs a2c, seed %llu, %llu steps: parameters %s, %zu metric rows %s",
             static_cast<unsigned long long>(reference.seed), static_cast<unsigned long long>(steps),
             params_equal ? "bit-identical" : "differ", a.metrics.size(), metrics_equal ? "bit-identical" : "differ"));
}

}  // namespace

int main(int argc, char** argv) {
  sil::tune_allocator();

  CLI::App app{"Acceptance report for the self-imitation lab"};
  bool quick = false;
  bool theory_only = false;
  std::size_t seeds = 10;
  std::uint64_t steps = 200000;
  std::string config_dir = SIL_LAB_CONFIG_DIR;
  app.add_flag("--quick", quick, "Reduced theory sweeps");
  app.add_flag("--theory-only", theory_only, "Skip the training runs (criteria 8 to 11)");
  app.add_option("--seeds", seeds, "Seeds per training scenario")->check(CLI::PositiveNumber);
  app.add_option("--steps", steps, "Env step budget per seed")->check(CLI::PositiveNumber);
  app.add_option("--configs", config_dir, "Directory holding the scenario configs");
  CLI11_PARSE(app, argc, argv);

  const auto start = std::chrono::steady_clock::now();
  std::printf("kernels: %s\n", std::string(sil::kernels::isa_name(sil::kernels::active().isa)).c_str());

  try {
    theory_suite(quick);
    if (!theory_only) {
      const fs::path configs = config_dir;

      auto kd_sil = run_scenario(configs / "keydoor_sil.cfg", seeds, steps);
      auto kd_a2c = run_scenario(configs / "keydoor_a2c.cfg", seeds, steps);
      {
        const auto sil_hits = sil::behavior::count_reached(kd_sil.outcomes);
        const auto a2c_hits = sil::behavior::count_reached(kd_a2c.outcomes);
        const double sil_med = sil::behavior::median_steps_to_target(kd_sil.outcomes, steps);
        const double a2c_med = sil::behavior::median_steps_to_target(kd_a2c.outcomes, steps);
        const std::size_t need = (7 * seeds + 9) / 10;
        const bool ok = sil_hits >= need && a2c_hits < sil_hits && sil_med < a2c_med;
        report(8, ok,
               fmt("key-door-treasure: a2c+sil %zu/%zu optimal (need %zu), a2c %zu/%zu; median steps %s vs %s",
                   sil_hits, seeds, need, a2c_hits, seeds, median_text(sil_med, steps).c_str(),
                   median_text(a2c_med, steps).c_str()));
      }

      auto ap_sil = run_scenario(configs / "apples_sil_exp.cfg", seeds, steps);
      auto ap_a2c = run_scenario(configs / "apples_a2c.cfg", seeds, steps);
      {
        const auto full_hits = sil::behavior::count_reached(ap_sil.outcomes);
        const double two_apple = 2.0 * ap_a2c.config.rewards.apple;
        const auto apple_only = sil::behavior::count_final_near(ap_a2c.outcomes, two_apple, 0.5);
        const std::size_t need = (6 * seeds + 9) / 10;
        report(9, full_hits >= need && apple_only >= need,
               fmt("apple-key-door-treasure: a2c+sil+exp %zu/%zu full return %g (need %zu); a2c ends at %g +- 0.5 on "
                   "%zu/%zu (need %zu)",
                   full_hits, seeds, ap_sil.optimal, need, two_apple, apple_only, seeds, need));
      }

      auto dl_sil = run_scenario(configs / "keydoor_delayed_sil.cfg", seeds, steps);
      auto dl_a2c = run_scenario(configs / "keydoor_delayed_a2c.cfg", seeds, steps);
      {
        const auto gap = [](const Scenario& with, const Scenario& without) {
          return static_cast<long>(sil::behavior::count_reached(with.outcomes)) -
                 static_cast<long>(sil::behavior::count_reached(without.outcomes));
        };
        const long plain_gap = gap(kd_sil, kd_a2c);
        const long delayed_gap = gap(dl_sil, dl_a2c);
        report(10, delayed_gap >= plain_gap,
               fmt("success gap sil minus a2c: delayed (period %d) %ld, immediate %ld", dl_sil.config.delayed_reward_period,
                   delayed_gap, plain_gap));
      }

      ablation_identity(configs, 20000);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "acceptance aborted: %s\n", e.what());
    return 2;
  }

  int failed = 0;
  for (const auto& l : g_lines) failed += l.passed ? 0 : 1;
  std::printf("acceptance: %zu criteria evaluated, %d failed, %.1f s\n", g_lines.size(), failed, seconds_since(start));
  return failed == 0 ? 0 : 1;
}
