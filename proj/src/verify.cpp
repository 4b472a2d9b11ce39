#include "sil/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "sil/losses.hpp"
#include "sil/nn.hpp"
#include "sil/oracle.hpp"
#include "sil/random.hpp"
#include "sil/replay.hpp"

namespace sil::verify {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed(Clock::time_point since) { return std::chrono::duration<double>(Clock::now() - since).count(); }

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
}

std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// Loss gradient checks use a small network with perturbed weights so every
// head carries non-trivial signal.
const nn::MlpShape kProbeShape{7, {6, 5}, 4, nn::Activation::tanh};
constexpr double kFdStep = 1e-5;
constexpr double kFdFloor = 1e-6;

nn::MlpParams probe_params(Rng& rng) {
  auto params = nn::MlpParams::initialized(kProbeShape, rng());
  for (double& v : params.values()) v += uniform(rng, -0.3, 0.3);
  return params;
}

nn::Matrix random_obs(Rng& rng, std::size_t rows, std::size_t cols) {
  nn::Matrix m(rows, cols);
  for (double& v : m.data()) v = uniform(rng, -1.0, 1.0);
  return m;
}

double rel_error(double a, double f) { return std::abs(a - f) / std::max({std::abs(a), std::abs(f), kFdFloor}); }

// Central differences of `loss` at every parameter; returns the largest
// relative disagreement with `analytic`.
template <class Loss>
double fd_compare(nn::MlpParams& params, const std::vector<double>& analytic, Loss&& loss) {
  double worst = 0.0;
  auto values = params.values();
  for (std::size_t k = 0; k < values.size(); ++k) {
    const double saved = values[k];
    values[k] = saved + kFdStep;
    const double up = loss(params);
    values[k] = saved - kFdStep;
    const double down = loss(params);
    values[k] = saved;
    worst = std::max(worst, rel_error(analytic[k], (up - down) / (2.0 * kFdStep)));
  }
  return worst;
}

// Returns whose advantage sits at least 0.2 away from the (R - V)_+ kink.
double away_from_kink(Rng& rng, double v) {
  const double gap = uniform(rng, 0.2, 1.5);
  return uniform01(rng) < 0.5 ? v + gap : v - gap;
}

Check sil_gradient_check(Rng& rng, std::size_t draws) {
  Check c{1, "loss-gradients sil", false, false, 0.0, 1e-4, {}, 0.0};
  constexpr double beta = 0.01;
  double surrogate_gap = 0.0;
  for (std::size_t d = 0; d < draws; ++d) {
    auto params = probe_params(rng);
    losses::SilBatch batch;
    const std::size_t n = 8;
    batch.observations = random_obs(rng, n, kProbeShape.input_dim);
    const auto out = nn::forward(params, batch.observations);
    for (std::size_t i = 0; i < n; ++i) {
      batch.actions.push_back(static_cast<int>(uniform_index(rng, kProbeShape.action_count)));
      batch.returns.push_back(away_from_kink(rng, out.values[i]));
      batch.weights.push_back(uniform(rng, 0.2, 1.0));
    }
    const auto report = losses::sil_loss(batch, out.logits, out.values, beta);
    const auto grads = nn::backprop(params, out.cache, report.dlogits, report.dvalue);

    // Advantages multiplying log pi are constants; the value term is
    // differentiated through V.
    std::vector<double> adv(n);
    for (std::size_t i = 0; i < n; ++i) adv[i] = std::max(batch.returns[i] - out.values[i], 0.0);
    auto surrogate = [&](const nn::MlpParams& p) {
      const auto o = nn::forward(p, batch.observations);
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto logp = nn::log_softmax(o.logits.row(i));
        const double gap = std::max(batch.returns[i] - o.values[i], 0.0);
        total += batch.weights[i] * (-logp[static_cast<std::size_t>(batch.actions[i])] * adv[i] + beta * 0.5 * gap * gap);
      }
      return total / static_cast<double>(n);
    };
    surrogate_gap = std::max(surrogate_gap, std::abs(surrogate(params) - report.total));
    c.value = std::max(c.value, fd_compare(params, grads.values, surrogate));
  }
  c.passed = c.value <= c.tolerance && surrogate_gap <= 1e-12;
  c.detail = std::to_string(draws) + " draws, loss-value mismatch " + fmt_g(surrogate_gap);
  return c;
}

Check a2c_gradient_check(Rng& rng, std::size_t draws) {
  Check c{1, "loss-gradients a2c", false, false, 0.0, 1e-4, {}, 0.0};
  constexpr double alpha = 0.01, beta = 0.5;
  double surrogate_gap = 0.0;
  for (std::size_t d = 0; d < draws; ++d) {
    auto params = probe_params(rng);
    losses::A2cRollout rollout;
    rollout.n_envs = 3;
    rollout.n_steps = 4;
    rollout.gamma = 0.9;
    const std::size_t n = rollout.size();
    rollout.observations = random_obs(rng, n, kProbeShape.input_dim);
    rollout.bootstrap_observations = random_obs(rng, rollout.n_envs, kProbeShape.input_dim);
    for (std::size_t i = 0; i < n; ++i) {
      rollout.actions.push_back(static_cast<int>(uniform_index(rng, kProbeShape.action_count)));
      rollout.rewards.push_back(uniform(rng, -1.0, 1.0));
      rollout.dones.push_back(uniform01(rng) < 0.2 ? 1 : 0);
    }
    const auto boot = nn::forward(params, rollout.bootstrap_observations).values;
    const auto out = nn::forward(params, rollout.observations);
    const auto report = losses::a2c_loss(rollout, out.logits, out.values, boot, alpha, beta);
    const auto grads = nn::backprop(params, out.cache, report.dlogits, report.dvalue);

    // Independent n-step targets, frozen along with the advantages.
    std::vector<double> target(n);
    for (std::size_t e = 0; e < rollout.n_envs; ++e) {
      for (std::size_t t = 0; t < rollout.n_steps; ++t) {
        double acc = 0.0, discount = 1.0;
        bool ended = false;
        for (std::size_t k = t; k < rollout.n_steps; ++k) {
          const std::size_t i = k * rollout.n_envs + e;
          acc += discount * rollout.rewards[i];
          discount *= rollout.gamma;
          if (rollout.dones[i]) {
            ended = true;
            break;
          }
        }
        if (!ended) acc += discount * boot[e];
        target[t * rollout.n_envs + e] = acc;
      }
    }
    std::vector<double> adv(n);
    for (std::size_t i = 0; i < n; ++i) adv[i] = target[i] - out.values[i];

    auto surrogate = [&](const nn::MlpParams& p) {
      const auto o = nn::forward(p, rollout.observations);
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto logp = nn::log_softmax(o.logits.row(i));
        double h = 0.0;
        for (double lp : logp) h -= std::exp(lp) * lp;
        const double err = o.values[i] - target[i];
        total += -logp[static_cast<std::size_t>(rollout.actions[i])] * adv[i] - alpha * h + beta * 0.5 * err * err;
      }
      return total / static_cast<double>(n);
    };
    surrogate_gap = std::max(surrogate_gap, std::abs(surrogate(params) - report.total));
    c.value = std::max(c.value, fd_compare(params, grads.values, surrogate));
  }
  c.passed = c.value <= c.tolerance && surrogate_gap <= 1e-12;
  c.detail = std::to_string(draws) + " draws, loss-value mismatch " + fmt_g(surrogate_gap);
  return c;
}

Check lower_bound_q_gradient_check(Rng& rng, std::size_t draws) {
  Check c{1, "loss-gradients lower-bound-q", false, false, 0.0, 1e-4, {}, 0.0};
  for (std::size_t d = 0; d < draws; ++d) {
    const std::size_t n = 16;
    std::vector<double> q(n), r(n);
    for (std::size_t i = 0; i < n; ++i) {
      q[i] = uniform(rng, -3.0, 3.0);
      r[i] = away_from_kink(rng, q[i]);
    }
    const auto analytic = losses::lower_bound_q_loss(q, r);
    for (std::size_t i = 0; i < n; ++i) {
      const double saved = q[i];
      q[i] = saved + kFdStep;
      const double up = losses::lower_bound_q_loss(q, r).loss;
      q[i] = saved - kFdStep;
      const double down = losses::lower_bound_q_loss(q, r).loss;
      q[i] = saved;
      // dq is per summand; the loss is the mean.
      const double a = analytic.dq[i] / static_cast<double>(n);
      c.value = std::max(c.value, rel_error(a, (up - down) / (2.0 * kFdStep)));
    }
  }
  c.passed = c.value <= c.tolerance;
  c.detail = std::to_string(draws) + " draws";
  return c;
}

std::size_t random_start(const oracle::TabularMdp& mdp, Rng& rng) {
  for (;;) {
    const std::size_t s = uniform_index(rng, mdp.n_states());
    if (!mdp.terminal(s)) return s;
  }
}

std::string alpha_label(double alpha) { return "alpha=" + fmt_g(alpha); }

}  // namespace

std::vector<Check> check_loss_gradients(const Options& options) {
  Rng rng = make_rng(options.seed, 1);
  const std::size_t draws = options.quick ? 10 : 25;
  return {sil_gradient_check(rng, draws), a2c_gradient_check(rng, draws), lower_bound_q_gradient_check(rng, draws)};
}

std::vector<Check> check_lower_bound(const Options& options) {
  const std::size_t n_mdps = options.quick ? 20 : 100;
  const std::size_t n_traj = options.quick ? 20 : 50;
  std::vector<Check> checks;
  std::uint64_t stream = 200;
  for (double alpha : {0.0, 0.1, 1.0}) {
    Rng rng = make_rng(options.seed, stream++);
    Check sample{2, "lower-bound per-trajectory " + alpha_label(alpha), false, false, -1e300, 1e-9, {}, 0.0};
    Check expect{2, "lower-bound expectation " + alpha_label(alpha), false, true, -1e300, 1e-9, {}, 0.0};
    Check tight{2, "lower-bound tight at mu=pi* " + alpha_label(alpha), false, true, 0.0, 1e-9, {}, 0.0};
    std::size_t checked = 0, violations = 0;
    std::string counterexample;
    for (std::size_t m = 0; m < n_mdps; ++m) {
      const auto mdp = oracle::random_mdp(rng, {});
      const auto sol = oracle::soft_value_iteration(mdp, alpha, 1e-13);
      const auto mu = oracle::random_policy(mdp, rng);

      std::vector<oracle::BehaviorTrajectory> trajs;
      for (std::size_t j = 0; j < n_traj; ++j)
        trajs.push_back(oracle::sample_trajectory(mdp, mu, random_start(mdp, rng), rng, 200));
      const auto report = oracle::verify_lower_bound(mdp, sol, trajs, alpha, 1e-9);
      checked += report.checked;
      sample.value = std::max(sample.value, report.max_excess);
      if (report.violations > 0 && violations == 0) counterexample = "mdp " + std::to_string(m) + " " + report.counterexample;
      violations += report.violations;

      // Exact mu-expectation of the same return.
      const auto q_mu = oracle::soft_policy_evaluation(mdp, mu, alpha);
      for (std::size_t s = 0; s < mdp.n_states(); ++s)
        if (!mdp.terminal(s))
          for (std::size_t a = 0; a < mdp.n_actions(); ++a)
            expect.value = std::max(expect.value, q_mu[mdp.index(s, a)] - sol.q_at(s, a));

      // With mu = pi* every trajectory attains Q* exactly.
      if (alpha > 0.0) {
        for (std::size_t j = 0; j < 5; ++j) {
          const auto traj = oracle::sample_trajectory(mdp, sol.pi, random_start(mdp, rng), rng, 200);
          const auto r = oracle::entropy_regularized_return(traj, alpha, mdp.gamma());
          // Late steps of a capped trajectory miss their tail; compare the first.
          if (traj.steps.size() < 200 && !r.empty())
            tight.value = std::max(tight.value, std::abs(r[0] - sol.q_at(traj.steps[0].state, traj.steps[0].action)));
        }
      }
    }
    sample.passed = violations == 0;
    sample.detail = std::to_string(violations) + " violations in " + std::to_string(checked) + " visited pairs";
    if (!counterexample.empty()) sample.detail += "; first: " + counterexample;
    checks.push_back(sample);

    expect.passed = expect.value <= expect.tolerance;
    expect.detail = "max Q^mu - Q* over all pairs";
    checks.push_back(expect);
    if (alpha > 0.0) {
      tight.passed = tight.value <= tight.tolerance;
      tight.detail = "max |R_0 - Q*|";
      checks.push_back(tight);
    }
  }
  return checks;
}

std::vector<Check> check_grad_equivalence(const Options& options) {
  const std::size_t instances = options.quick ? 100 : 1000;
  std::vector<Check> checks;
  std::uint64_t stream = 300;
  for (double alpha : {0.1, 1.0, 10.0}) {
    Rng rng = make_rng(options.seed, stream++);
    Check c{3, "grad-equivalence " + alpha_label(alpha), false, false, 0.0, 1e-8, {}, 0.0};
    std::size_t clipped = 0, total = 0;
    for (std::size_t k = 0; k < instances; ++k) {
      const std::size_t ns = 1 + uniform_index(rng, 10);
      const std::size_t na = 4;
      std::vector<double> q(ns * na);
      for (double& v : q) v = uniform(rng, -5.0, 5.0);
      std::vector<oracle::GradSample> samples(16);
      for (auto& smp : samples) {
        smp.state = uniform_index(rng, ns);
        smp.action = uniform_index(rng, na);
        smp.ret = q[smp.state * na + smp.action] + uniform(rng, -3.0, 3.0);
        clipped += smp.ret <= q[smp.state * na + smp.action];
        ++total;
      }
      c.value = std::max(c.value, oracle::grad_equivalence_check(q, na, samples, alpha).max_deviation);
    }
    c.passed = c.value <= c.tolerance;
    c.detail = std::to_string(instances) + " instances, " + std::to_string(clipped) + "/" + std::to_string(total) +
               " samples in the clip region";
    checks.push_back(c);
  }
  return checks;
}

std::vector<Check> check_alpha_limit(const Options& options) {
  const std::size_t instances = options.quick ? 20 : 100;
  Rng rng = make_rng(options.seed, 400);
  Check c{4, "alpha->0 gap monotone", false, false, 0.0, 0.0, {}, 0.0};
  const double alphas[] = {1e-1, 1e-2, 1e-3};
  std::size_t failures = 0;
  double worst_ratio = 1e300;
  for (std::size_t k = 0; k < instances; ++k) {
    const std::size_t n = 64;
    std::vector<double> log_pi(n), v(n), r(n);
    for (std::size_t i = 0; i < n; ++i) {
      log_pi[i] = std::log(uniform(rng, 1e-3, 1.0));
      v[i] = uniform(rng, -1.0, 1.0);
      r[i] = v[i] + uniform(rng, -0.5, 2.0);
    }
    double previous = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
      const double gap = oracle::lb_sil_gap(log_pi, v, r, alphas[j]).total();
      if (j > 0) {
        if (!(gap < previous)) ++failures;
        worst_ratio = std::min(worst_ratio, previous / gap);
      }
      previous = gap;
    }
  }
  c.value = static_cast<double>(failures);
  c.passed = failures == 0;
  c.detail = std::to_string(instances) + " instances, smallest successive gap ratio " + fmt_g(worst_ratio);
  return {c};
}

std::vector<Check> check_lb_q_learning(const Options& options) {
  const std::size_t n_mdps = options.quick ? 5 : 20;
  constexpr std::size_t kConvergedVisits = 25;
  std::vector<Check> checks;
  std::uint64_t stream = 500;

  struct Run {
    double alpha;
    bool optimal_behaviour;
  };
  for (const Run run : {Run{0.0, false}, Run{0.1, true}, Run{1.0, true}}) {
    Rng rng = make_rng(options.seed, stream++);
    const std::string label = alpha_label(run.alpha) + (run.optimal_behaviour ? " mu=pi*" : " mu=random");
    Check mono{5, "lb-q non-decreasing " + label, false, false, 0.0, 0.0, {}, 0.0};
    Check bound{5, "lb-q below Q* " + label, false, false, -1e300, 1e-6, {}, 0.0};
    Check conv{5, "lb-q converges on visited pairs " + label, false, false, 0.0, 1e-4, {}, 0.0};
    std::size_t decreases = 0, converged_pairs = 0;
    for (std::size_t m = 0; m < n_mdps; ++m) {
      const auto mdp = oracle::random_mdp(rng, {});
      const auto sol = oracle::soft_value_iteration(mdp, run.alpha, 1e-13);
      const auto mu = run.optimal_behaviour ? sol.pi : oracle::random_policy(mdp, rng, 0.05);
      // Rewards lie in [-1, 1] and entropy bonuses are non-negative, so this
      // sits strictly below every Q*.
      const double floor = -1.0 / (1.0 - mdp.gamma()) - 1.0;
      const std::vector<double> q0(mdp.n_states() * mdp.n_actions(), floor);
      oracle::LbQOptions lb;
      lb.alpha = run.alpha;
      lb.n_updates = options.quick ? 20000 : 50000;
      lb.flip_clip = options.inject_clip_bug;
      const auto trace = oracle::tabular_lb_q_learning(mdp, mu, q0, lb, rng);

      std::vector<std::size_t> visits(q0.size(), 0);
      for (const auto& u : trace.updates) {
        const std::size_t i = mdp.index(u.state, u.action);
        ++visits[i];
        if (u.after < u.before) {
          ++decreases;
          mono.value = std::max(mono.value, u.before - u.after);
        }
        bound.value = std::max(bound.value, u.after - sol.q[i]);
      }
      if (run.optimal_behaviour) {
        for (std::size_t i = 0; i < visits.size(); ++i) {
          if (visits[i] < kConvergedVisits) continue;
          ++converged_pairs;
          conv.value = std::max(conv.value, std::abs(trace.final_q[i] - sol.q[i]));
        }
      }
    }
    mono.passed = decreases == 0;
    mono.detail = std::to_string(decreases) + " decreasing updates over " + std::to_string(n_mdps) + " MDPs";
    bound.passed = bound.value <= bound.tolerance;
    bound.detail = "max Q - Q* along the trace";
    checks.push_back(mono);
    checks.push_back(bound);
    if (run.optimal_behaviour) {
      conv.passed = converged_pairs > 0 && conv.value <= conv.tolerance;
      conv.detail = std::to_string(converged_pairs) + " pairs with >= " + std::to_string(kConvergedVisits) + " visits";
      checks.push_back(conv);
    }
  }
  return checks;
}

std::vector<Check> check_prioritized_sampling(const Options& options) {
  Rng rng = make_rng(options.seed, 600);
  std::vector<Check> checks;

  {
    Check c{6, "prioritized frequencies", false, false, 0.0, 0.01, {}, 0.0};
    const std::size_t draws = options.quick ? 200000 : 1000000;
    const std::size_t batch = 64;
    replay::PrioritizedConfig cfg{32, 0.6, 0.1, 1e-6};
    replay::PrioritizedBuffer buffer(cfg, 1);
    const std::size_t n = 12;
    std::vector<double> adv(n);
    for (std::size_t i = 0; i < n; ++i) {
      replay::ReplayEntry e{{static_cast<double>(i)}, 0, uniform(rng, 0.5, 3.0)};
      adv[i] = e.ret;
      buffer.push(e, 0.0);
    }
    auto compare = [&](const std::vector<double>& advantages) {
      std::vector<double> expected(n);
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) total += expected[i] = std::pow(advantages[i] + cfg.epsilon, cfg.exponent);
      for (double& p : expected) p /= total;
      std::vector<std::size_t> counts(cfg.capacity, 0);
      for (std::size_t d = 0; d < draws; d += batch)
        for (const auto& h : buffer.sample(batch, rng).handles) ++counts[h.slot];
      double worst = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t slot = buffer.slot_of(i);
        const double freq = static_cast<double>(counts[slot]) / static_cast<double>(draws / batch * batch);
        worst = std::max(worst, std::abs(freq - expected[i]) / expected[i]);
      }
      return worst;
    };
    c.value = compare(adv);

    // Refresh priorities and sample again.
    std::vector<replay::SampleHandle> handles;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t slot = buffer.slot_of(i);
      handles.push_back({slot, buffer.serial(slot)});
      adv[i] = uniform(rng, 0.5, 3.0);
    }
    buffer.update_priorities(handles, adv);
    c.value = std::max(c.value, compare(adv));
    c.passed = c.value <= c.tolerance;
    c.detail = std::to_string(draws) + " draws per phase, max relative frequency error";
    checks.push_back(c);
  }

  {
    Check c{6, "sum-tree invariant", false, false, 0.0, 1e-9, {}, 0.0};
    const std::size_t sequences = options.quick ? 10000 : 100000;
    std::size_t bad_find = 0;
    for (std::size_t k = 0; k < sequences; ++k) {
      const std::size_t capacity = 1 + uniform_index(rng, 50);
      replay::SumTree tree(capacity);
      std::vector<double> leaves(capacity, 0.0);
      const std::size_t ops = 1 + uniform_index(rng, 30);
      for (std::size_t o = 0; o < ops; ++o) {
        const std::size_t leaf = uniform_index(rng, capacity);
        const double v = uniform01(rng) < 0.2 ? 0.0 : uniform(rng, 0.0, 10.0);
        tree.set(leaf, v);
        leaves[leaf] = v;
      }
      double total = 0.0;
      for (double v : leaves) total += v;
      c.value = std::max(c.value, tree.max_relative_defect());
      c.value = std::max(c.value, std::abs(tree.total() - total) / std::max(total, 1.0));
      if (total <= 0.0) continue;
      for (int probe = 0; probe < 4; ++probe) {
        const double mass = uniform01(rng) * tree.total();
        const std::size_t j = tree.find(mass);
        double lo = 0.0;
        for (std::size_t i = 0; i < j && i < capacity; ++i) lo += leaves[i];
        const double slack = 1e-9 * total;
        if (j >= capacity || leaves[j] <= 0.0 || mass < lo - slack || mass > lo + leaves[j] + slack) ++bad_find;
      }
    }
    c.passed = c.value <= c.tolerance && bad_find == 0;
    c.detail = std::to_string(sequences) + " op sequences, " + std::to_string(bad_find) + " misrouted finds";
    checks.push_back(c);
  }
  return checks;
}

std::vector<Check> check_sil_clip(const Options& options) {
  Rng rng = make_rng(options.seed, 700);
  Check zero{7, "sil clip zero gradient", false, false, 0.0, 0.0, {}, 0.0};
  Check mask{7, "sil clip signal mask", false, false, 0.0, 0.0, {}, 0.0};
  const std::size_t draws = options.quick ? 10 : 50;
  std::size_t mask_errors = 0;
  for (std::size_t d = 0; d < draws; ++d) {
    auto params = probe_params(rng);
    const std::size_t n = 16;
    losses::SilBatch batch;
    batch.observations = random_obs(rng, n, kProbeShape.input_dim);
    const auto out = nn::forward(params, batch.observations);
    for (std::size_t i = 0; i < n; ++i) {
      batch.actions.push_back(static_cast<int>(uniform_index(rng, kProbeShape.action_count)));
      // A quarter sit exactly on R == V.
      batch.returns.push_back(i % 4 == 0 ? out.values[i] : out.values[i] - uniform(rng, 1e-9, 2.0));
      batch.weights.push_back(uniform(rng, 0.2, 1.0));
    }
    const auto report = losses::sil_loss(batch, out.logits, out.values);
    const auto grads = nn::backprop(params, out.cache, report.dlogits, report.dvalue);
    for (double g : grads.values) zero.value = std::max(zero.value, std::abs(g));
    if (report.total != 0.0) zero.value = std::max(zero.value, std::abs(report.total));

    // Mixed batch: signal rows must coincide with R > V.
    for (std::size_t i = 0; i < n; i += 2) batch.returns[i] = out.values[i] + uniform(rng, 0.1, 2.0);
    const auto mixed = losses::sil_loss(batch, out.logits, out.values);
    for (std::size_t i = 0; i < n; ++i) {
      bool signal = mixed.dvalue[i] != 0.0;
      for (double g : mixed.dlogits.row(i)) signal = signal || g != 0.0;
      const bool valid = batch.returns[i] > out.values[i];
      if (signal != valid || (mixed.valid[i] != 0) != valid) ++mask_errors;
    }
  }
  zero.passed = zero.value == 0.0;
  zero.detail = std::to_string(draws) + " batches with R <= V, max |grad|";
  mask.value = static_cast<double>(mask_errors);
  mask.passed = mask_errors == 0;
  mask.detail = std::to_string(mask_errors) + " rows whose signal disagrees with R > V";
  return {zero, mask};
}

bool Report::criterion_passed(int criterion) const {
  bool any = false;
  for (const auto& c : checks) {
    if (c.criterion != criterion || c.informational) continue;
    any = true;
    if (!c.passed) return false;
  }
  return any;
}

bool Report::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed || c.informational; });
}

Report run_all(const Options& options, const Progress& progress) {
  using Suite = std::vector<Check> (*)(const Options&);
  const Suite suites[] = {check_loss_gradients, check_lower_bound,          check_grad_equivalence, check_alpha_limit,
                          check_lb_q_learning,  check_prioritized_sampling, check_sil_clip};
  Report report;
  const auto start = Clock::now();
  for (const auto suite : suites) {
    const auto begin = Clock::now();
    auto checks = suite(options);
    const double seconds = elapsed(begin);
    for (auto& c : checks) {
      c.seconds = seconds / static_cast<double>(checks.size());
      if (progress) progress(c);
      report.checks.push_back(std::move(c));
    }
  }
  report.seconds = elapsed(start);
  return report;
}

std::string format_check(const Check& c) {
  char head[160];
  std::snprintf(head, sizeof head, "[%s] %d %-48s value=%-10s tol=%-8s", c.passed ? "PASS" : (c.informational ? "INFO" : "FAIL"),
                c.criterion, c.name.c_str(), fmt_g(c.value).c_str(), fmt_g(c.tolerance).c_str());
  std::string line = head;
  if (c.informational && !c.passed) line += " (informational)";
  if (!c.detail.empty()) line += "  " + c.detail;
  return line;
}

}  // namespace sil::verify
