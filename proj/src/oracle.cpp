#include "sil/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "sil/error.hpp"
#include "sil/losses.hpp"

namespace sil::oracle {

TabularMdp::TabularMdp(std::size_t n_states, std::size_t n_actions, double gamma)
    : n_states_(n_states),
      n_actions_(n_actions),
      gamma_(gamma),
      transitions_(n_states * n_actions),
      reward_(n_states * n_actions, 0.0),
      terminal_(n_states, false) {
  if (n_states == 0 || n_actions == 0) throw ConfigError("MDP needs at least one state and one action");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
}

void TabularMdp::set_transition(std::size_t s, std::size_t a, std::vector<Successor> successors) {
  transitions_[index(s, a)] = std::move(successors);
}

bool TabularMdp::deterministic() const {
  for (std::size_t s = 0; s < n_states_; ++s) {
    if (terminal_[s]) continue;
    for (std::size_t a = 0; a < n_actions_; ++a) {
      const auto& succ = transitions_[index(s, a)];
      if (succ.size() != 1 || succ[0].prob != 1.0) return false;
    }
  }
  return true;
}

void TabularMdp::validate() const {
  for (std::size_t s = 0; s < n_states_; ++s) {
    if (terminal_[s]) continue;
    for (std::size_t a = 0; a < n_actions_; ++a) {
      double total = 0.0;
      for (const auto& succ : transitions_[index(s, a)]) {
        if (succ.state >= n_states_) throw ConfigError("successor state out of range");
        if (succ.prob < 0.0) throw ConfigError("negative transition probability");
        total += succ.prob;
      }
      if (std::abs(total - 1.0) > 1e-12)
        throw ConfigError("transition probabilities of (" + std::to_string(s) + ", " + std::to_string(a) +
                          ") sum to " + std::to_string(total));
    }
  }
}

double soft_max(std::span<const double> x, double alpha) {
  const double m = *std::max_element(x.begin(), x.end());
  if (alpha == 0.0) return m;
  double s = 0.0;
  for (double xi : x) s += std::exp((xi - m) / alpha);
  return m + alpha * std::log(s);
}

namespace {

double expected_next(const TabularMdp& mdp, std::size_t s, std::size_t a, std::span<const double> v) {
  double e = 0.0;
  for (const auto& succ : mdp.successors(s, a)) e += succ.prob * v[succ.state];
  return e;
}

}  // namespace

SoftSolution soft_value_iteration(const TabularMdp& mdp, double alpha, double tol, std::size_t max_iters) {
  if (alpha < 0.0) throw ConfigError("alpha must be non-negative");
  mdp.validate();
  const std::size_t ns = mdp.n_states();
  const std::size_t na = mdp.n_actions();

  SoftSolution sol;
  sol.n_actions = na;
  sol.alpha = alpha;
  sol.q.assign(ns * na, 0.0);
  sol.v.assign(ns, 0.0);
  sol.pi.assign(ns * na, 0.0);

  std::vector<double> next_v(ns, 0.0);
  for (std::size_t it = 1; it <= max_iters; ++it) {
    double change = 0.0;
    for (std::size_t s = 0; s < ns; ++s) {
      if (mdp.terminal(s)) continue;
      for (std::size_t a = 0; a < na; ++a)
        sol.q[s * na + a] = mdp.reward(s, a) + mdp.gamma() * expected_next(mdp, s, a, sol.v);
      next_v[s] = soft_max(std::span(sol.q).subspan(s * na, na), alpha);
      change = std::max(change, std::abs(next_v[s] - sol.v[s]));
    }
    sol.v.swap(next_v);
    sol.iterations = it;
    sol.residual = change;
    if (change < tol) break;
    if (it == max_iters) {
      throw NumericError("soft value iteration did not converge in " + std::to_string(max_iters) +
                         " iterations (residual " + std::to_string(change) + ")");
    }
  }

  // Q consistent with the final V.
  for (std::size_t s = 0; s < ns; ++s) {
    if (mdp.terminal(s)) continue;
    for (std::size_t a = 0; a < na; ++a)
      sol.q[s * na + a] = mdp.reward(s, a) + mdp.gamma() * expected_next(mdp, s, a, sol.v);
    sol.v[s] = soft_max(std::span(sol.q).subspan(s * na, na), alpha);
  }

  for (std::size_t s = 0; s < ns; ++s) {
    auto pi = std::span(sol.pi).subspan(s * na, na);
    const auto q = std::span<const double>(sol.q).subspan(s * na, na);
    if (alpha > 0.0) {
      for (std::size_t a = 0; a < na; ++a) pi[a] = std::exp((q[a] - sol.v[s]) / alpha);
    } else {
      const double best = *std::max_element(q.begin(), q.end());
      std::size_t ties = 0;
      for (double x : q) ties += (best - x <= 1e-12) ? 1 : 0;
      for (std::size_t a = 0; a < na; ++a) pi[a] = (best - q[a] <= 1e-12) ? 1.0 / static_cast<double>(ties) : 0.0;
    }
  }
  return sol;
}

std::vector<double> hard_value_iteration(const TabularMdp& mdp, double tol, std::size_t max_iters) {
  mdp.validate();
  const std::size_t ns = mdp.n_states();
  const std::size_t na = mdp.n_actions();
  std::vector<double> q(ns * na, 0.0);
  std::vector<double> next(ns * na, 0.0);
  auto best = [&](const std::vector<double>& table, std::size_t s) {
    if (mdp.terminal(s)) return 0.0;
    double m = table[s * na];
    for (std::size_t a = 1; a < na; ++a) m = std::max(m, table[s * na + a]);
    return m;
  };
  for (std::size_t it = 0; it < max_iters; ++it) {
    double change = 0.0;
    for (std::size_t s = 0; s < ns; ++s) {
      for (std::size_t a = 0; a < na; ++a) {
        double value = 0.0;
        if (!mdp.terminal(s)) {
          value = mdp.reward(s, a);
          for (const auto& succ : mdp.successors(s, a)) value += mdp.gamma() * succ.prob * best(q, succ.state);
        }
        change = std::max(change, std::abs(value - q[s * na + a]));
        next[s * na + a] = value;
      }
    }
    q.swap(next);
    if (change < tol) return q;
  }
  throw NumericError("hard value iteration did not converge");
}

std::vector<double> entropy_regularized_return(const BehaviorTrajectory& traj, double alpha, double gamma) {
  const std::size_t n = traj.steps.size();
  std::vector<double> out(n);
  // tail = sum_{k>t} gamma^(k-t-1) (r_k + alpha H_k)
  double tail = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const auto& step = traj.steps[t];
    out[t] = step.reward + gamma * tail;
    const double p = traj.mu.at(step.state * traj.n_actions + step.action);
    if (!(p > 0.0)) {
      throw NumericError("behaviour policy gives zero probability to action " + std::to_string(step.action) +
                         " in state " + std::to_string(step.state));
    }
    const double entropy = alpha == 0.0 ? 0.0 : -std::log(p);
    tail = step.reward + alpha * entropy + gamma * tail;
  }
  return out;
}

namespace {

std::size_t sample_index(std::span<const double> probs, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  for (std::size_t i = probs.size(); i-- > 0;)
    if (probs[i] > 0.0) return i;
  return probs.size() - 1;
}

}  // namespace

BehaviorTrajectory sample_trajectory(const TabularMdp& mdp, std::span<const double> mu, std::size_t start, Rng& rng,
                                     std::size_t max_steps, std::optional<std::size_t> first_action) {
  const std::size_t na = mdp.n_actions();
  BehaviorTrajectory traj;
  traj.mu.assign(mu.begin(), mu.end());
  traj.n_actions = na;
  std::size_t s = start;
  for (std::size_t t = 0; t < max_steps && !mdp.terminal(s); ++t) {
    const std::size_t a = (t == 0 && first_action) ? *first_action : sample_index(mu.subspan(s * na, na), rng);
    traj.steps.push_back({s, a, mdp.reward(s, a)});
    const auto& succ = mdp.successors(s, a);
    if (succ.size() == 1) {
      s = succ[0].state;
    } else {
      std::vector<double> probs;
      for (const auto& x : succ) probs.push_back(x.prob);
      s = succ[sample_index(probs, rng)].state;
    }
  }
  return traj;
}

std::vector<double> uniform_policy(const TabularMdp& mdp) {
  return std::vector<double>(mdp.n_states() * mdp.n_actions(), 1.0 / static_cast<double>(mdp.n_actions()));
}

std::vector<double> random_policy(const TabularMdp& mdp, Rng& rng, double floor) {
  const std::size_t na = mdp.n_actions();
  std::vector<double> mu(mdp.n_states() * na);
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    double total = 0.0;
    for (std::size_t a = 0; a < na; ++a) {
      mu[s * na + a] = floor + uniform01(rng);
      total += mu[s * na + a];
    }
    for (std::size_t a = 0; a < na; ++a) mu[s * na + a] /= total;
  }
  return mu;
}

TabularMdp random_mdp(Rng& rng, const RandomMdpOptions& options) {
  const std::size_t ns = 2 + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(options.max_states - 1));
  const std::size_t na = options.n_actions;
  TabularMdp mdp(std::min(ns, options.max_states), na, options.gamma);
  const std::size_t n = mdp.n_states();
  // The last state is always terminal; others join with the given share,
  // state 0 never does.
  mdp.set_terminal(n - 1);
  for (std::size_t s = 1; s + 1 < n; ++s)
    if (uniform01(rng) < options.terminal_fraction) mdp.set_terminal(s);

  auto pick_state = [&] { return std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n))); };
  for (std::size_t s = 0; s < n; ++s) {
    if (mdp.terminal(s)) continue;
    for (std::size_t a = 0; a < na; ++a) {
      mdp.set_reward(s, a, 2.0 * uniform01(rng) - 1.0);
      if (options.deterministic) {
        mdp.set_transition(s, a, {{pick_state(), 1.0}});
      } else {
        const std::size_t k = 1 + static_cast<std::size_t>(uniform01(rng) * 3.0);
        std::map<std::size_t, double> weights;
        double total = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
          const double w = 0.1 + uniform01(rng);
          weights[pick_state()] += w;
          total += w;
        }
        std::vector<Successor> succ;
        double assigned = 0.0;
        for (auto it = weights.begin(); it != weights.end(); ++it) {
          const double p = std::next(it) == weights.end() ? 1.0 - assigned : it->second / total;
          assigned += p;
          succ.push_back({it->first, p});
        }
        mdp.set_transition(s, a, std::move(succ));
      }
    }
  }
  return mdp;
}

LowerBoundReport verify_lower_bound(const TabularMdp& mdp, const SoftSolution& solution,
                                    std::span<const BehaviorTrajectory> trajectories, double alpha, double tol) {
  LowerBoundReport report;
  report.expectation_mode = !mdp.deterministic();
  const std::size_t na = mdp.n_actions();

  if (!report.expectation_mode) {
    for (std::size_t j = 0; j < trajectories.size(); ++j) {
      const auto& traj = trajectories[j];
      const auto returns = entropy_regularized_return(traj, alpha, mdp.gamma());
      for (std::size_t t = 0; t < returns.size(); ++t) {
        const auto& step = traj.steps[t];
        const double excess = returns[t] - solution.q_at(step.state, step.action);
        ++report.checked;
        report.max_excess = std::max(report.max_excess, excess);
        if (excess > tol) {
          if (report.violations++ == 0) {
            std::ostringstream os;
            os.precision(17);
            os << "trajectory " << j << " step " << t << ": s=" << step.state << " a=" << step.action
               << " R=" << returns[t] << " Q*=" << solution.q_at(step.state, step.action) << " excess=" << excess;
            report.counterexample = os.str();
          }
        }
      }
    }
    return report;
  }

  std::vector<double> sum(mdp.n_states() * na, 0.0), sum_sq(mdp.n_states() * na, 0.0);
  std::vector<std::size_t> count(mdp.n_states() * na, 0);
  for (const auto& traj : trajectories) {
    const auto returns = entropy_regularized_return(traj, alpha, mdp.gamma());
    for (std::size_t t = 0; t < returns.size(); ++t) {
      const std::size_t i = traj.steps[t].state * na + traj.steps[t].action;
      sum[i] += returns[t];
      sum_sq[i] += returns[t] * returns[t];
      ++count[i];
    }
  }
  for (std::size_t i = 0; i < count.size(); ++i) {
    if (count[i] < 2) continue;
    const double n = static_cast<double>(count[i]);
    const double mean = sum[i] / n;
    const double var = std::max(0.0, (sum_sq[i] - n * mean * mean) / (n - 1.0));
    const double margin = 3.0 * std::sqrt(var / n) + tol;
    const double excess = mean - solution.q[i];
    ++report.checked;
    report.max_excess = std::max(report.max_excess, excess);
    if (excess > margin && report.violations++ == 0) {
      std::ostringstream os;
      os.precision(17);
      os << "pair " << i << ": mean R=" << mean << " Q*=" << solution.q[i] << " margin=" << margin;
      report.counterexample = os.str();
    }
  }
  return report;
}

std::vector<double> soft_policy_evaluation(const TabularMdp& mdp, std::span<const double> mu, double alpha,
                                           double tol, std::size_t max_iters) {
  const std::size_t ns = mdp.n_states();
  const std::size_t na = mdp.n_actions();
  std::vector<double> q(ns * na, 0.0);
  std::vector<double> v(ns, 0.0);
  for (std::size_t it = 0; it < max_iters; ++it) {
    for (std::size_t s = 0; s < ns; ++s)
      if (!mdp.terminal(s))
        for (std::size_t a = 0; a < na; ++a) q[s * na + a] = mdp.reward(s, a) + mdp.gamma() * expected_next(mdp, s, a, v);
    double change = 0.0;
    for (std::size_t s = 0; s < ns; ++s) {
      if (mdp.terminal(s)) continue;
      double value = 0.0;
      for (std::size_t a = 0; a < na; ++a) {
        const double p = mu[s * na + a];
        if (p > 0.0) value += p * (q[s * na + a] - alpha * std::log(p));
      }
      change = std::max(change, std::abs(value - v[s]));
      v[s] = value;
    }
    if (change < tol) return q;
  }
  throw NumericError("soft policy evaluation did not converge");
}

LbQTrace tabular_lb_q_learning(const TabularMdp& mdp, std::span<const double> mu, std::span<const double> q_init,
                               const LbQOptions& options, Rng& rng) {
  const std::size_t na = mdp.n_actions();
  LbQTrace trace;
  trace.initial.assign(q_init.begin(), q_init.end());
  trace.final_q = trace.initial;
  trace.visited.assign(trace.final_q.size(), 0);
  trace.updates.reserve(options.n_updates);

  auto& q = trace.final_q;
  while (trace.updates.size() < options.n_updates) {
    const auto traj = sample_trajectory(mdp, mu, options.start_state, rng, options.max_episode_steps);
    if (traj.steps.empty()) break;
    const auto returns = entropy_regularized_return(traj, options.alpha, mdp.gamma());
    for (std::size_t t = 0; t < traj.steps.size() && trace.updates.size() < options.n_updates; ++t) {
      const std::size_t i = traj.steps[t].state * na + traj.steps[t].action;
      const double before = q[i];
      double dq;
      if (options.flip_clip) {
        dq = -std::min(returns[t] - before, 0.0);
      } else {
        const double qi[] = {before};
        const double ri[] = {returns[t]};
        dq = losses::lower_bound_q_loss(qi, ri).dq[0];
      }
      q[i] = before - options.lr * dq;
      trace.visited[i] = 1;
      trace.updates.push_back({traj.steps[t].state, traj.steps[t].action, before, q[i]});
    }
  }
  return trace;
}

GradEquivalence grad_equivalence_check(std::span<const double> q_table, std::size_t n_actions,
                                       std::span<const GradSample> samples, double alpha) {
  if (!(alpha > 0.0)) throw ConfigError("gradient decomposition needs alpha > 0");
  GradEquivalence out;
  out.direct.assign(q_table.size(), 0.0);
  out.decomposed.assign(q_table.size(), 0.0);
  if (samples.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(samples.size());

  for (const auto& smp : samples) {
    const auto row = q_table.subspan(smp.state * n_actions, n_actions);
    const double q_sa = row[smp.action];

    // (a) d/dQ of 0.5 (R - Q(s,a))_+^2 touches only Q(s,a).
    const double delta_direct = std::max(smp.ret - q_sa, 0.0);
    out.direct[smp.state * n_actions + smp.action] += -delta_direct * inv_n;

    // (b) actor-critic form: V = soft_max(Q(s,.)), log pi = (Q - V) / alpha.
    const double v = soft_max(row, alpha);
    std::vector<double> pi(n_actions);
    for (std::size_t b = 0; b < n_actions; ++b) pi[b] = std::exp((row[b] - v) / alpha);
    const double log_pi_a = (q_sa - v) / alpha;
    const double r_hat = smp.ret - alpha * log_pi_a;
    const double weight = std::max(r_hat - v, 0.0);  // constant in both terms
    // dV/dQ(s,b) = pi_b ; d log pi_a / dQ(s,b) = (1[a=b] - pi_b) / alpha
    for (std::size_t b = 0; b < n_actions; ++b) {
      const double dlogpi = ((b == smp.action ? 1.0 : 0.0) - pi[b]) / alpha;
      const double grad_policy = -dlogpi * weight;  // grad of L_policy = -log pi * weight
      const double grad_value = -weight * pi[b];    // grad of 0.5 (R_hat - V)_+^2
      out.decomposed[smp.state * n_actions + b] += (alpha * grad_policy + grad_value) * inv_n;
    }
  }
  for (std::size_t i = 0; i < q_table.size(); ++i)
    out.max_deviation = std::max(out.max_deviation, std::abs(out.direct[i] - out.decomposed[i]));
  return out;
}

LossGap lb_sil_gap(std::span<const double> log_pi, std::span<const double> values, std::span<const double> returns,
                   double alpha) {
  LossGap gap;
  const std::size_t n = log_pi.size();
  if (n == 0) return gap;
  for (std::size_t i = 0; i < n; ++i) {
    const double r_hat = returns[i] - alpha * log_pi[i];
    const double lb_adv = std::max(r_hat - values[i], 0.0);
    const double sil_adv = std::max(returns[i] - values[i], 0.0);
    gap.policy += std::abs(-log_pi[i] * lb_adv - (-log_pi[i] * sil_adv));
    gap.value += std::abs(0.5 * lb_adv * lb_adv - 0.5 * sil_adv * sil_adv);
  }
  gap.policy /= static_cast<double>(n);
  gap.value /= static_cast<double>(n);
  return gap;
}

}  // namespace sil::oracle
