#pragma once

// Tabular entropy-regularized RL: soft value iteration, entropy-regularized
// returns of behaviour trajectories, the lower-bound relation between those
// returns and the optimal soft Q-values, tabular lower-bound soft
// Q-learning, and the actor-critic decomposition of its gradient.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sil/random.hpp"

namespace sil::oracle {

struct Successor {
  std::size_t state = 0;
  double prob = 1.0;
};

class TabularMdp {
 public:
  TabularMdp(std::size_t n_states, std::size_t n_actions, double gamma);

  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }
  double gamma() const { return gamma_; }

  void set_transition(std::size_t s, std::size_t a, std::vector<Successor> successors);
  void set_reward(std::size_t s, std::size_t a, double r) { reward_[index(s, a)] = r; }
  /// Terminal states are absorbing with value zero; no action is taken there.
  void set_terminal(std::size_t s, bool terminal = true) { terminal_[s] = terminal; }

  const std::vector<Successor>& successors(std::size_t s, std::size_t a) const { return transitions_[index(s, a)]; }
  double reward(std::size_t s, std::size_t a) const { return reward_[index(s, a)]; }
  bool terminal(std::size_t s) const { return terminal_[s]; }
  bool deterministic() const;

  /// Throws ConfigError unless every successor list is a distribution.
  void validate() const;

  std::size_t index(std::size_t s, std::size_t a) const { return s * n_actions_ + a; }

 private:
  std::size_t n_states_;
  std::size_t n_actions_;
  double gamma_;
  std::vector<std::vector<Successor>> transitions_;
  std::vector<double> reward_;
  std::vector<bool> terminal_;
};

/// Tables indexed [s * n_actions + a] / [s].
struct SoftSolution {
  std::size_t n_actions = 0;
  std::vector<double> q;
  std::vector<double> v;
  std::vector<double> pi;
  double alpha = 0.0;
  std::size_t iterations = 0;
  double residual = 0.0;

  double q_at(std::size_t s, std::size_t a) const { return q[s * n_actions + a]; }
  double pi_at(std::size_t s, std::size_t a) const { return pi[s * n_actions + a]; }
};

/// alpha * log sum exp(x / alpha); max(x) when alpha == 0.
double soft_max(std::span<const double> x, double alpha);

/// Iterates Q <- r + gamma * P V, V = soft_max(Q, alpha) until the sup-norm
/// change drops below tol. alpha == 0 gives the hard-max fixed point with pi
/// uniform over the maximizing actions. Throws NumericError with the
/// residual when max_iters is exhausted.
SoftSolution soft_value_iteration(const TabularMdp& mdp, double alpha, double tol = 1e-10,
                                  std::size_t max_iters = 100000);

/// Standard max-Bellman value iteration, written independently of the soft
/// solver. Returns Q.
std::vector<double> hard_value_iteration(const TabularMdp& mdp, double tol = 1e-12,
                                         std::size_t max_iters = 100000);

struct TrajectoryStep {
  std::size_t state = 0;
  std::size_t action = 0;
  double reward = 0.0;
};

struct BehaviorTrajectory {
  std::vector<TrajectoryStep> steps;
  std::vector<double> mu;  // behaviour policy table [s * n_actions + a]
  std::size_t n_actions = 0;
};

/// R_t = r_t + sum_{k>t} gamma^(k-t) (r_k - alpha * log mu(a_k|s_k)); the
/// entropy term of step t itself is excluded. Throws NumericError if the
/// trajectory contains an action mu gives zero probability.
std::vector<double> entropy_regularized_return(const BehaviorTrajectory& traj, double alpha, double gamma);

/// Rolls out mu from `start` (optionally forcing the first action) until a
/// terminal state or max_steps.
BehaviorTrajectory sample_trajectory(const TabularMdp& mdp, std::span<const double> mu, std::size_t start,
                                     Rng& rng, std::size_t max_steps,
                                     std::optional<std::size_t> first_action = std::nullopt);

std::vector<double> uniform_policy(const TabularMdp& mdp);
std::vector<double> random_policy(const TabularMdp& mdp, Rng& rng, double floor = 0.0);

struct RandomMdpOptions {
  std::size_t max_states = 10;
  std::size_t n_actions = 4;
  double gamma = 0.9;
  bool deterministic = true;
  double terminal_fraction = 0.2;  // share of states that are terminal (at least one)
};

TabularMdp random_mdp(Rng& rng, const RandomMdpOptions& options = {});

struct LowerBoundReport {
  std::size_t checked = 0;
  std::size_t violations = 0;
  double max_excess = -1e300;  // max over checks of R - Q*
  std::string counterexample;
  bool expectation_mode = false;
};

/// Deterministic MDPs: every visited (s_t, a_t) must satisfy
/// Q*(s_t, a_t) >= R_t - tol. Stochastic MDPs: the per-pair mean of R must
/// stay below Q* plus three standard errors (and tol).
LowerBoundReport verify_lower_bound(const TabularMdp& mdp, const SoftSolution& solution,
                                    std::span<const BehaviorTrajectory> trajectories, double alpha,
                                    double tol = 1e-9);

/// Exact mu-expected entropy-regularized Q of the behaviour policy (policy
/// evaluation of the soft Bellman equation under mu).
std::vector<double> soft_policy_evaluation(const TabularMdp& mdp, std::span<const double> mu, double alpha,
                                           double tol = 1e-12, std::size_t max_iters = 100000);

struct QUpdate {
  std::size_t state = 0;
  std::size_t action = 0;
  double before = 0.0;
  double after = 0.0;
};

struct LbQTrace {
  std::vector<double> initial;
  std::vector<double> final_q;
  std::vector<QUpdate> updates;
  std::vector<std::uint8_t> visited;  // per (s, a)
};

struct LbQOptions {
  double alpha = 0.0;
  double lr = 0.5;
  std::size_t n_updates = 20000;
  std::size_t max_episode_steps = 400;
  std::size_t start_state = 0;
  bool flip_clip = false;  // fault injection: regress on (R - Q)_- instead
};

/// SGD on 0.5 * (R - Q)_+^2 over returns of mu-trajectories.
LbQTrace tabular_lb_q_learning(const TabularMdp& mdp, std::span<const double> mu, std::span<const double> q_init,
                               const LbQOptions& options, Rng& rng);

struct GradSample {
  std::size_t state = 0;
  std::size_t action = 0;
  double ret = 0.0;
};

struct GradEquivalence {
  std::vector<double> direct;
  std::vector<double> decomposed;
  double max_deviation = 0.0;
};

/// Gradient of mean 0.5 * (R - Q(s, a))_+^2 w.r.t. the Q table, computed
/// (a) directly and (b) as alpha * grad L_policy + grad L_value with
/// V = soft_max(Q(s, .)), log pi = (Q - V) / alpha and R_hat = R - alpha log pi.
GradEquivalence grad_equivalence_check(std::span<const double> q_table, std::size_t n_actions,
                                       std::span<const GradSample> samples, double alpha);

struct LossGap {
  double policy = 0.0;
  double value = 0.0;
  double total() const { return policy + value; }
};

/// Mean |L^lb - L^sil| for policy and value terms over fixed (log pi, V, R)
/// triples, where L^lb uses R_hat = R - alpha log pi.
LossGap lb_sil_gap(std::span<const double> log_pi, std::span<const double> values, std::span<const double> returns,
                   double alpha);

}  // namespace sil::oracle
