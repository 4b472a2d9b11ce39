#pragma once

// Training objectives. Each loss returns its scalar value together with the
// output-side gradient signals (d/dlogits, d/dvalue) that nn::backprop turns
// into parameter gradients. Advantages and bootstrapped targets are constants
// with respect to the parameters.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sil/nn.hpp"

namespace sil::losses {

struct SilBatch {
  nn::Matrix observations;
  std::vector<int> actions;
  std::vector<double> returns;
  std::vector<double> weights;  // importance weights, multiply each sample's loss

  std::size_t size() const { return actions.size(); }
};

struct LossReport {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double total = 0.0;
  nn::Matrix dlogits;
  std::vector<double> dvalue;
  // SIL only: samples with R > V(s), and their share of the batch.
  std::vector<std::uint8_t> valid;
  double valid_fraction = 0.0;
};

/// Self-imitation loss, averaged over the batch:
///   w * ( -log pi(a|s) * (R - V)_+  +  beta_sil * 0.5 * (R - V)_+^2 ).
/// Samples with R <= V produce exactly zero gradient signal.
LossReport sil_loss(const SilBatch& batch, const nn::Matrix& logits,
                    std::span<const double> values, double beta_sil = 0.01);

/// One synchronous rollout: n_steps transitions from each of n_envs lanes.
/// Row t * n_envs + e holds step t of lane e; dones[t * n_envs + e] is set
/// when that transition ended the episode.
struct A2cRollout {
  std::size_t n_envs = 0;
  std::size_t n_steps = 5;
  double gamma = 0.99;
  nn::Matrix observations;
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<std::uint8_t> dones;
  nn::Matrix bootstrap_observations;  // one row per lane: the state after the last step

  std::size_t size() const { return n_envs * n_steps; }
};

/// Bootstrapped targets: discounted rewards to the end of the rollout plus
/// gamma^k V(s_{t+k}) of the lane's bootstrap state, cut at episode ends.
std::vector<double> nstep_targets(const A2cRollout& rollout, std::span<const double> bootstrap_values);

/// Mean over the rollout of
///   -log pi(a|s) * (V^n - V) - alpha * H(pi(.|s))  +  beta_a2c * 0.5 * (V - V^n)^2.
LossReport a2c_loss(const A2cRollout& rollout, const nn::Matrix& logits,
                    std::span<const double> values, std::span<const double> bootstrap_values,
                    double alpha = 0.01, double beta_a2c = 0.5);

struct LowerBoundQLoss {
  double loss = 0.0;       // mean of 0.5 * (R - Q)_+^2
  std::vector<double> dq;  // per-element derivative of the summand: -(R - Q)_+
};

LowerBoundQLoss lower_bound_q_loss(std::span<const double> q_estimates, std::span<const double> returns);

}  // namespace sil::losses
