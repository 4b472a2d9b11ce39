#include "sil/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sil/error.hpp"

namespace sil::losses {

LossReport sil_loss(const SilBatch& batch, const nn::Matrix& logits,
                    std::span<const double> values, double beta_sil) {
  const std::size_t n = batch.size();
  if (batch.observations.rows() != n || batch.returns.size() != n || batch.weights.size() != n ||
      logits.rows() != n || values.size() != n) {
    throw UsageError("sil_loss: batch and network outputs are misaligned");
  }

  LossReport report;
  report.dlogits = nn::Matrix(n, logits.cols());
  report.dvalue.assign(n, 0.0);
  report.valid.assign(n, 0);
  if (n == 0) return report;

  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> logp(logits.cols());
  std::size_t valid = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double adv = batch.returns[i] - values[i];
    if (!(adv > 0.0)) continue;
    ++valid;
    report.valid[i] = 1;

    const double w = batch.weights[i];
    const auto a = static_cast<std::size_t>(batch.actions[i]);
    nn::log_softmax(logits.row(i), logp);
    report.policy_loss += w * -logp[a] * adv;
    report.value_loss += w * 0.5 * adv * adv;

    auto dl = report.dlogits.row(i);
    const double scale = w * adv * inv_n;
    for (std::size_t j = 0; j < dl.size(); ++j) dl[j] = scale * std::exp(logp[j]);
    dl[a] -= scale;
    report.dvalue[i] = -w * beta_sil * adv * inv_n;
  }
  report.policy_loss *= inv_n;
  report.value_loss *= inv_n;
  report.total = report.policy_loss + beta_sil * report.value_loss;
  report.valid_fraction = static_cast<double>(valid) * inv_n;
  return report;
}

std::vector<double> nstep_targets(const A2cRollout& rollout, std::span<const double> bootstrap_values) {
  const std::size_t lanes = rollout.n_envs;
  if (bootstrap_values.size() != lanes || rollout.rewards.size() != rollout.size() ||
      rollout.dones.size() != rollout.size()) {
    throw UsageError("nstep_targets: rollout arrays are misaligned");
  }
  std::vector<double> targets(rollout.size());
  for (std::size_t e = 0; e < lanes; ++e) {
    double running = bootstrap_values[e];
    for (std::size_t t = rollout.n_steps; t-- > 0;) {
      const std::size_t i = t * lanes + e;
      if (rollout.dones[i]) running = 0.0;
      running = rollout.rewards[i] + rollout.gamma * running;
      targets[i] = running;
    }
  }
  return targets;
}

LossReport a2c_loss(const A2cRollout& rollout, const nn::Matrix& logits,
                    std::span<const double> values, std::span<const double> bootstrap_values,
                    double alpha, double beta_a2c) {
  const std::size_t n = rollout.size();
  if (logits.rows() != n || values.size() != n || rollout.actions.size() != n ||
      rollout.observations.rows() != n) {
    throw UsageError("a2c_loss: rollout and network outputs are misaligned (expected " +
                     std::to_string(n) + " rows)");
  }
  const auto targets = nstep_targets(rollout, bootstrap_values);

  LossReport report;
  report.dlogits = nn::Matrix(n, logits.cols());
  report.dvalue.assign(n, 0.0);
  if (n == 0) return report;

  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> logp(logits.cols());
  for (std::size_t i = 0; i < n; ++i) {
    nn::log_softmax(logits.row(i), logp);
    const auto a = static_cast<std::size_t>(rollout.actions[i]);
    const double adv = targets[i] - values[i];

    double entropy = 0.0;
    for (double lp : logp) entropy -= std::exp(lp) * lp;

    report.policy_loss += -logp[a] * adv;
    report.entropy += entropy;
    report.value_loss += 0.5 * adv * adv;

    // d/dz of -logp[a]*adv is adv*(pi - onehot); d/dz of -alpha*H is
    // alpha*pi*(logp + H).
    auto dl = report.dlogits.row(i);
    for (std::size_t j = 0; j < dl.size(); ++j) {
      const double p = std::exp(logp[j]);
      dl[j] = (adv * p + alpha * p * (logp[j] + entropy)) * inv_n;
    }
    dl[a] -= adv * inv_n;
    report.dvalue[i] = beta_a2c * (values[i] - targets[i]) * inv_n;
  }
  report.policy_loss *= inv_n;
  report.entropy *= inv_n;
  report.value_loss *= inv_n;
  report.total = report.policy_loss - alpha * report.entropy + beta_a2c * report.value_loss;
  return report;
}

LowerBoundQLoss lower_bound_q_loss(std::span<const double> q, std::span<const double> returns) {
  if (q.size() != returns.size()) throw UsageError("lower_bound_q_loss: length mismatch");
  LowerBoundQLoss out;
  out.dq.assign(q.size(), 0.0);
  if (q.empty()) return out;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double gap = std::max(returns[i] - q[i], 0.0);
    out.loss += 0.5 * gap * gap;
    out.dq[i] = -gap;
  }
  out.loss /= static_cast<double>(q.size());
  return out;
}

}  // namespace sil::losses
