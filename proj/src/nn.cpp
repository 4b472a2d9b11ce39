#include "sil/nn.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "sil/error.hpp"
#include "sil/kernels.hpp"

namespace sil::nn {

ParamLayout::ParamLayout(MlpShape s) : shape(std::move(s)) {
  if (shape.input_dim == 0) throw ConfigError("network input dimension must be positive");
  if (shape.action_count == 0) throw ConfigError("network action count must be positive");
  std::size_t offset = 0;
  auto add = [&offset](std::size_t in, std::size_t out) {
    DenseSlice slice{in, out, offset, offset + in * out};
    offset += in * out + out;
    return slice;
  };
  std::size_t width = shape.input_dim;
  for (std::size_t h : shape.hidden) {
    if (h == 0) throw ConfigError("hidden layer width must be positive");
    trunk.push_back(add(width, h));
    width = h;
  }
  policy_head = add(width, shape.action_count);
  value_head = add(width, 1);
  size = offset;
}

MlpParams::MlpParams(MlpShape shape)
    : layout_(std::make_shared<const ParamLayout>(std::move(shape))),
      values_(layout_->size, 0.0) {}

namespace {

// Fills an in x out block with a scaled matrix whose shorter dimension is
// orthonormal (modified Gram-Schmidt on gaussian draws).
void orthogonal_fill(double* w, std::size_t in, std::size_t out, double gain,
                     std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const bool by_column = in >= out;
  const std::size_t count = by_column ? out : in;
  const std::size_t length = by_column ? in : out;
  std::vector<std::vector<double>> basis(count, std::vector<double>(length));
  for (auto& v : basis)
    for (double& x : v) x = normal(rng);
  for (std::size_t k = 0; k < count; ++k) {
    auto& v = basis[k];
    for (std::size_t p = 0; p < k; ++p) {
      double proj = 0.0;
      for (std::size_t i = 0; i < length; ++i) proj += v[i] * basis[p][i];
      for (std::size_t i = 0; i < length; ++i) v[i] -= proj * basis[p][i];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
  }
  for (std::size_t i = 0; i < in; ++i)
    for (std::size_t j = 0; j < out; ++j)
      w[i * out + j] = gain * (by_column ? basis[j][i] : basis[i][j]);
}

}  // namespace

MlpParams MlpParams::initialized(MlpShape shape, std::uint64_t seed) {
  MlpParams params(std::move(shape));
  std::mt19937_64 rng(seed);
  const auto& layout = params.layout();
  double* base = params.values_.data();
  for (const auto& layer : layout.trunk)
    orthogonal_fill(base + layer.weights, layer.in, layer.out, std::sqrt(2.0), rng);
  orthogonal_fill(base + layout.policy_head.weights, layout.policy_head.in,
                  layout.policy_head.out, 0.01, rng);
  orthogonal_fill(base + layout.value_head.weights, layout.value_head.in,
                  layout.value_head.out, 1.0, rng);
  return params;
}

double Gradients::norm() const {
  return std::sqrt(kernels::active().sum_squares(values.data(), values.size()));
}

bool Gradients::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double x) { return std::isfinite(x); });
}

Gradients& Gradients::operator+=(const Gradients& other) {
  if (other.values.size() != values.size())
    throw UsageError("adding gradients of different layouts");
  kernels::active().axpy(1.0, other.values.data(), values.data(), values.size());
  return *this;
}

BatchOutput forward(const MlpParams& params, const Matrix& obs) {
  const auto& layout = params.layout();
  if (obs.cols() != layout.shape.input_dim) {
    throw ConfigError("observation width " + std::to_string(obs.cols()) +
                      " does not match network input " +
                      std::to_string(layout.shape.input_dim));
  }
  const auto& k = kernels::active();
  const std::size_t rows = obs.rows();

  BatchOutput out;
  out.cache.input = obs;
  const Matrix* prev = &out.cache.input;
  for (const auto& layer : layout.trunk) {
    Matrix h(rows, layer.out);
    k.dense_forward(prev->data().data(), rows, layer.in, params.weights(layer), params.bias(layer),
                    h.data().data(), layer.out);
    if (layout.shape.activation == Activation::tanh) k.tanh_inplace(h.data().data(), h.data().size());
    out.cache.hidden.push_back(std::move(h));
    prev = &out.cache.hidden.back();
  }

  const auto& ph = layout.policy_head;
  const auto& vh = layout.value_head;
  out.logits = Matrix(rows, ph.out);
  out.values.resize(rows);
  k.dense_forward(prev->data().data(), rows, ph.in, params.weights(ph), params.bias(ph),
                  out.logits.data().data(), ph.out);
  k.dense_forward(prev->data().data(), rows, vh.in, params.weights(vh), params.bias(vh), out.values.data(), 1);
  return out;
}

namespace {

Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = m.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace

Gradients backprop(const MlpParams& params, const ForwardCache& cache,
                   const Matrix& dlogits, std::span<const double> dvalue) {
  const auto& layout = params.layout();
  const std::size_t rows = dlogits.rows();
  if (cache.input.rows() == 0 && rows > 0) throw UsageError("backprop called without a forward cache");
  if (cache.input.rows() != rows || dvalue.size() != rows ||
      dlogits.cols() != layout.shape.action_count ||
      cache.hidden.size() != layout.trunk.size()) {
    throw UsageError("backprop cotangents do not match the cached forward batch");
  }

  const auto& k = kernels::active();
  Gradients grads(params);

  // Rows without any cotangent contribute nothing; work on the rest only.
  std::vector<std::size_t> active;
  for (std::size_t r = 0; r < rows; ++r) {
    const auto dl = dlogits.row(r);
    if (dvalue[r] != 0.0 || std::any_of(dl.begin(), dl.end(), [](double x) { return x != 0.0; }))
      active.push_back(r);
  }
  if (active.empty()) return grads;
  const std::size_t n = active.size();

  const auto& ph = layout.policy_head;
  const auto& vh = layout.value_head;
  const std::size_t feat_dim = layout.feature_dim();
  const bool tanh = layout.shape.activation == Activation::tanh;

  const Matrix dl = gather_rows(dlogits, active);
  std::vector<double> dv(n);
  for (std::size_t i = 0; i < n; ++i) dv[i] = dvalue[active[i]];

  const Matrix& feat_all = layout.trunk.empty() ? cache.input : cache.hidden.back();
  const Matrix feat = gather_rows(feat_all, active);
  k.dense_weight_grad(feat.data().data(), n, feat_dim, dl.data().data(), grads.weights(ph), ph.out);
  k.dense_weight_grad(feat.data().data(), n, feat_dim, dv.data(), grads.weights(vh), 1);
  for (std::size_t i = 0; i < n; ++i) {
    k.axpy(1.0, dl.row(i).data(), grads.bias(ph), ph.out);
    *grads.bias(vh) += dv[i];
  }
  if (layout.trunk.empty()) return grads;

  Matrix dh(n, feat_dim);
  k.dense_input_grad(dl.data().data(), n, ph.out, params.weights(ph), dh.data().data(), feat_dim);
  for (std::size_t i = 0; i < n; ++i) k.axpy(dv[i], params.weights(vh), dh.row(i).data(), feat_dim);

  Matrix h = feat;
  for (std::size_t l = layout.trunk.size(); l-- > 0;) {
    const auto& layer = layout.trunk[l];
    Matrix dz(n, layer.out);
    for (std::size_t i = 0; i < n; ++i) {
      const auto hr = h.row(i);
      const auto dhr = dh.row(i);
      auto dzr = dz.row(i);
      for (std::size_t j = 0; j < layer.out; ++j) dzr[j] = tanh ? dhr[j] * (1.0 - hr[j] * hr[j]) : dhr[j];
    }
    Matrix x = gather_rows(l == 0 ? cache.input : cache.hidden[l - 1], active);
    k.dense_weight_grad(x.data().data(), n, layer.in, dz.data().data(), grads.weights(layer), layer.out);
    for (std::size_t i = 0; i < n; ++i) k.axpy(1.0, dz.row(i).data(), grads.bias(layer), layer.out);
    if (l > 0) {
      dh = Matrix(n, layer.in);
      k.dense_input_grad(dz.data().data(), n, layer.out, params.weights(layer), dh.data().data(), layer.in);
      h = std::move(x);
    }
  }
  return grads;
}

void log_softmax(std::span<const double> logits, std::span<double> out) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double x : logits) s += std::exp(x - m);
  const double shift = m + std::log(s);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - shift;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  log_softmax(logits, out);
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  auto out = log_softmax(logits);
  for (double& x : out) x = std::exp(x);
  return out;
}

Optimizer::Optimizer(OptimizerConfig config, std::size_t param_count)
    : config_(config), second_(param_count, 0.0) {
  if (config_.kind == OptimizerKind::adam) first_.assign(param_count, 0.0);
}

StepReport Optimizer::step(MlpParams& params, const Gradients& grads, double lr) {
  if (grads.values.size() != params.size() || second_.size() != params.size())
    throw UsageError("optimizer step with mismatched parameter count");

  StepReport report;
  for (std::size_t i = 0; i < grads.values.size(); ++i) {
    if (!std::isfinite(grads.values[i])) {
      if (report.non_finite_count++ == 0) report.first_non_finite = i;
    }
  }
  if (report.non_finite_count > 0) return report;

  report.grad_norm = grads.norm();
  if (config_.max_grad_norm > 0.0 && report.grad_norm > config_.max_grad_norm)
    report.clip_scale = config_.max_grad_norm / report.grad_norm;

  auto w = params.values();
  const double* g = grads.values.data();
  if (config_.kind == OptimizerKind::rmsprop) {
    kernels::active().rmsprop_update(
        w.data(), g, second_.data(), w.size(),
        {lr, config_.decay, config_.epsilon, report.clip_scale});
  } else {
    const double b1 = config_.adam_beta1;
    const double b2 = config_.adam_beta2;
    const double t = static_cast<double>(steps_ + 1);
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = report.clip_scale * g[i];
      first_[i] = b1 * first_[i] + (1.0 - b1) * gi;
      second_[i] = b2 * second_[i] + (1.0 - b2) * gi * gi;
      w[i] -= lr * (first_[i] / c1) / (std::sqrt(second_[i] / c2) + config_.adam_epsilon);
    }
  }
  ++steps_;
  report.applied = true;
  return report;
}

}  // namespace sil::nn
