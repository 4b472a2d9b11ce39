#pragma once

// Dense policy/value network: a tanh trunk shared by a policy-logit head and
// a scalar value head, exact reverse-mode gradients for it, and the
// optimizers that apply them.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace sil::nn {

/// Row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

enum class Activation { tanh, identity };

struct MlpShape {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden{64, 64};
  std::size_t action_count = 0;
  Activation activation = Activation::tanh;

  bool operator==(const MlpShape&) const = default;
};

/// Offsets of one dense layer inside the flat parameter vector. Weights are
/// stored input-major: w[i * out + j] connects input i to output j.
struct DenseSlice {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t weights = 0;
  std::size_t bias = 0;
};

struct ParamLayout {
  MlpShape shape;
  std::vector<DenseSlice> trunk;
  DenseSlice policy_head;
  DenseSlice value_head;
  std::size_t size = 0;

  explicit ParamLayout(MlpShape shape);

  std::size_t feature_dim() const { return trunk.empty() ? shape.input_dim : trunk.back().out; }
};

class MlpParams {
 public:
  /// All parameters zero.
  explicit MlpParams(MlpShape shape);

  /// Orthogonal init: gain sqrt(2) on the trunk, 0.01 on the policy head,
  /// 1 on the value head, zero biases.
  static MlpParams initialized(MlpShape shape, std::uint64_t seed);

  const ParamLayout& layout() const { return *layout_; }
  std::shared_ptr<const ParamLayout> shared_layout() const { return layout_; }
  const MlpShape& shape() const { return layout_->shape; }
  std::size_t size() const { return values_.size(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  const double* weights(const DenseSlice& s) const { return values_.data() + s.weights; }
  const double* bias(const DenseSlice& s) const { return values_.data() + s.bias; }

  bool operator==(const MlpParams& o) const { return shape() == o.shape() && values_ == o.values_; }

 private:
  std::shared_ptr<const ParamLayout> layout_;
  std::vector<double> values_;
};

/// Same layout as the parameters they belong to.
struct Gradients {
  std::shared_ptr<const ParamLayout> layout;
  std::vector<double> values;

  Gradients() = default;
  explicit Gradients(const MlpParams& like)
      : layout(like.shared_layout()), values(like.size(), 0.0) {}

  double* weights(const DenseSlice& s) { return values.data() + s.weights; }
  double* bias(const DenseSlice& s) { return values.data() + s.bias; }

  double norm() const;
  bool all_finite() const;
  Gradients& operator+=(const Gradients& other);
};

struct ForwardCache {
  Matrix input;
  std::vector<Matrix> hidden;  // post-activation output of every trunk layer
};

struct NetOutput {
  std::span<const double> logits;
  double value;
};

struct BatchOutput {
  Matrix logits;
  std::vector<double> values;
  ForwardCache cache;

  std::size_t size() const { return values.size(); }
  NetOutput operator[](std::size_t r) const { return {logits.row(r), values[r]}; }
};

/// Throws ConfigError when obs.cols() differs from the input dimension.
BatchOutput forward(const MlpParams& params, const Matrix& obs);

/// Vector-Jacobian product of the batch: gradient of
/// sum_r <dlogits[r], logits[r]> + dvalue[r] * value[r]. Rows whose
/// cotangents are all zero contribute nothing and are skipped.
Gradients backprop(const MlpParams& params, const ForwardCache& cache,
                   const Matrix& dlogits, std::span<const double> dvalue);

void log_softmax(std::span<const double> logits, std::span<double> out);
std::vector<double> log_softmax(std::span<const double> logits);
std::vector<double> softmax(std::span<const double> logits);

enum class OptimizerKind { rmsprop, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::rmsprop;
  double decay = 0.99;      // RMSProp accumulator decay
  double epsilon = 1e-5;    // RMSProp, inside the square root
  double max_grad_norm = 0.5;  // <= 0 disables clipping
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  bool operator==(const OptimizerConfig&) const = default;
};

struct StepReport {
  bool applied = false;
  double grad_norm = 0.0;
  double clip_scale = 1.0;
  std::size_t non_finite_count = 0;
  std::size_t first_non_finite = 0;
};

class Optimizer {
 public:
  Optimizer(OptimizerConfig config, std::size_t param_count);

  /// Non-finite gradients leave params and state untouched and come back
  /// with applied == false.
  StepReport step(MlpParams& params, const Gradients& grads, double lr);

  const OptimizerConfig& config() const { return config_; }
  std::span<const double> first_moment() const { return first_; }
  std::span<const double> second_moment() const { return second_; }
  std::uint64_t steps() const { return steps_; }

 private:
  OptimizerConfig config_;
  std::vector<double> first_;   // Adam only
  std::vector<double> second_;  // RMSProp accumulator / Adam second moment
  std::uint64_t steps_ = 0;
};

}  // namespace sil::nn
