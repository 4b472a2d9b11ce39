#include <cmath>

#include "sil/kernels.hpp"

namespace sil::kernels {
namespace {

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double sum_squares(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * x[i];
  return s;
}

void dense_forward(const double* x, std::size_t rows, std::size_t in, const double* w,
                   const double* bias, double* y, std::size_t out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * in;
    double* yr = y + r * out;
    for (std::size_t j = 0; j < out; ++j) yr[j] = bias[j];
    for (std::size_t i = 0; i < in; ++i) {
      const double xi = xr[i];
      if (xi == 0.0) continue;
      const double* row = w + i * out;
      for (std::size_t j = 0; j < out; ++j) yr[j] += xi * row[j];
    }
  }
}

void dense_weight_grad(const double* x, std::size_t rows, std::size_t in, const double* dy,
                       double* dw, std::size_t out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * in;
    const double* dyr = dy + r * out;
    for (std::size_t i = 0; i < in; ++i) {
      const double xi = xr[i];
      if (xi == 0.0) continue;
      double* row = dw + i * out;
      for (std::size_t j = 0; j < out; ++j) row[j] += xi * dyr[j];
    }
  }
}

void dense_input_grad(const double* dy, std::size_t rows, std::size_t out, const double* w,
                      double* dx, std::size_t in) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < in; ++i) dx[r * in + i] = dot(w + i * out, dy + r * out, out);
}

void tanh_inplace(double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = std::tanh(x[i]);
}

void rmsprop_update(double* w, const double* grad, double* acc, std::size_t n,
                    const RmsPropArgs& args) {
  const double keep = 1.0 - args.decay;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = args.grad_scale * grad[i];
    acc[i] = args.decay * acc[i] + keep * g * g;
    w[i] -= args.lr * g / std::sqrt(acc[i] + args.epsilon);
  }
}

constexpr KernelTable kScalar{
    Isa::scalar,      dot,          axpy,           sum_squares,
    dense_forward,    dense_weight_grad, dense_input_grad, tanh_inplace,
    rmsprop_update,
};

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

}  // namespace sil::kernels
