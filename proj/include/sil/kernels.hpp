#pragma once

// Inner-loop arithmetic for the dense network and optimizer. Every kernel has
// a scalar reference implementation; wider variants are compiled separately
// and picked at runtime from what the CPU reports.

#include <cstddef>
#include <string_view>

namespace sil::kernels {

enum class Isa { scalar, avx2 };

struct RmsPropArgs {
  double lr;
  double decay;
  double epsilon;
  double grad_scale;  // multiplies every gradient entry (global-norm clip)
};

struct KernelTable {
  Isa isa;

  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  double (*sum_squares)(const double* x, std::size_t n);

  // Dense layer over a batch. Matrices are row-major; weights are stored
  // input-major, w[i*out + j] connecting input i to output j. Zero inputs
  // contribute nothing and may be skipped.
  //
  // y[r, :] = bias + sum_i x[r, i] * w[i, :]
  void (*dense_forward)(const double* x, std::size_t rows, std::size_t in,
                        const double* w, const double* bias, double* y,
                        std::size_t out);
  // dw[i, :] += sum_r x[r, i] * dy[r, :], rows accumulated in order.
  void (*dense_weight_grad)(const double* x, std::size_t rows, std::size_t in,
                            const double* dy, double* dw, std::size_t out);
  // dx[r, i] = sum_j w[i, j] * dy[r, j]
  void (*dense_input_grad)(const double* dy, std::size_t rows, std::size_t out,
                           const double* w, double* dx, std::size_t in);

  void (*tanh_inplace)(double* x, std::size_t n);

  // acc <- decay*acc + (1-decay)*g^2 ; w <- w - lr*g/sqrt(acc+eps), with
  // g = grad_scale * grad.
  void (*rmsprop_update)(double* w, const double* grad, double* acc,
                         std::size_t n, const RmsPropArgs& args);
};

const KernelTable& scalar_table();

// nullptr when the variant was not compiled into this build.
const KernelTable* avx2_table();

bool cpu_supports(Isa isa);

// The table used by the library. Chosen once: the widest variant the CPU
// supports, unless SIL_LAB_ISA=scalar is set in the environment.
const KernelTable& active();

std::string_view isa_name(Isa isa);

}  // namespace sil::kernels
