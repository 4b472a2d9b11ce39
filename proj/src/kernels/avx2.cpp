// Compiled with -mavx2 -mfma. Only reached through the dispatch table after
// a runtime CPU check, so nothing in here may be inlined into generic code:
// keep the includes to the intrinsics header and the table declaration.

#include <immintrin.h>

#include "sil/kernels.hpp"

namespace sil::kernels {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot(const double* a, const double* b, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd();
  __m256d s1 = _mm256_setzero_pd();
  __m256d s2 = _mm256_setzero_pd();
  __m256d s3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), s1);
    s2 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 8), _mm256_loadu_pd(b + i + 8), s2);
    s3 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 12), _mm256_loadu_pd(b + i + 12), s3);
  }
  for (; i + 4 <= n; i += 4)
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
  double s = hsum(_mm256_add_pd(_mm256_add_pd(s0, s1), _mm256_add_pd(s2, s3)));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double sum_squares(const double* x, std::size_t n) { return dot(x, x, n); }

// R rows share every weight load; 8 outputs per pass keep 2R accumulators
// in registers. Inputs that are zero in all R rows are dropped up front.
constexpr std::size_t kMaxCompact = 1024;

template <int R>
void forward_block(const double* x, std::size_t in, const double* w, const double* bias,
                   double* y, std::size_t out) {
  unsigned idx[kMaxCompact];
  std::size_t n_idx = 0;
  if (in <= kMaxCompact) {
    for (std::size_t i = 0; i < in; ++i) {
      bool any = false;
      for (int r = 0; r < R; ++r) any |= x[r * in + i] != 0.0;
      if (any) idx[n_idx++] = static_cast<unsigned>(i);
    }
  }
  const bool compact = in <= kMaxCompact;
  const std::size_t count = compact ? n_idx : in;

  std::size_t j = 0;
  for (; j + 8 <= out; j += 8) {
    __m256d acc[R][2];
    for (int r = 0; r < R; ++r) {
      acc[r][0] = _mm256_loadu_pd(bias + j);
      acc[r][1] = _mm256_loadu_pd(bias + j + 4);
    }
    for (std::size_t t = 0; t < count; ++t) {
      const std::size_t i = compact ? idx[t] : t;
      const __m256d w0 = _mm256_loadu_pd(w + i * out + j);
      const __m256d w1 = _mm256_loadu_pd(w + i * out + j + 4);
      for (int r = 0; r < R; ++r) {
        const __m256d xi = _mm256_set1_pd(x[r * in + i]);
        acc[r][0] = _mm256_fmadd_pd(xi, w0, acc[r][0]);
        acc[r][1] = _mm256_fmadd_pd(xi, w1, acc[r][1]);
      }
    }
    for (int r = 0; r < R; ++r) {
      _mm256_storeu_pd(y + r * out + j, acc[r][0]);
      _mm256_storeu_pd(y + r * out + j + 4, acc[r][1]);
    }
  }
  for (; j + 4 <= out; j += 4) {
    __m256d acc[R];
    for (int r = 0; r < R; ++r) acc[r] = _mm256_loadu_pd(bias + j);
    for (std::size_t t = 0; t < count; ++t) {
      const std::size_t i = compact ? idx[t] : t;
      const __m256d wi = _mm256_loadu_pd(w + i * out + j);
      for (int r = 0; r < R; ++r) acc[r] = _mm256_fmadd_pd(_mm256_set1_pd(x[r * in + i]), wi, acc[r]);
    }
    for (int r = 0; r < R; ++r) _mm256_storeu_pd(y + r * out + j, acc[r]);
  }
  if (j < out) {
    for (int r = 0; r < R; ++r) {
      for (std::size_t jj = j; jj < out; ++jj) {
        double acc = bias[jj];
        for (std::size_t t = 0; t < count; ++t) {
          const std::size_t i = compact ? idx[t] : t;
          acc += x[r * in + i] * w[i * out + jj];
        }
        y[r * out + jj] = acc;
      }
    }
  }
}

void dense_forward(const double* x, std::size_t rows, std::size_t in, const double* w,
                   const double* bias, double* y, std::size_t out) {
  if (out == 1) {
    for (std::size_t r = 0; r < rows; ++r) y[r] = bias[0] + dot(x + r * in, w, in);
    return;
  }
  std::size_t r = 0;
  for (; r + 4 <= rows; r += 4) forward_block<4>(x + r * in, in, w, bias, y + r * out, out);
  for (; r < rows; ++r) forward_block<1>(x + r * in, in, w, bias, y + r * out, out);
}

// Each gradient vector is loaded and stored once per R rows.
template <int R>
void weight_grad_block(const double* x, std::size_t in, const double* dy, double* dw,
                       std::size_t out) {
  for (std::size_t i = 0; i < in; ++i) {
    bool any = false;
    for (int r = 0; r < R; ++r) any |= x[r * in + i] != 0.0;
    if (!any) continue;
    __m256d xi[R];
    for (int r = 0; r < R; ++r) xi[r] = _mm256_set1_pd(x[r * in + i]);
    double* row = dw + i * out;
    std::size_t j = 0;
    for (; j + 4 <= out; j += 4) {
      __m256d acc = _mm256_loadu_pd(row + j);
      for (int r = 0; r < R; ++r) acc = _mm256_fmadd_pd(xi[r], _mm256_loadu_pd(dy + r * out + j), acc);
      _mm256_storeu_pd(row + j, acc);
    }
    for (; j < out; ++j)
      for (int r = 0; r < R; ++r) row[j] += x[r * in + i] * dy[r * out + j];
  }
}

void dense_weight_grad(const double* x, std::size_t rows, std::size_t in, const double* dy,
                       double* dw, std::size_t out) {
  std::size_t r = 0;
  for (; r + 8 <= rows; r += 8) weight_grad_block<8>(x + r * in, in, dy + r * out, dw, out);
  for (; r < rows; ++r) weight_grad_block<1>(x + r * in, in, dy + r * out, dw, out);
}

// Four rows per weight row; the four partial sums are reduced together.
void dense_input_grad(const double* dy, std::size_t rows, std::size_t out, const double* w,
                      double* dx, std::size_t in) {
  std::size_t r = 0;
  for (; r + 4 <= rows; r += 4) {
    const double* d0 = dy + r * out;
    for (std::size_t i = 0; i < in; ++i) {
      const double* wi = w + i * out;
      __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
      __m256d a2 = _mm256_setzero_pd(), a3 = _mm256_setzero_pd();
      std::size_t j = 0;
      for (; j + 4 <= out; j += 4) {
        const __m256d wv = _mm256_loadu_pd(wi + j);
        a0 = _mm256_fmadd_pd(wv, _mm256_loadu_pd(d0 + j), a0);
        a1 = _mm256_fmadd_pd(wv, _mm256_loadu_pd(d0 + out + j), a1);
        a2 = _mm256_fmadd_pd(wv, _mm256_loadu_pd(d0 + 2 * out + j), a2);
        a3 = _mm256_fmadd_pd(wv, _mm256_loadu_pd(d0 + 3 * out + j), a3);
      }
      const __m256d t0 = _mm256_hadd_pd(a0, a1);
      const __m256d t1 = _mm256_hadd_pd(a2, a3);
      const __m256d s = _mm256_add_pd(_mm256_permute2f128_pd(t0, t1, 0x20),
                                      _mm256_permute2f128_pd(t0, t1, 0x31));
      alignas(32) double sums[4];
      _mm256_store_pd(sums, s);
      for (; j < out; ++j)
        for (int k = 0; k < 4; ++k) sums[k] += wi[j] * d0[k * out + j];
      for (int k = 0; k < 4; ++k) dx[(r + k) * in + i] = sums[k];
    }
  }
  for (; r < rows; ++r)
    for (std::size_t i = 0; i < in; ++i) dx[r * in + i] = dot(w + i * out, dy + r * out, out);
}

// exp on [-40, 40]: Cody-Waite reduction by ln 2, degree-13 Taylor polynomial
// on |r| <= ln2/2, then scale by 2^n through the exponent bits.
inline __m256d exp_bounded(__m256d x) {
  const __m256d magic = _mm256_set1_pd(6755399441055744.0);  // 1.5 * 2^52
  const __m256d t = _mm256_fmadd_pd(x, _mm256_set1_pd(1.4426950408889634), magic);
  const __m256d n = _mm256_sub_pd(t, magic);
  __m256d r = _mm256_fnmadd_pd(n, _mm256_set1_pd(6.93147180369123816490e-01), x);
  r = _mm256_fnmadd_pd(n, _mm256_set1_pd(1.90821492927058770002e-10), r);

  static constexpr double kInvFact[] = {
      1.0 / 6227020800.0, 1.0 / 479001600.0, 1.0 / 39916800.0,
      1.0 / 3628800.0,    1.0 / 362880.0,    1.0 / 40320.0,
      1.0 / 5040.0,       1.0 / 720.0,       1.0 / 120.0,
      1.0 / 24.0,         1.0 / 6.0,         0.5,
      1.0,                1.0};
  __m256d p = _mm256_set1_pd(kInvFact[0]);
  for (int k = 1; k < 14; ++k) p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(kInvFact[k]));

  const __m256i bits = _mm256_sub_epi64(_mm256_castpd_si256(t), _mm256_castpd_si256(magic));
  const __m256i scale = _mm256_slli_epi64(_mm256_add_epi64(bits, _mm256_set1_epi64x(1023)), 52);
  return _mm256_mul_pd(p, _mm256_castsi256_pd(scale));
}

// tanh(x) = sign(x) * (1 - 2 / (exp(2|x|) + 1)); |x| >= 20 rounds to +-1.
inline __m256d tanh4(__m256d x) {
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  const __m256d sign = _mm256_and_pd(x, sign_mask);
  const __m256d a = _mm256_min_pd(_mm256_andnot_pd(sign_mask, x), _mm256_set1_pd(20.0));
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d e = exp_bounded(_mm256_add_pd(a, a));
  const __m256d t = _mm256_sub_pd(one, _mm256_div_pd(_mm256_set1_pd(2.0), _mm256_add_pd(e, one)));
  return _mm256_or_pd(t, sign);
}

void tanh_inplace(double* x, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, tanh4(_mm256_loadu_pd(x + i)));
  if (i < n) {
    alignas(32) double tail[4] = {0.0, 0.0, 0.0, 0.0};
    for (std::size_t k = i; k < n; ++k) tail[k - i] = x[k];
    _mm256_store_pd(tail, tanh4(_mm256_load_pd(tail)));
    for (std::size_t k = i; k < n; ++k) x[k] = tail[k - i];
  }
}

void rmsprop_update(double* w, const double* grad, double* acc, std::size_t n,
                    const RmsPropArgs& args) {
  const __m256d scale = _mm256_set1_pd(args.grad_scale);
  const __m256d decay = _mm256_set1_pd(args.decay);
  const __m256d keep = _mm256_set1_pd(1.0 - args.decay);
  const __m256d lr = _mm256_set1_pd(args.lr);
  const __m256d eps = _mm256_set1_pd(args.epsilon);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d g = _mm256_mul_pd(scale, _mm256_loadu_pd(grad + i));
    const __m256d a = _mm256_add_pd(_mm256_mul_pd(decay, _mm256_loadu_pd(acc + i)),
                                    _mm256_mul_pd(keep, _mm256_mul_pd(g, g)));
    _mm256_storeu_pd(acc + i, a);
    const __m256d step = _mm256_div_pd(_mm256_mul_pd(lr, g), _mm256_sqrt_pd(_mm256_add_pd(a, eps)));
    _mm256_storeu_pd(w + i, _mm256_sub_pd(_mm256_loadu_pd(w + i), step));
  }
  for (; i < n; ++i) {
    const double g = args.grad_scale * grad[i];
    acc[i] = args.decay * acc[i] + (1.0 - args.decay) * (g * g);
    const double denom = _mm_cvtsd_f64(_mm_sqrt_sd(_mm_setzero_pd(), _mm_set_sd(acc[i] + args.epsilon)));
    w[i] -= args.lr * g / denom;
  }
}

constexpr KernelTable kAvx2{
    Isa::avx2,     dot,          axpy,           sum_squares,
    dense_forward, dense_weight_grad, dense_input_grad, tanh_inplace,
    rmsprop_update,
};

}  // namespace

const KernelTable* avx2_table() { return &kAvx2; }

}  // namespace sil::kernels
