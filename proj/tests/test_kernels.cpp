#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "sil/kernels.hpp"

using namespace sil::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng, double sparsity = 0.0) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = coin(rng) < sparsity ? 0.0 : u(rng);
  return v;
}

double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(a[i])));
  return worst;
}

// Sizes that hit the 8-wide, 4-wide and scalar tails.
const std::size_t kSizes[] = {1, 3, 4, 7, 8, 9, 15, 16, 17, 64, 83, 131};

const KernelTable* wide() {
  const auto* t = avx2_table();
  return t != nullptr && cpu_supports(Isa::avx2) ? t : nullptr;
}

}  // namespace

TEST_CASE("scalar kernels match hand-computed values") {
  const auto& k = scalar_table();
  const double a[] = {1, 2, 3};
  const double b[] = {4, -5, 6};
  CHECK(k.dot(a, b, 3) == doctest::Approx(12.0));
  CHECK(k.sum_squares(a, 3) == doctest::Approx(14.0));
  double y[] = {1, 1, 1};
  k.axpy(2.0, a, y, 3);
  CHECK(y[2] == doctest::Approx(7.0));

  // 2 rows, 2 inputs, 3 outputs.
  const double x[] = {1, 0, 2, -1};
  const double w[] = {1, 2, 3, 4, 5, 6};
  const double bias[] = {0.5, 0, -0.5};
  double out[6];
  k.dense_forward(x, 2, 2, w, bias, out, 3);
  CHECK(out[0] == doctest::Approx(1.5));
  CHECK(out[2] == doctest::Approx(2.5));
  CHECK(out[3] == doctest::Approx(2 * 1 - 4 + 0.5));
  CHECK(out[5] == doctest::Approx(6 - 6 - 0.5));
}

TEST_CASE("rmsprop step from zero accumulator follows the closed form") {
  const auto& k = scalar_table();
  double w[] = {1.0};
  const double g[] = {0.3};
  double acc[] = {0.0};
  k.rmsprop_update(w, g, acc, 1, {0.01, 0.99, 1e-5, 1.0});
  CHECK(w[0] == doctest::Approx(1.0 - 0.01 * 0.3 / std::sqrt(0.01 * 0.09 + 1e-5)).epsilon(1e-14));
}

TEST_CASE("runtime dispatch honours the scalar override") {
  CHECK(isa_name(Isa::scalar) == "scalar");
  CHECK(isa_name(Isa::avx2) == "avx2");
  if (!cpu_supports(Isa::avx2)) CHECK(active().isa == Isa::scalar);
}

TEST_CASE("avx2 kernels agree with the scalar reference") {
  const auto* v = wide();
  if (v == nullptr) {
    MESSAGE("avx2 kernels unavailable on this machine; skipped");
    return;
  }
  const auto& s = scalar_table();
  std::mt19937_64 rng(7);
  constexpr double kTol = 1e-12;

  for (std::size_t n : kSizes) {
    CAPTURE(n);
    const auto a = random_vec(n, rng);
    const auto b = random_vec(n, rng);
    CHECK(std::abs(s.dot(a.data(), b.data(), n) - v->dot(a.data(), b.data(), n)) <= kTol * n);
    CHECK(std::abs(s.sum_squares(a.data(), n) - v->sum_squares(a.data(), n)) <= kTol * n);

    auto ys = b, yv = b;
    s.axpy(0.37, a.data(), ys.data(), n);
    v->axpy(0.37, a.data(), yv.data(), n);
    CHECK(max_rel_diff(ys, yv) <= kTol);

    auto ts = random_vec(n, rng), tv = ts;
    ts[0] = 30.0;  // saturated input
    tv[0] = 30.0;
    s.tanh_inplace(ts.data(), n);
    v->tanh_inplace(tv.data(), n);
    CHECK(max_rel_diff(ts, tv) <= 1e-14);

    auto ws = random_vec(n, rng), wv = ws;
    auto as = random_vec(n, rng);
    for (auto& x : as) x = std::abs(x);
    auto av = as;
    const auto g = random_vec(n, rng);
    const RmsPropArgs args{7e-4, 0.99, 1e-5, 0.8};
    s.rmsprop_update(ws.data(), g.data(), as.data(), n, args);
    v->rmsprop_update(wv.data(), g.data(), av.data(), n, args);
    CHECK(max_rel_diff(ws, wv) <= kTol);
    CHECK(max_rel_diff(as, av) <= kTol);
  }
}

TEST_CASE("avx2 dense layer kernels agree with the scalar reference") {
  const auto* v = wide();
  if (v == nullptr) {
    MESSAGE("avx2 kernels unavailable on this machine; skipped");
    return;
  }
  const auto& s = scalar_table();
  std::mt19937_64 rng(11);
  const std::size_t row_counts[] = {1, 3, 4, 5, 8, 9, 17};
  for (std::size_t rows : row_counts)
    for (std::size_t in : {1, 5, 8, 83})
      for (std::size_t out : {1, 3, 4, 8, 13, 64}) {
        CAPTURE(rows);
        CAPTURE(in);
        CAPTURE(out);
        // One-hot style sparse inputs exercise the zero-skipping path.
        const auto x = random_vec(rows * in, rng, in > 8 ? 0.9 : 0.3);
        const auto w = random_vec(in * out, rng);
        const auto bias = random_vec(out, rng);
        const auto dy = random_vec(rows * out, rng, 0.2);

        std::vector<double> ys(rows * out), yv(rows * out);
        s.dense_forward(x.data(), rows, in, w.data(), bias.data(), ys.data(), out);
        v->dense_forward(x.data(), rows, in, w.data(), bias.data(), yv.data(), out);
        CHECK(max_rel_diff(ys, yv) <= 1e-12);

        auto dws = random_vec(in * out, rng), dwv = dws;
        s.dense_weight_grad(x.data(), rows, in, dy.data(), dws.data(), out);
        v->dense_weight_grad(x.data(), rows, in, dy.data(), dwv.data(), out);
        CHECK(max_rel_diff(dws, dwv) <= 1e-12);

        std::vector<double> dxs(rows * in), dxv(rows * in);
        s.dense_input_grad(dy.data(), rows, out, w.data(), dxs.data(), in);
        v->dense_input_grad(dy.data(), rows, out, w.data(), dxv.data(), in);
        CHECK(max_rel_diff(dxs, dxv) <= 1e-12);
      }
}

TEST_CASE("dense kernels treat all-zero rows as bias only") {
  for (const KernelTable* t : {&scalar_table(), wide()}) {
    if (t == nullptr) continue;
    const std::size_t rows = 5, in = 40, out = 9;
    std::vector<double> x(rows * in, 0.0), w(in * out, 3.0), bias(out), y(rows * out, -1.0);
    for (std::size_t j = 0; j < out; ++j) bias[j] = static_cast<double>(j);
    t->dense_forward(x.data(), rows, in, w.data(), bias.data(), y.data(), out);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < out; ++j) CHECK(y[r * out + j] == bias[j]);
  }
}
