#include "densesteer/kernels.hpp"

#include <omp.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "support/gen.hpp"

using namespace densesteer::kernels;

namespace {

std::vector<float> random_vec(gen::Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>((2.0 * rng.unit() - 1.0) * scale);
  return v;
}

bool bitwise_equal(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

}  // namespace

TEST_CASE("parallel linear is bit-identical to serial for any thread count") {
  gen::Rng rng(1);
  for (auto [rows, in, out] : {std::array<std::size_t, 3>{1, 64, 259}, {37, 64, 256}, {128, 256, 64}}) {
    const auto x = random_vec(rng, rows * in), w = random_vec(rng, out * in), b = random_vec(rng, out);
    std::vector<float> ys(rows * out), yp(rows * out);
    serial::linear({x, w, b, ys, rows, in, out});
    for (int threads : {1, 2, 3, 4}) {
      omp_set_num_threads(threads);
      std::fill(yp.begin(), yp.end(), 0.0f);
      parallel::linear({x, w, b, yp, rows, in, out});
      CHECK(bitwise_equal(ys, yp));
    }
  }
}

TEST_CASE("linear computes bias plus row-major dot products") {
  const std::vector<float> x{1, 2, 3, 4}, w{1, 0, 0, 1, 1, 1}, b{0.5f, -1, 2};
  std::vector<float> y(2 * 3);
  serial::linear({x, w, b, y, 2, 2, 3});
  CHECK(y == std::vector<float>{1.5f, 1, 5, 3.5f, 3, 9});
}

TEST_CASE("parallel attention, layer norm and gelu match serial bitwise") {
  gen::Rng rng(2);
  const std::size_t d = 64, heads = 4;
  for (auto [rows, offset] : {std::array<std::size_t, 2>{1, 200}, {96, 0}, {40, 17}}) {
    const std::size_t keys = offset + rows;
    const auto q = random_vec(rng, rows * d, 2.0), k = random_vec(rng, keys * d, 2.0),
               v = random_vec(rng, keys * d);
    std::vector<float> os(rows * d), op(rows * d);
    serial::attention({q, k, v, os, rows, offset, d, heads});
    for (int threads : {1, 2, 4}) {
      omp_set_num_threads(threads);
      parallel::attention({q, k, v, op, rows, offset, d, heads});
      CHECK(bitwise_equal(os, op));
    }
  }
  const std::size_t rows = 600;
  const auto x = random_vec(rng, rows * d, 3.0), g = random_vec(rng, d), b = random_vec(rng, d);
  std::vector<float> ls(rows * d), lp(rows * d);
  serial::layer_norm(x, g, b, ls, rows, d);
  omp_set_num_threads(3);
  parallel::layer_norm(x, g, b, lp, rows, d);
  CHECK(bitwise_equal(ls, lp));

  auto gs = random_vec(rng, 70000, 4.0);
  auto gp = gs;
  serial::gelu_inplace(gs);
  parallel::gelu_inplace(gp);
  CHECK(bitwise_equal(gs, gp));
  omp_set_num_threads(1);
}

TEST_CASE("softmax rows sum to one") {
  gen::Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    auto row = random_vec(rng, 1 + rng.below(300), 30.0);
    softmax_inplace(row);
    double s = 0;
    for (float p : row) {
      CHECK(p >= 0.0f);
      s += p;
    }
    CHECK(std::fabs(s - 1.0) < 1e-6);
  }
  std::vector<float> big{1000.0f, 1000.0f};
  softmax_inplace(big);
  CHECK(big[0] == 0.5f);
}

TEST_CASE("attention of a single key returns its value") {
  const std::vector<float> q{1, 2, 3, 4}, k{0.3f, 0.1f, -2, 5}, v{9, 8, 7, 6};
  std::vector<float> out(4);
  serial::attention({q, k, v, out, 1, 0, 4, 2});
  CHECK(out == v);
}

TEST_CASE("gelu agrees with the erf form in double") {
  for (double x = -6.0; x <= 6.0; x += 0.01) {
    const double ref = 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
    CHECK(std::fabs(gelu(static_cast<float>(x)) - ref) < 1e-5);
  }
}

TEST_CASE("layer norm output has zero mean and unit variance with identity affine") {
  gen::Rng rng(4);
  const std::size_t d = 64;
  const auto x = random_vec(rng, d, 5.0);
  const std::vector<float> g(d, 1.0f), b(d, 0.0f);
  std::vector<float> y(d);
  serial::layer_norm(x, g, b, y, 1, d);
  double m = 0, v = 0;
  for (float e : y) m += e;
  m /= d;
  for (float e : y) v += (e - m) * (e - m);
  v /= d;
  CHECK(std::fabs(m) < 1e-5);
  CHECK(std::fabs(v - 1.0) < 1e-3);
}
