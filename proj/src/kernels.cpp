#include "densesteer/kernels.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace densesteer::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::int64_t kParallelWork = 1 << 15;

inline float dot(const float* a, const float* b, std::size_t n) {
  float acc = 0.0f;
  for (std::size_t k = 0; k < n; ++k) acc += a[k] * b[k];
  return acc;
}

inline void linear_element(const LinearArgs& a, std::size_t r, std::size_t o) {
  const float* xr = a.x.data() + r * a.in;
  const float* wo = a.w.data() + o * a.in;
  const float b = a.bias.empty() ? 0.0f : a.bias[o];
  a.y[r * a.out + o] = b + dot(xr, wo, a.in);
}

// One (query row, head) unit of causal attention. `scores` is scratch of at
// least q_offset + r + 1 floats.
inline void attention_unit(const AttentionArgs& a, std::size_t r, std::size_t h,
                           std::vector<float>& scores) {
  const std::size_t hd = a.d_model / a.n_heads;
  const std::size_t pos = a.q_offset + r;
  const std::size_t n_keys = pos + 1;
  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
  const float* qh = a.q.data() + r * a.d_model + h * hd;

  scores.resize(n_keys);
  for (std::size_t j = 0; j < n_keys; ++j) {
    scores[j] = dot(qh, a.k.data() + j * a.d_model + h * hd, hd) * scale;
  }
  softmax_inplace(std::span<float>(scores.data(), n_keys));

  float* oh = a.out.data() + r * a.d_model + h * hd;
  for (std::size_t c = 0; c < hd; ++c) {
    float acc = 0.0f;
    for (std::size_t j = 0; j < n_keys; ++j) acc += scores[j] * a.v[j * a.d_model + h * hd + c];
    oh[c] = acc;
  }
}

inline void layer_norm_row(const float* x, const float* gamma, const float* beta, float* y,
                           std::size_t dim) {
  float mean = 0.0f;
  for (std::size_t k = 0; k < dim; ++k) mean += x[k];
  mean /= static_cast<float>(dim);
  float var = 0.0f;
  for (std::size_t k = 0; k < dim; ++k) var += (x[k] - mean) * (x[k] - mean);
  var /= static_cast<float>(dim);
  const float inv = 1.0f / std::sqrt(var + kLayerNormEps);
  for (std::size_t k = 0; k < dim; ++k) y[k] = (x[k] - mean) * inv * gamma[k] + beta[k];
}

}  // namespace

void softmax_inplace(std::span<float> row) {
  if (row.empty()) return;
  float mx = -std::numeric_limits<float>::infinity();
  for (float v : row) mx = v > mx ? v : mx;
  float sum = 0.0f;
  for (float& v : row) {
    v = std::exp(v - mx);
    sum += v;
  }
  const float inv = 1.0f / sum;
  for (float& v : row) v *= inv;
}

float gelu(float x) {
  return 0.5f * x * (1.0f + std::erf(x * 0.70710678118654752f));
}

namespace serial {

void linear(const LinearArgs& a) {
  for (std::size_t r = 0; r < a.rows; ++r)
    for (std::size_t o = 0; o < a.out; ++o) linear_element(a, r, o);
}

void attention(const AttentionArgs& a) {
  std::vector<float> scores;
  for (std::size_t r = 0; r < a.rows; ++r)
    for (std::size_t h = 0; h < a.n_heads; ++h) attention_unit(a, r, h, scores);
}

void layer_norm(std::span<const float> x, std::span<const float> gamma,
                std::span<const float> beta, std::span<float> y, std::size_t rows,
                std::size_t dim) {
  for (std::size_t r = 0; r < rows; ++r)
    layer_norm_row(x.data() + r * dim, gamma.data(), beta.data(), y.data() + r * dim, dim);
}

void gelu_inplace(std::span<float> x) {
  for (float& v : x) v = gelu(v);
}

}  // namespace serial

namespace parallel {

void linear(const LinearArgs& a) {
  const auto rows = static_cast<std::int64_t>(a.rows);
  const auto out = static_cast<std::int64_t>(a.out);
  const std::int64_t work = rows * out * static_cast<std::int64_t>(a.in);
#pragma omp parallel for collapse(2) schedule(static) if (work >= kParallelWork)
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t o = 0; o < out; ++o)
      linear_element(a, static_cast<std::size_t>(r), static_cast<std::size_t>(o));
}

void attention(const AttentionArgs& a) {
  const auto units = static_cast<std::int64_t>(a.rows * a.n_heads);
  const std::int64_t work =
      static_cast<std::int64_t>(a.rows) * static_cast<std::int64_t>(a.q_offset + a.rows) *
      static_cast<std::int64_t>(a.d_model);
#pragma omp parallel if (work >= kParallelWork)
  {
    std::vector<float> scores;
#pragma omp for schedule(dynamic, 4)
    for (std::int64_t u = 0; u < units; ++u) {
      const auto r = static_cast<std::size_t>(u) / a.n_heads;
      const auto h = static_cast<std::size_t>(u) % a.n_heads;
      attention_unit(a, r, h, scores);
    }
  }
}

void layer_norm(std::span<const float> x, std::span<const float> gamma,
                std::span<const float> beta, std::span<float> y, std::size_t rows,
                std::size_t dim) {
  const auto n = static_cast<std::int64_t>(rows);
  const std::int64_t work = n * static_cast<std::int64_t>(dim) * 4;
#pragma omp parallel for schedule(static) if (work >= kParallelWork)
  for (std::int64_t r = 0; r < n; ++r) {
    const auto off = static_cast<std::size_t>(r) * dim;
    layer_norm_row(x.data() + off, gamma.data(), beta.data(), y.data() + off, dim);
  }
}

void gelu_inplace(std::span<float> x) {
  const auto n = static_cast<std::int64_t>(x.size());
#pragma omp parallel for schedule(static) if (n * 16 >= kParallelWork)
  for (std::int64_t i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] = gelu(x[static_cast<std::size_t>(i)]);
}

}  // namespace parallel

void linear(Policy p, const LinearArgs& a) {
  p == Policy::kParallel ? parallel::linear(a) : serial::linear(a);
}

void attention(Policy p, const AttentionArgs& a) {
  p == Policy::kParallel ? parallel::attention(a) : serial::attention(a);
}

void layer_norm(Policy p, std::span<const float> x, std::span<const float> gamma,
                std::span<const float> beta, std::span<float> y, std::size_t rows,
                std::size_t dim) {
  p == Policy::kParallel ? parallel::layer_norm(x, gamma, beta, y, rows, dim)
                         : serial::layer_norm(x, gamma, beta, y, rows, dim);
}

void gelu_inplace(Policy p, std::span<float> x) {
  p == Policy::kParallel ? parallel::gelu_inplace(x) : serial::gelu_inplace(x);
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace densesteer::kernels
