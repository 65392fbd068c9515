#pragma once

#include <cstddef>
#include <span>

// Dense kernels behind the micro transformer.
//
// Every output element is produced by exactly one loop with a fixed
// summation order (reduction index ascending). The parallel variants only
// distribute output elements across threads, so serial and parallel results
// are bit-identical for any thread count. Build with -ffp-contract=off to keep
// that true on FMA-capable targets.
namespace densesteer::kernels {

enum class Policy { kSerial, kParallel };

inline constexpr float kLayerNormEps = 1e-5f;

// Row-major shapes: x[rows][in], w[out][in], bias[out], y[rows][out].
struct LinearArgs {
  std::span<const float> x;
  std::span<const float> w;
  std::span<const float> bias;
  std::span<float> y;
  std::size_t rows = 0;
  std::size_t in = 0;
  std::size_t out = 0;
};

// Causal multi-head attention of `rows` query rows against a key/value cache.
// Query row r sits at absolute position q_offset + r and attends to cache rows
// 0..q_offset + r. q, out: [rows][d]; k, v: [>= q_offset + rows][d].
struct AttentionArgs {
  std::span<const float> q;
  std::span<const float> k;
  std::span<const float> v;
  std::span<float> out;
  std::size_t rows = 0;
  std::size_t q_offset = 0;
  std::size_t d_model = 0;
  std::size_t n_heads = 0;
};

// In-place numerically stable softmax (max-subtracted, ascending sum).
void softmax_inplace(std::span<float> row);

float gelu(float x);

namespace serial {
void linear(const LinearArgs& a);
void attention(const AttentionArgs& a);
void layer_norm(std::span<const float> x, std::span<const float> gamma,
                std::span<const float> beta, std::span<float> y, std::size_t rows,
                std::size_t dim);
void gelu_inplace(std::span<float> x);
}  // namespace serial

namespace parallel {
void linear(const LinearArgs& a);
void attention(const AttentionArgs& a);
void layer_norm(std::span<const float> x, std::span<const float> gamma,
                std::span<const float> beta, std::span<float> y, std::size_t rows,
                std::size_t dim);
void gelu_inplace(std::span<float> x);
}  // namespace parallel

// Dispatch helpers used by the model.
void linear(Policy p, const LinearArgs& a);
void attention(Policy p, const AttentionArgs& a);
void layer_norm(Policy p, std::span<const float> x, std::span<const float> gamma,
                std::span<const float> beta, std::span<float> y, std::size_t rows,
                std::size_t dim);
void gelu_inplace(Policy p, std::span<float> x);

// Threads the parallel kernels may use (1 when built without OpenMP).
int max_threads();

}  // namespace densesteer::kernels
