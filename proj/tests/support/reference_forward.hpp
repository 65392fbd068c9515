#pragma once

// Straight-line double-precision forward pass over MicroWeights. Shares no
// code with the library kernels; used as the oracle for logits and states.

#include <cmath>
#include <cstddef>
#include <vector>

#include "densesteer/model.hpp"

namespace oracle {

struct RefOutput {
  std::size_t T = 0, d = 0, vocab = 0, n_layers = 0;
  std::vector<double> logits;  // [T][vocab]
  std::vector<double> states;  // [n_layers][T][d]

  double logit(std::size_t t, std::size_t v) const { return logits[t * vocab + v]; }
  double state(std::size_t l, std::size_t t, std::size_t k) const {
    return states[(l * T + t) * d + k];
  }
};

struct RefHook {
  std::size_t layer = 0;
  std::vector<float> vector;
  double lambda = 0.0;
  std::size_t first_position = 0;  // injected at positions >= this
};

inline void ref_layer_norm(const std::vector<double>& x, const std::vector<float>& g,
                           const std::vector<float>& b, std::vector<double>& y) {
  const std::size_t n = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  y.resize(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = (x[i] - mean) / std::sqrt(var + 1e-5) * g[i] + b[i];
}

// y = W x + b with W stored [out][in].
inline std::vector<double> ref_affine(const std::vector<float>& W, const std::vector<float>& b,
                                      const std::vector<double>& x, std::size_t out) {
  const std::size_t in = x.size();
  std::vector<double> y(out);
  for (std::size_t o = 0; o < out; ++o) {
    double s = b[o];
    for (std::size_t i = 0; i < in; ++i) s += static_cast<double>(W[o * in + i]) * x[i];
    y[o] = s;
  }
  return y;
}

inline RefOutput reference_forward(const densesteer::MicroWeights& w,
                                   const std::vector<densesteer::TokenId>& ids,
                                   const RefHook* hook = nullptr) {
  const auto& c = w.config;
  RefOutput r;
  r.T = ids.size();
  r.d = static_cast<std::size_t>(c.d_model);
  r.vocab = static_cast<std::size_t>(c.vocab_size);
  r.n_layers = static_cast<std::size_t>(c.n_layers);
  const std::size_t d = r.d, T = r.T, H = static_cast<std::size_t>(c.n_heads), hd = d / H;
  const std::size_t ff = static_cast<std::size_t>(c.d_ff);

  std::vector<std::vector<double>> x(T, std::vector<double>(d));
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t k = 0; k < d; ++k) {
      x[t][k] = static_cast<double>(w.tok_emb[static_cast<std::size_t>(ids[t]) * d + k]) +
                static_cast<double>(w.pos_emb[t * d + k]);
    }
  }
  r.states.assign(r.n_layers * T * d, 0.0);

  for (std::size_t l = 0; l < r.n_layers; ++l) {
    const auto& L = w.layers[l];
    std::vector<std::vector<double>> q(T), k(T), v(T);
    for (std::size_t t = 0; t < T; ++t) {
      std::vector<double> a;
      ref_layer_norm(x[t], L.ln1_gamma, L.ln1_beta, a);
      q[t] = ref_affine(L.wq, L.bq, a, d);
      k[t] = ref_affine(L.wk, L.bk, a, d);
      v[t] = ref_affine(L.wv, L.bv, a, d);
    }
    for (std::size_t t = 0; t < T; ++t) {
      std::vector<double> att(d, 0.0);
      for (std::size_t h = 0; h < H; ++h) {
        std::vector<double> s(t + 1);
        double mx = -1e300;
        for (std::size_t j = 0; j <= t; ++j) {
          double dot = 0.0;
          for (std::size_t e = 0; e < hd; ++e) dot += q[t][h * hd + e] * k[j][h * hd + e];
          s[j] = dot / std::sqrt(static_cast<double>(hd));
          mx = std::max(mx, s[j]);
        }
        double z = 0.0;
        for (double& sj : s) z += (sj = std::exp(sj - mx));
        for (std::size_t j = 0; j <= t; ++j) {
          for (std::size_t e = 0; e < hd; ++e) att[h * hd + e] += s[j] / z * v[j][h * hd + e];
        }
      }
      const std::vector<double> o = ref_affine(L.wo, L.bo, att, d);
      for (std::size_t e = 0; e < d; ++e) x[t][e] += o[e];

      std::vector<double> a;
      ref_layer_norm(x[t], L.ln2_gamma, L.ln2_beta, a);
      std::vector<double> m = ref_affine(L.w1, L.b1, a, ff);
      for (double& mv : m) mv = 0.5 * mv * (1.0 + std::erf(mv / std::sqrt(2.0)));
      const std::vector<double> o2 = ref_affine(L.w2, L.b2, m, d);
      for (std::size_t e = 0; e < d; ++e) x[t][e] += o2[e];
    }
    for (std::size_t t = 0; t < T; ++t) {
      if (hook != nullptr && hook->layer == l && t >= hook->first_position) {
        for (std::size_t e = 0; e < d; ++e) x[t][e] += hook->lambda * hook->vector[e];
      }
      for (std::size_t e = 0; e < d; ++e) r.states[(l * T + t) * d + e] = x[t][e];
    }
  }

  r.logits.assign(T * r.vocab, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<double> a;
    ref_layer_norm(x[t], w.lnf_gamma, w.lnf_beta, a);
    const std::vector<double> lg = ref_affine(w.head_w, w.head_b, a, r.vocab);
    for (std::size_t v = 0; v < r.vocab; ++v) r.logits[t * r.vocab + v] = lg[v];
  }
  return r;
}

// -log softmax(row)[token] in long double, written out directly.
inline double ref_token_nll(const double* row, std::size_t vocab, std::size_t token) {
  long double mx = row[0];
  for (std::size_t i = 1; i < vocab; ++i) mx = std::max<long double>(mx, row[i]);
  long double z = 0.0L;
  for (std::size_t i = 0; i < vocab; ++i) z += std::exp(static_cast<long double>(row[i]) - mx);
  return static_cast<double>(-(static_cast<long double>(row[token]) - mx - std::log(z)));
}

}  // namespace oracle
