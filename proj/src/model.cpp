#include "densesteer/model.hpp"

#include <utility>
#include <cmath>
#include <random>

#include "densesteer/errors.hpp"
#include "densesteer/io.hpp"
#include "densesteer/weights_io.hpp"

namespace densesteer {

void ModelConfig::validate() const {
  const auto fail = [](const std::string& m) { throw ConfigError("invalid model config: " + m); };
  if (n_layers < 1) fail("n_layers must be >= 1");
  if (d_model < 1) fail("d_model must be >= 1");
  if (n_heads < 1) fail("n_heads must be >= 1");
  if (d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
  if (d_ff < 1) fail("d_ff must be >= 1");
  if (vocab_size < 2) fail("vocab_size must be >= 2");
  if (max_seq_len < 2) fail("max_seq_len must be >= 2");
}

std::string_view to_string(PositionPolicy p) {
  return p == PositionPolicy::kGeneratedOnly ? "generated-only" : "all-positions";
}

PositionPolicy parse_position_policy(std::string_view s) {
  if (s == "generated-only") return PositionPolicy::kGeneratedOnly;
  if (s == "all-positions") return PositionPolicy::kAllPositions;
  throw ConfigError("unknown position policy: " + std::string(s));
}

TokenId argmax_token(std::span<const float> logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return static_cast<TokenId>(best);
}

void LanguageModel::check_hook(const InjectionHook* hook) const {
  if (hook == nullptr) return;
  if (hook->layer >= static_cast<std::size_t>(config().n_layers)) {
    throw ShapeError("hook layer " + std::to_string(hook->layer) + " out of range");
  }
  if (hook->vector.size() != static_cast<std::size_t>(config().d_model)) {
    throw ShapeError("hook vector has " + std::to_string(hook->vector.size()) +
                     " elements, model d_model is " + std::to_string(config().d_model));
  }
}

void LanguageModel::check_generation(std::span<const TokenId> prompt,
                                     std::size_t max_new_tokens) const {
  if (prompt.empty()) throw LengthError("generation needs a non-empty prompt");
  const auto limit = static_cast<std::size_t>(config().max_seq_len);
  if (prompt.size() > limit || max_new_tokens > limit - prompt.size()) {
    throw LengthError("prompt (" + std::to_string(prompt.size()) + ") + max_new_tokens (" +
                      std::to_string(max_new_tokens) + ") exceeds max_seq_len " +
                      std::to_string(limit));
  }
}

std::vector<TokenId> encode_prompt(const LanguageModel& model, std::string_view text) {
  std::vector<TokenId> ids{model.bos_id()};
  const std::vector<TokenId> body = model.tokenize(text);
  ids.insert(ids.end(), body.begin(), body.end());
  return ids;
}

namespace {

template <typename Self>
auto collect_tensors(Self& w) {
  using Vec = std::conditional_t<std::is_const_v<Self>, const std::vector<float>,
                                 std::vector<float>>;
  std::vector<BasicTensorRef<Vec>> out;
  const ModelConfig& c = w.config;
  const auto add = [&](std::string name, std::vector<std::int64_t> shape, Vec& v) {
    out.push_back({std::move(name), std::move(shape), &v});
  };
  add("tok_emb", {c.vocab_size, c.d_model}, w.tok_emb);
  add("pos_emb", {c.max_seq_len, c.d_model}, w.pos_emb);
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    auto& L = w.layers[l];
    const std::string p = "layers." + std::to_string(l) + ".";
    add(p + "ln1.gamma", {c.d_model}, L.ln1_gamma);
    add(p + "ln1.beta", {c.d_model}, L.ln1_beta);
    add(p + "attn.wq", {c.d_model, c.d_model}, L.wq);
    add(p + "attn.bq", {c.d_model}, L.bq);
    add(p + "attn.wk", {c.d_model, c.d_model}, L.wk);
    add(p + "attn.bk", {c.d_model}, L.bk);
    add(p + "attn.wv", {c.d_model, c.d_model}, L.wv);
    add(p + "attn.bv", {c.d_model}, L.bv);
    add(p + "attn.wo", {c.d_model, c.d_model}, L.wo);
    add(p + "attn.bo", {c.d_model}, L.bo);
    add(p + "ln2.gamma", {c.d_model}, L.ln2_gamma);
    add(p + "ln2.beta", {c.d_model}, L.ln2_beta);
    add(p + "mlp.w1", {c.d_ff, c.d_model}, L.w1);
    add(p + "mlp.b1", {c.d_ff}, L.b1);
    add(p + "mlp.w2", {c.d_model, c.d_ff}, L.w2);
    add(p + "mlp.b2", {c.d_model}, L.b2);
  }
  add("lnf.gamma", {c.d_model}, w.lnf_gamma);
  add("lnf.beta", {c.d_model}, w.lnf_beta);
  add("head.w", {c.vocab_size, c.d_model}, w.head_w);
  add("head.b", {c.vocab_size}, w.head_b);
  return out;
}

class UniformSource {
 public:
  explicit UniformSource(std::uint64_t seed) : gen_(seed) {}

  void fill(std::vector<float>& v, std::size_t n, double scale) {
    v.resize(n);
    for (float& x : v) {
      const double u = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
      x = static_cast<float>((2.0 * u - 1.0) * scale);
    }
  }

 private:
  std::mt19937_64 gen_;
};

std::vector<float> constant(std::size_t n, float value) { return std::vector<float>(n, value); }

}  // namespace

std::vector<TensorRef> MicroWeights::tensors() { return collect_tensors(*this); }
std::vector<ConstTensorRef> MicroWeights::tensors() const { return collect_tensors(*this); }

MicroWeights init_micro_weights(const ModelConfig& config) {
  config.validate();
  const auto d = static_cast<std::size_t>(config.d_model);
  const auto ff = static_cast<std::size_t>(config.d_ff);
  const auto vocab = static_cast<std::size_t>(config.vocab_size);
  const auto seq = static_cast<std::size_t>(config.max_seq_len);
  const double s_d = std::sqrt(3.0 / static_cast<double>(d));
  const double s_ff = std::sqrt(3.0 / static_cast<double>(ff));

  UniformSource rng(config.seed);
  MicroWeights w;
  w.config = config;
  rng.fill(w.tok_emb, vocab * d, 1.0);
  rng.fill(w.pos_emb, seq * d, 0.5);
  w.layers.resize(static_cast<std::size_t>(config.n_layers));
  for (LayerWeights& L : w.layers) {
    L.ln1_gamma = constant(d, 1.0f);
    L.ln1_beta = constant(d, 0.0f);
    rng.fill(L.wq, d * d, s_d);
    L.bq = constant(d, 0.0f);
    rng.fill(L.wk, d * d, s_d);
    L.bk = constant(d, 0.0f);
    rng.fill(L.wv, d * d, s_d);
    L.bv = constant(d, 0.0f);
    rng.fill(L.wo, d * d, s_d);
    L.bo = constant(d, 0.0f);
    L.ln2_gamma = constant(d, 1.0f);
    L.ln2_beta = constant(d, 0.0f);
    rng.fill(L.w1, ff * d, s_d);
    L.b1 = constant(ff, 0.0f);
    rng.fill(L.w2, d * ff, s_ff);
    L.b2 = constant(d, 0.0f);
  }
  w.lnf_gamma = constant(d, 1.0f);
  w.lnf_beta = constant(d, 0.0f);
  rng.fill(w.head_w, vocab * d, s_d);
  w.head_b = constant(vocab, 0.0f);
  return w;
}

struct MicroModel::KvCache {
  // Per layer, [capacity][d_model].
  std::vector<std::vector<float>> k;
  std::vector<std::vector<float>> v;

  KvCache(std::size_t n_layers, std::size_t capacity, std::size_t d)
      : k(n_layers, std::vector<float>(capacity * d)), v(n_layers, std::vector<float>(capacity * d)) {}
};

MicroModel::MicroModel(MicroWeights weights, kernels::Policy policy)
    : w_(std::move(weights)), policy_(policy) {
  w_.config.validate();
  for (const ConstTensorRef& t : std::as_const(w_).tensors()) {
    std::int64_t n = 1;
    for (std::int64_t s : t.shape) n *= s;
    if (t.data->size() != static_cast<std::size_t>(n)) {
      throw ShapeError("tensor " + t.name + " has " + std::to_string(t.data->size()) +
                       " values, expected " + std::to_string(n));
    }
  }
  fingerprint_ = sha256_hex(serialize_weights(w_));
}

void MicroModel::run_rows(std::span<const TokenId> ids, std::size_t first_pos, KvCache& cache,
                          const InjectionHook* hook, std::size_t prompt_length,
                          HiddenStates* states, std::vector<float>* logits,
                          bool last_row_logits_only) const {
  using kernels::AttentionArgs;
  using kernels::LinearArgs;
  const ModelConfig& c = w_.config;
  const auto d = static_cast<std::size_t>(c.d_model);
  const auto ff = static_cast<std::size_t>(c.d_ff);
  const auto vocab = static_cast<std::size_t>(c.vocab_size);
  const std::size_t rows = ids.size();

  // Residual stream in double; branch inputs are rounded to float.
  std::vector<double> x(rows * d);
  for (std::size_t r = 0; r < rows; ++r) {
    const TokenId id = ids[r];
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw DomainError("token id " + std::to_string(id) + " outside the vocabulary");
    }
    const float* te = w_.tok_emb.data() + static_cast<std::size_t>(id) * d;
    const float* pe = w_.pos_emb.data() + (first_pos + r) * d;
    for (std::size_t k = 0; k < d; ++k) {
      x[r * d + k] = static_cast<double>(te[k]) + static_cast<double>(pe[k]);
    }
  }

  std::vector<float> xf(rows * d), h(rows * d), q(rows * d), att(rows * d), proj(rows * d),
      mid(rows * ff);
  const auto narrow = [&] {
    for (std::size_t i = 0; i < rows * d; ++i) xf[i] = static_cast<float>(x[i]);
  };
  const auto add_branch = [&] {
    for (std::size_t i = 0; i < rows * d; ++i) x[i] += static_cast<double>(proj[i]);
  };
  for (std::size_t l = 0; l < w_.layers.size(); ++l) {
    const LayerWeights& L = w_.layers[l];
    float* kc = cache.k[l].data() + first_pos * d;
    float* vc = cache.v[l].data() + first_pos * d;

    narrow();
    kernels::layer_norm(policy_, xf, L.ln1_gamma, L.ln1_beta, h, rows, d);
    kernels::linear(policy_, LinearArgs{h, L.wq, L.bq, q, rows, d, d});
    kernels::linear(policy_, LinearArgs{h, L.wk, L.bk, {kc, rows * d}, rows, d, d});
    kernels::linear(policy_, LinearArgs{h, L.wv, L.bv, {vc, rows * d}, rows, d, d});
    kernels::attention(policy_, AttentionArgs{q, cache.k[l], cache.v[l], att, rows, first_pos, d,
                                              static_cast<std::size_t>(c.n_heads)});
    kernels::linear(policy_, LinearArgs{att, L.wo, L.bo, proj, rows, d, d});
    add_branch();

    narrow();
    kernels::layer_norm(policy_, xf, L.ln2_gamma, L.ln2_beta, h, rows, d);
    kernels::linear(policy_, LinearArgs{h, L.w1, L.b1, mid, rows, d, ff});
    kernels::gelu_inplace(policy_, mid);
    kernels::linear(policy_, LinearArgs{mid, L.w2, L.b2, proj, rows, ff, d});
    add_branch();

    // lambda == 0 is skipped so a zero hook is a bitwise no-op.
    if (hook != nullptr && hook->layer == l && hook->lambda != 0.0) {
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t pos = first_pos + r;
        if (hook->policy == PositionPolicy::kGeneratedOnly && pos < prompt_length) continue;
        double* xr = x.data() + r * d;
        for (std::size_t k = 0; k < d; ++k) xr[k] += hook->lambda * static_cast<double>(hook->vector[k]);
      }
    }
    if (states != nullptr) {
      for (std::size_t r = 0; r < rows; ++r) {
        auto dst = states->at(l, first_pos + r);
        std::copy_n(x.data() + r * d, d, dst.data());
      }
    }
  }

  if (logits == nullptr) return;
  const std::size_t first_row = last_row_logits_only ? rows - 1 : 0;
  const std::size_t n_out = rows - first_row;
  narrow();
  std::span<const float> xs(xf.data() + first_row * d, n_out * d);
  std::vector<float> hf(n_out * d);
  kernels::layer_norm(policy_, xs, w_.lnf_gamma, w_.lnf_beta, hf, n_out, d);
  logits->assign(n_out * vocab, 0.0f);
  kernels::linear(policy_, LinearArgs{hf, w_.head_w, w_.head_b, *logits, n_out, d, vocab});
}

ForwardResult MicroModel::forward(std::span<const TokenId> ids, const InjectionHook* hook,
                                  std::size_t prompt_length) const {
  const ModelConfig& c = w_.config;
  if (ids.empty()) throw LengthError("forward needs at least one token");
  if (ids.size() > static_cast<std::size_t>(c.max_seq_len)) {
    throw LengthError("sequence of " + std::to_string(ids.size()) + " tokens exceeds max_seq_len " +
                      std::to_string(c.max_seq_len));
  }
  check_hook(hook);

  const std::size_t T = ids.size();
  const auto d = static_cast<std::size_t>(c.d_model);
  ForwardResult out;
  out.seq_len = T;
  out.vocab_size = static_cast<std::size_t>(c.vocab_size);
  out.states.n_layers = static_cast<std::size_t>(c.n_layers);
  out.states.seq_len = T;
  out.states.d_model = d;
  out.states.data.assign(out.states.n_layers * T * d, 0.0);

  KvCache cache(out.states.n_layers, T, d);
  run_rows(ids, 0, cache, hook, prompt_length, &out.states, &out.logits, false);
  return out;
}

std::vector<TokenId> MicroModel::greedy_generate(std::span<const TokenId> prompt,
                                                 std::size_t max_new_tokens,
                                                 const InjectionHook* hook) const {
  check_generation(prompt, max_new_tokens);
  check_hook(hook);
  std::vector<TokenId> out;
  if (max_new_tokens == 0) return out;

  const auto d = static_cast<std::size_t>(w_.config.d_model);
  const std::size_t prompt_length = prompt.size();
  KvCache cache(w_.layers.size(), prompt_length + max_new_tokens, d);
  std::vector<float> logits;
  run_rows(prompt, 0, cache, hook, prompt_length, nullptr, &logits, true);

  std::size_t pos = prompt_length;
  while (true) {
    const TokenId next = argmax_token(logits);
    if (next == eos_id()) break;
    out.push_back(next);
    if (out.size() == max_new_tokens) break;
    run_rows(std::span<const TokenId>(&out.back(), 1), pos, cache, hook, prompt_length, nullptr,
             &logits, true);
    ++pos;
  }
  return out;
}

std::vector<TokenId> MicroModel::greedy_generate_uncached(std::span<const TokenId> prompt,
                                                          std::size_t max_new_tokens,
                                                          const InjectionHook* hook) const {
  check_generation(prompt, max_new_tokens);
  check_hook(hook);
  std::vector<TokenId> seq(prompt.begin(), prompt.end());
  std::vector<TokenId> out;
  while (out.size() < max_new_tokens) {
    const ForwardResult r = forward(seq, hook, prompt.size());
    const TokenId next = argmax_token(r.logits_at(seq.size() - 1));
    if (next == eos_id()) break;
    out.push_back(next);
    seq.push_back(next);
  }
  return out;
}

MicroModel init_micro_model(const ModelConfig& config, kernels::Policy policy) {
  return MicroModel(init_micro_weights(config), policy);
}

}  // namespace densesteer
