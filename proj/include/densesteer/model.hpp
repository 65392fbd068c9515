#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "densesteer/kernels.hpp"
#include "densesteer/tokenizer.hpp"

namespace densesteer {

struct ModelConfig {
  std::int64_t n_layers = 4;
  std::int64_t d_model = 64;
  std::int64_t n_heads = 4;
  std::int64_t d_ff = 256;
  std::int64_t vocab_size = ByteTokenizer::kVocabSize;
  std::int64_t max_seq_len = 4096;
  std::uint64_t seed = 42;

  // Throws ConfigError.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

enum class PositionPolicy { kGeneratedOnly, kAllPositions };

std::string_view to_string(PositionPolicy p);
PositionPolicy parse_position_policy(std::string_view s);

// Adds lambda * vector to the output of block `layer` at the positions picked
// by `policy`, before it feeds the next block.
struct InjectionHook {
  std::size_t layer = 0;
  std::vector<float> vector;
  double lambda = 0.0;
  PositionPolicy policy = PositionPolicy::kGeneratedOnly;
};

// Block outputs (the residual stream), [n_layers][seq_len][d_model]. The
// residual stream is carried in double so an injected lambda * v survives
// exactly; the attention and MLP branches run in float.
struct HiddenStates {
  std::size_t n_layers = 0;
  std::size_t seq_len = 0;
  std::size_t d_model = 0;
  std::vector<double> data;

  std::span<const double> at(std::size_t layer, std::size_t pos) const {
    return {data.data() + (layer * seq_len + pos) * d_model, d_model};
  }
  std::span<double> at(std::size_t layer, std::size_t pos) {
    return {data.data() + (layer * seq_len + pos) * d_model, d_model};
  }
};

struct ForwardResult {
  std::size_t seq_len = 0;
  std::size_t vocab_size = 0;
  std::vector<float> logits;  // [seq_len][vocab_size]
  HiddenStates states;

  std::span<const float> logits_at(std::size_t pos) const {
    return {logits.data() + pos * vocab_size, vocab_size};
  }
};

// Lowest index wins ties.
TokenId argmax_token(std::span<const float> logits);

// Contract every backend implements. Implementations are immutable once built
// and safe to share between threads.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual const ModelConfig& config() const = 0;

  // Identifies the weights; steering vectors record it.
  virtual const std::string& fingerprint() const = 0;

  // Causal forward pass. With a generated-only hook, positions >= prompt_length
  // are injected. Throws LengthError, ShapeError.
  virtual ForwardResult forward(std::span<const TokenId> ids, const InjectionHook* hook = nullptr,
                                std::size_t prompt_length = 0) const = 0;

  // Argmax decoding until EOS (not emitted) or max_new_tokens.
  virtual std::vector<TokenId> greedy_generate(std::span<const TokenId> prompt,
                                               std::size_t max_new_tokens,
                                               const InjectionHook* hook = nullptr) const = 0;

  virtual std::vector<TokenId> tokenize(std::string_view text) const {
    return ByteTokenizer::tokenize(text);
  }
  virtual std::string detokenize(std::span<const TokenId> ids) const {
    return ByteTokenizer::detokenize(ids);
  }
  virtual TokenId bos_id() const { return ByteTokenizer::kBos; }
  virtual TokenId eos_id() const { return ByteTokenizer::kEos; }
  virtual TokenId pad_id() const { return ByteTokenizer::kPad; }

  // Shared validation for implementations.
  void check_hook(const InjectionHook* hook) const;
  void check_generation(std::span<const TokenId> prompt, std::size_t max_new_tokens) const;
};

// BOS followed by the tokens of `text`.
std::vector<TokenId> encode_prompt(const LanguageModel& model, std::string_view text);

struct LayerWeights {
  std::vector<float> ln1_gamma, ln1_beta;
  std::vector<float> wq, bq, wk, bk, wv, bv, wo, bo;
  std::vector<float> ln2_gamma, ln2_beta;
  std::vector<float> w1, b1, w2, b2;
};

template <typename Vec>
struct BasicTensorRef {
  std::string name;
  std::vector<std::int64_t> shape;
  Vec* data;
};
using TensorRef = BasicTensorRef<std::vector<float>>;
using ConstTensorRef = BasicTensorRef<const std::vector<float>>;

struct MicroWeights {
  ModelConfig config;
  std::vector<float> tok_emb;  // [vocab][d]
  std::vector<float> pos_emb;  // [max_seq_len][d]
  std::vector<LayerWeights> layers;
  std::vector<float> lnf_gamma, lnf_beta;
  std::vector<float> head_w;  // [vocab][d]
  std::vector<float> head_b;  // [vocab]

  // Every tensor in canonical order. This order is the initialization fill
  // order and the on-disk order.
  std::vector<TensorRef> tensors();
  std::vector<ConstTensorRef> tensors() const;
};

// Deterministic weights from config.seed.
//
// Generator: std::mt19937_64 seeded with config.seed. A draw u in [0, 1) is
// (next() >> 11) * 2^-53 and maps to (2u - 1) * scale, rounded to float.
// Tensors are filled in canonical order, each row-major:
//   tok_emb (scale 1), pos_emb (scale 0.5), then per layer wq, wk, wv, wo
//   (scale sqrt(3 / d_model)), w1 (sqrt(3 / d_model)), w2 (sqrt(3 / d_ff)),
//   then head_w (sqrt(3 / d_model)).
// Biases and layer-norm betas are zero and gammas one; they consume no draws.
MicroWeights init_micro_weights(const ModelConfig& config);

class MicroModel final : public LanguageModel {
 public:
  explicit MicroModel(MicroWeights weights,
                      kernels::Policy policy = kernels::Policy::kParallel);

  const ModelConfig& config() const override { return w_.config; }
  const std::string& fingerprint() const override { return fingerprint_; }
  const MicroWeights& weights() const { return w_; }
  kernels::Policy kernel_policy() const { return policy_; }

  ForwardResult forward(std::span<const TokenId> ids, const InjectionHook* hook = nullptr,
                        std::size_t prompt_length = 0) const override;

  std::vector<TokenId> greedy_generate(std::span<const TokenId> prompt,
                                       std::size_t max_new_tokens,
                                       const InjectionHook* hook = nullptr) const override;

  // Re-runs the full prefix at every step. Reference for the cached path.
  std::vector<TokenId> greedy_generate_uncached(std::span<const TokenId> prompt,
                                                std::size_t max_new_tokens,
                                                const InjectionHook* hook = nullptr) const;

 private:
  struct KvCache;
  void run_rows(std::span<const TokenId> ids, std::size_t first_pos, KvCache& cache,
                const InjectionHook* hook, std::size_t prompt_length, HiddenStates* states,
                std::vector<float>* logits, bool last_row_logits_only) const;

  MicroWeights w_;
  kernels::Policy policy_;
  std::string fingerprint_;
};

MicroModel init_micro_model(const ModelConfig& config,
                            kernels::Policy policy = kernels::Policy::kParallel);

}  // namespace densesteer
