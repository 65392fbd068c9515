#pragma once

// Test doubles for the LanguageModel contract.

#include <functional>
#include <string>
#include <utility>

#include "densesteer/model.hpp"

namespace testing_support {

using densesteer::ForwardResult;
using densesteer::InjectionHook;
using densesteer::ModelConfig;
using densesteer::TokenId;

// Generation is produced by a caller-supplied script of (prompt text, hook).
// forward() returns uniform logits and states that depend on the token ids
// (so steering vectors are nonzero), with hook injection applied.
class ScriptedModel final : public densesteer::LanguageModel {
 public:
  using Script = std::function<std::string(const std::string& prompt, const InjectionHook* hook)>;

  explicit ScriptedModel(Script script, std::string fingerprint = "scripted-model")
      : script_(std::move(script)), fingerprint_(std::move(fingerprint)) {
    config_.n_layers = 4;
    config_.d_model = 8;
    config_.n_heads = 2;
    config_.d_ff = 16;
    config_.max_seq_len = 4096;
  }

  const ModelConfig& config() const override { return config_; }
  const std::string& fingerprint() const override { return fingerprint_; }

  ForwardResult forward(std::span<const TokenId> ids, const InjectionHook* hook = nullptr,
                        std::size_t prompt_length = 0) const override {
    check_hook(hook);
    ForwardResult r;
    r.seq_len = ids.size();
    r.vocab_size = static_cast<std::size_t>(config_.vocab_size);
    r.logits.assign(r.seq_len * r.vocab_size, 0.0f);
    auto& s = r.states;
    s.n_layers = 4;
    s.seq_len = ids.size();
    s.d_model = 8;
    s.data.assign(s.n_layers * s.seq_len * s.d_model, 0.0);
    for (std::size_t l = 0; l < s.n_layers; ++l) {
      for (std::size_t t = 0; t < s.seq_len; ++t) {
        auto row = s.at(l, t);
        for (std::size_t k = 0; k < 8; ++k) {
          row[k] = static_cast<double>((ids[t] * 31 + static_cast<int>(k * 7 + l * 3 + t)) % 17) /
                   16.0;
        }
        if (hook != nullptr && hook->layer == l && hook->lambda != 0.0 &&
            (hook->policy == densesteer::PositionPolicy::kAllPositions || t >= prompt_length)) {
          for (std::size_t k = 0; k < 8; ++k) row[k] += hook->lambda * hook->vector[k];
        }
      }
    }
    return r;
  }

  std::vector<TokenId> greedy_generate(std::span<const TokenId> prompt, std::size_t max_new,
                                       const InjectionHook* hook = nullptr) const override {
    check_generation(prompt, max_new);
    check_hook(hook);
    std::vector<TokenId> body(prompt.begin() + 1, prompt.end());
    std::vector<TokenId> out = tokenize(script_(detokenize(body), hook));
    if (out.size() > max_new) out.resize(max_new);
    return out;
  }

 private:
  Script script_;
  std::string fingerprint_;
  ModelConfig config_;
};

}  // namespace testing_support
