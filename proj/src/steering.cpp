#include "densesteer/steering.hpp"

#include <cmath>
#include <exception>
#include <optional>

#include "densesteer/errors.hpp"
#include "densesteer/io.hpp"

namespace densesteer {

std::vector<TokenId> extraction_prompt(const LanguageModel& model, std::string_view question,
                                       const ExtractionOptions& opts) {
  if (opts.bare_question) return encode_prompt(model, question);
  return encode_prompt(model, prompts::format_cot(question, opts.style));
}

std::vector<double> final_token_state(const LanguageModel& model, std::string_view question,
                                     std::span<const TokenId> trace_ids, std::size_t layer,
                                     const ExtractionOptions& opts) {
  if (trace_ids.empty()) throw EmptyTrace("cannot take the final state of an empty trace");
  if (layer >= static_cast<std::size_t>(model.config().n_layers)) {
    throw ShapeError("layer " + std::to_string(layer) + " out of range");
  }
  std::vector<TokenId> seq = extraction_prompt(model, question, opts);
  seq.insert(seq.end(), trace_ids.begin(), trace_ids.end());
  const ForwardResult fwd = model.forward(seq);
  const auto row = fwd.states.at(layer, seq.size() - 1);
  return {row.begin(), row.end()};
}

std::vector<double> mean_difference(const LanguageModel& model,
                                    std::span<const ContrastivePair> pairs, std::size_t layer,
                                    const ExtractionOptions& opts) {
  if (pairs.empty()) throw EmptySet("steering vector extraction needs at least one pair");
  const auto d = static_cast<std::size_t>(model.config().d_model);
  const auto n = static_cast<std::int64_t>(pairs.size());

  // States are computed concurrently; the reduction below stays sequential.
  std::vector<std::vector<double>> pos(pairs.size()), neg(pairs.size());
  std::vector<std::exception_ptr> errors(pairs.size());
#pragma omp parallel for schedule(dynamic) num_threads(opts.workers > 0 ? opts.workers : 1)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      const ContrastivePair& p = pairs[k];
      pos[k] = final_token_state(model, p.question, p.positive.token_ids, layer, opts);
      neg[k] = final_token_state(model, p.question, p.negative.token_ids, layer, opts);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (std::size_t k = 0; k < errors.size(); ++k) {
    if (!errors[k]) continue;
    try {
      std::rethrow_exception(errors[k]);
    } catch (const LengthError& e) {
      throw LengthError("pair " + std::to_string(k) + ": " + e.what());
    } catch (const EmptyTrace& e) {
      throw EmptyTrace("pair " + std::to_string(k) + ": " + e.what());
    }
  }

  std::vector<double> sum(d, 0.0);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    for (std::size_t c = 0; c < d; ++c) {
      sum[c] += pos[k][c] - neg[k][c];
    }
  }
  for (double& v : sum) v /= static_cast<double>(pairs.size());
  return sum;
}

SteeringVector extract_vector(const LanguageModel& model, std::span<const ContrastivePair> pairs,
                              std::size_t layer, const ExtractionOptions& opts) {
  const std::vector<double> mean = mean_difference(model, pairs, layer, opts);
  SteeringVector v;
  v.layer = layer;
  v.values.assign(mean.begin(), mean.end());
  v.n_pairs = pairs.size();
  v.model_fingerprint = model.fingerprint();
  v.created_from = pairs.front().rewriter_tag;
  for (const ContrastivePair& p : pairs) {
    if (p.rewriter_tag != v.created_from) {
      v.created_from = "mixed";
      break;
    }
  }
  return v;
}

InjectionHook make_hook(const SteeringVector& vector, double lambda, PositionPolicy policy,
                        std::string_view active_fingerprint, bool force) {
  if (!force && vector.model_fingerprint != active_fingerprint) {
    throw FingerprintMismatch("steering vector was extracted from weights " +
                              vector.model_fingerprint.substr(0, 16) +
                              "..., active model is " +
                              std::string(active_fingerprint.substr(0, 16)) + "...");
  }
  if (!std::isfinite(lambda)) throw DomainError("lambda must be finite");
  return InjectionHook{vector.layer, vector.values, lambda, policy};
}

std::string serialize_vector(const SteeringVector& v) {
  const json manifest = {
      {"format", kVectorFormat},
      {"version", kVectorVersion},
      {"layer", v.layer},
      {"d_model", v.values.size()},
      {"n_pairs", v.n_pairs},
      {"model_fingerprint", v.model_fingerprint},
      {"rewriter_tag", v.created_from},
      {"dtype", "f32-le"},
  };
  std::string payload;
  append_f32_le(payload, v.values);
  return encode_container(manifest, payload);
}

SteeringVector deserialize_vector(std::string_view bytes) {
  Container c = decode_container(bytes);
  const json& m = c.manifest;
  if (m.value("format", "") != kVectorFormat) throw FormatError("not a steering vector file");
  if (!m.contains("version") || !m["version"].is_number_integer()) {
    throw FormatError("vector manifest has no version");
  }
  if (m["version"].get<int>() != kVectorVersion) {
    throw VersionError("unsupported vector format version " + m["version"].dump());
  }
  if (m.value("dtype", "") != "f32-le") throw FormatError("unsupported dtype");
  SteeringVector v;
  std::size_t d = 0;
  try {
    v.layer = m.at("layer").get<std::size_t>();
    d = m.at("d_model").get<std::size_t>();
    v.n_pairs = m.at("n_pairs").get<std::size_t>();
    v.model_fingerprint = m.at("model_fingerprint").get<std::string>();
    v.created_from = m.at("rewriter_tag").get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad vector manifest: ") + e.what());
  }
  if (c.payload.size() != d * sizeof(float)) {
    throw FormatError("vector payload holds " + std::to_string(c.payload.size()) +
                      " bytes, manifest declares d_model " + std::to_string(d));
  }
  v.values.resize(d);
  read_f32_le(c.payload, 0, v.values);
  for (float x : v.values) {
    if (!std::isfinite(x)) throw FormatError("vector holds a non-finite value");
  }
  return v;
}

void save_vector(const SteeringVector& v, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_vector(v));
}

SteeringVector load_vector(const std::filesystem::path& path) {
  return deserialize_vector(read_file(path));
}

}  // namespace densesteer
