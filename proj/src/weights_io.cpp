#include "densesteer/weights_io.hpp"

#include "densesteer/errors.hpp"
#include "densesteer/io.hpp"

namespace densesteer {

namespace {

json config_to_json(const ModelConfig& c) {
  return {{"n_layers", c.n_layers}, {"d_model", c.d_model},   {"n_heads", c.n_heads},
          {"d_ff", c.d_ff},         {"vocab_size", c.vocab_size}, {"max_seq_len", c.max_seq_len},
          {"seed", c.seed}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  try {
    c.n_layers = j.at("n_layers").get<std::int64_t>();
    c.d_model = j.at("d_model").get<std::int64_t>();
    c.n_heads = j.at("n_heads").get<std::int64_t>();
    c.d_ff = j.at("d_ff").get<std::int64_t>();
    c.vocab_size = j.at("vocab_size").get<std::int64_t>();
    c.max_seq_len = j.at("max_seq_len").get<std::int64_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad config in manifest: ") + e.what());
  }
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(e.what());
  }
  return c;
}

std::size_t element_count(const std::vector<std::int64_t>& shape) {
  std::size_t n = 1;
  for (std::int64_t s : shape) n *= static_cast<std::size_t>(s);
  return n;
}

}  // namespace

std::string serialize_weights(const MicroWeights& w) {
  json tensors = json::array();
  std::string payload;
  for (const ConstTensorRef& t : w.tensors()) {
    const std::size_t offset = payload.size();
    append_f32_le(payload, *t.data);
    tensors.push_back({{"name", t.name},
                       {"shape", t.shape},
                       {"offset", offset},
                       {"nbytes", payload.size() - offset}});
  }
  const json manifest = {
      {"format", kWeightsFormat},
      {"version", kWeightsVersion},
      {"config", config_to_json(w.config)},
      {"special_tokens",
       {{"bos", ByteTokenizer::kBos}, {"eos", ByteTokenizer::kEos}, {"pad", ByteTokenizer::kPad}}},
      {"dtype", "f32-le"},
      {"tensors", tensors},
  };
  return encode_container(manifest, payload);
}

MicroWeights deserialize_weights(std::string_view bytes) {
  Container c = decode_container(bytes);
  const json& m = c.manifest;
  if (!m.contains("format") || m["format"] != kWeightsFormat) {
    throw FormatError("not a densesteer weight file (bad format tag)");
  }
  if (!m.contains("version") || !m["version"].is_number_integer()) {
    throw FormatError("weight manifest has no version");
  }
  if (m["version"].get<int>() != kWeightsVersion) {
    throw VersionError("unsupported weight format version " + m["version"].dump());
  }
  if (m.value("dtype", "") != "f32-le") throw FormatError("unsupported dtype");
  if (!m.contains("config")) throw FormatError("weight manifest has no config");

  MicroWeights w;
  w.config = config_from_json(m["config"]);
  w.layers.resize(static_cast<std::size_t>(w.config.n_layers));
  std::vector<TensorRef> expected = w.tensors();

  const json& tensors = m.value("tensors", json::array());
  if (!tensors.is_array() || tensors.size() != expected.size()) {
    throw FormatError("manifest lists " + std::to_string(tensors.size()) + " tensors, expected " +
                      std::to_string(expected.size()));
  }

  // Check every entry before touching the payload.
  struct Slice {
    std::size_t offset, count;
  };
  std::vector<Slice> slices;
  std::size_t declared = 0;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const json& e = tensors[i];
    std::string name;
    std::vector<std::int64_t> shape;
    std::size_t offset = 0, nbytes = 0;
    try {
      name = e.at("name").get<std::string>();
      shape = e.at("shape").get<std::vector<std::int64_t>>();
      offset = e.at("offset").get<std::size_t>();
      nbytes = e.at("nbytes").get<std::size_t>();
    } catch (const json::exception& ex) {
      throw FormatError("bad tensor entry " + std::to_string(i) + ": " + ex.what());
    }
    if (name != expected[i].name) {
      throw FormatError("tensor " + std::to_string(i) + " is '" + name + "', expected '" +
                        expected[i].name + "'");
    }
    if (shape != expected[i].shape) {
      throw FormatError("tensor '" + name + "' has a shape inconsistent with the config");
    }
    const std::size_t count = element_count(shape);
    if (nbytes != count * sizeof(float)) {
      throw FormatError("tensor '" + name + "' declares " + std::to_string(nbytes) + " bytes");
    }
    if (offset != declared) throw FormatError("tensor '" + name + "' is not contiguous");
    declared += nbytes;
    slices.push_back({offset, count});
  }
  if (declared != c.payload.size()) {
    throw ChecksumError("manifest declares " + std::to_string(declared) +
                        " payload bytes, file holds " + std::to_string(c.payload.size()));
  }

  for (std::size_t i = 0; i < expected.size(); ++i) {
    expected[i].data->resize(slices[i].count);
    read_f32_le(c.payload, slices[i].offset, *expected[i].data);
  }
  return w;
}

void save_weights(const MicroModel& model, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_weights(model.weights()));
}

MicroModel load_weights(const std::filesystem::path& path, kernels::Policy policy) {
  return MicroModel(deserialize_weights(read_file(path)), policy);
}

}  // namespace densesteer
