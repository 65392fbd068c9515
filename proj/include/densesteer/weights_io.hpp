#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "densesteer/model.hpp"

namespace densesteer {

inline constexpr std::string_view kWeightsFormat = "densesteer-weights";
inline constexpr int kWeightsVersion = 1;

// Container layout (see io.hpp) with manifest
//   {"format", "version", "config", "special_tokens", "dtype", "tensors": [
//     {"name", "shape", "offset", "nbytes"}, ...]}
// and a payload of little-endian f32 tensors, row-major, in canonical order.
// Offsets are relative to the start of the payload.
std::string serialize_weights(const MicroWeights& w);

// Validates the manifest completely before returning any tensor.
// Throws FormatError, VersionError, ChecksumError.
MicroWeights deserialize_weights(std::string_view bytes);

void save_weights(const MicroModel& model, const std::filesystem::path& path);
MicroModel load_weights(const std::filesystem::path& path,
                        kernels::Policy policy = kernels::Policy::kParallel);

}  // namespace densesteer
