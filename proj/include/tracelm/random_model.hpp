#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "tracelm/model.hpp"
#include "tracelm/tensor_file.hpp"

namespace tracelm {

/// Seeded random GPT-2 parameters under the published tensor names, in
/// Conv1D orientation. Values are drawn from std::mt19937_64 through the
/// 53-bit uniform mapping, so the tensors are identical on every platform.
std::map<std::string, TensorData> random_gpt2_tensors(const ModelConfig& config, std::uint64_t seed);

}  // namespace tracelm
