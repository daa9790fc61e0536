#pragma once

#include <map>
#include <string>

#include "tracelm/model.hpp"
#include "tracelm/random_model.hpp"
#include "tracelm/tensor_file.hpp"

namespace tracelm::testing {

inline ModelConfig tiny_config() {
    return ModelConfig{.n_layer = 2, .n_head = 2, .d_model = 8, .n_ctx = 16, .vocab_size = 16};
}

inline std::map<std::string, TensorData> tiny_tensors(std::uint64_t seed = 1234) {
    return random_gpt2_tensors(tiny_config(), seed);
}

/// Goes through the real container path: serialize, parse, load.
inline ModelWeights load_tensors(const std::map<std::string, TensorData>& tensors, const ModelConfig& config,
                                 const std::map<std::string, std::string>& metadata = {}) {
    return load_model(TensorFile::parse(write_tensor_file(tensors, metadata), "test.safetensors"), config);
}

inline ModelWeights tiny_weights(std::uint64_t seed = 1234) { return load_tensors(tiny_tensors(seed), tiny_config()); }

/// Random weights in the GPT-2 tokenizer's vocabulary, small enough to run
/// the naive oracle over the full output layer.
inline ModelConfig gpt2_shaped_config(std::size_t n_ctx = 64) {
    return ModelConfig{.n_layer = 2, .n_head = 2, .d_model = 8, .n_ctx = n_ctx, .vocab_size = 50257};
}

struct SmallModel {
    std::map<std::string, TensorData> tensors;
    ModelWeights weights;
};

inline const SmallModel& gpt2_shaped_model() {
    static const SmallModel m = [] {
        SmallModel out;
        out.tensors = random_gpt2_tensors(gpt2_shaped_config(), 77);
        out.weights = load_tensors(out.tensors, gpt2_shaped_config());
        return out;
    }();
    return m;
}

}  // namespace tracelm::testing
