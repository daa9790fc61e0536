#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "tracelm/model.hpp"
#include "tracelm/tokenizer.hpp"
#include "tracelm/trace.hpp"

namespace tracelm {

/// Sampling generator: the 64-bit Mersenne Twister (std::mt19937_64, whose
/// output sequence the C++ standard fixes) seeded with the 64-bit seed.
/// A uniform draw in [0, 1) is (next() >> 11) * 2^-53.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

private:
    std::mt19937_64 engine_;
};

/// Indices of the `count` most probable entries ordered by (p desc, id asc).
std::vector<TokenId> top_indices(std::span<const double> dist, std::size_t count);

/// 0-based rank of `id` under the (p desc, id asc) order.
std::size_t rank_of(std::span<const double> dist, TokenId id);

/// Greedy: argmax, lowest id on ties, rng untouched. top_k: inverse-CDF
/// sample over the renormalized k most probable entries using one uniform
/// draw; k is clamped to the vocabulary size. Throws ParameterError if dist
/// does not sum to 1 within 1e-6.
TokenId next_token(std::span<const double> dist, const DecodeParams& params, Rng& rng);

struct CrossEntropy {
    double loss = 0.0;
    bool floored = false;  // p was below the 1e-12 floor
};

inline constexpr double kProbabilityFloor = 1e-12;

CrossEntropy cross_entropy(std::span<const double> dist, TokenId target);

/// dist - onehot(target): the gradient of cross-entropy w.r.t. the logits.
std::vector<double> logit_gradient(std::span<const double> dist, TokenId target);

struct TraceOptions {
    std::string model_id;
    std::string tokenizer_id = "gpt2";
    std::size_t candidate_count = 10;
};

/// Autoregressive decode from the prompt. Every step runs the full forward
/// pass over the current ids; there is no key/value cache.
GenerationTrace generate_trace(const ModelWeights& weights, const BpeVocab& vocab, const PromptSpec& prompt,
                               const DecodeParams& params, const CaptureSpec& capture,
                               const TraceOptions& options = {});

/// Teacher-forced single pass scoring every next-token prediction.
TrainingTrace training_trace(const ModelWeights& weights, const BpeVocab& vocab, const PromptSpec& prompt,
                             const CaptureSpec& capture, const TraceOptions& options = {});

}  // namespace tracelm
