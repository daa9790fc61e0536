#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tracelm/model.hpp"
#include "tracelm/tokenizer.hpp"

namespace tracelm {

enum class DecodeStrategy { greedy, top_k };

struct DecodeParams {
    DecodeStrategy strategy = DecodeStrategy::greedy;
    std::size_t k = 40;  // sampling pool, top_k only
    double temperature = 1.0;
    std::uint64_t seed = 0;
    std::size_t max_new_tokens = 20;
    bool stop_at_eos = false;
    std::optional<TokenId> eos_id;

    /// Throws ParameterError on k == 0 (top_k), max_new_tokens == 0, a negative
    /// or non-finite temperature, or stop_at_eos without an eos id.
    void validate() const;
};

std::string_view to_string(DecodeStrategy s);
DecodeStrategy parse_decode_strategy(std::string_view s);

struct CandidateEntry {
    TokenId id = 0;
    std::string text;
    double p = 0.0;
    std::size_t rank = 0;
};

struct ChosenToken : CandidateEntry {
    bool in_candidates = false;
};

/// Captured internals of one forward pass, as stored in a trace.
struct TraceDetail {
    std::vector<std::vector<float>> embedding_preview;  // [seq][preview_dims]
    std::vector<LayerCapture> layers;
};

struct GenerationStep {
    std::size_t position = 0;  // absolute sequence index of the generated token
    std::vector<CandidateEntry> candidates;
    double other_mass = 1.0;
    ChosenToken chosen;
    std::optional<TraceDetail> detail;
};

enum class StopReason { max_new_tokens, eos, context_limit };

std::string_view to_string(StopReason r);
StopReason parse_stop_reason(std::string_view s);

struct ModelInfo {
    std::string id;
    std::size_t n_layer = 0;
    std::size_t n_head = 0;
    std::size_t d_model = 0;
    std::size_t n_ctx = 0;
    std::size_t vocab_size = 0;
};

struct TokenizerInfo {
    std::string family = "byte-bpe";
    std::string id;
    std::size_t vocab_size = 0;
};

struct PromptSpec {
    std::string id;
    std::string language;
    std::string text;
};

/// Fields shared by both trace kinds.
struct TraceHeader {
    ModelInfo model;
    TokenizerInfo tokenizer;
    PromptSpec prompt;
    CaptureSpec capture;
    std::size_t candidate_count = 10;  // stored top-K per step
    std::vector<TokenRecord> prompt_tokens;
};

struct GenerationTrace {
    TraceHeader header;
    DecodeParams decode;          // k holds the effective pool size
    std::size_t k_requested = 0;  // differs from decode.k when clamped
    std::vector<GenerationStep> steps;
    StopReason stop_reason = StopReason::max_new_tokens;
};

struct GradEntry {
    TokenId id = 0;
    double g = 0.0;
};

struct TrainingPosition {
    std::size_t position = 0;
    TokenRecord target;
    std::vector<CandidateEntry> candidates;
    double other_mass = 1.0;
    double p_target = 0.0;
    double loss = 0.0;
    bool loss_floored = false;
    std::vector<GradEntry> grad_top;  // stored candidates, then the target if not among them
};

struct TrainingTrace {
    TraceHeader header;
    std::vector<TrainingPosition> positions;
    double mean_loss = 0.0;
    std::optional<TraceDetail> detail;  // one pass, full attention maps
};

}  // namespace tracelm
