#include <algorithm>
#include <numeric>

#include "tracelm/error.hpp"
#include "tracelm/generation.hpp"

namespace tracelm {
namespace {

TraceHeader make_header(const ModelWeights& weights, const BpeVocab& vocab, const PromptSpec& prompt,
                        const CaptureSpec& capture, const TraceOptions& options) {
    const ModelConfig& c = weights.config;
    if (vocab.size() != c.vocab_size) {
        throw ParameterError("tokenizer has " + std::to_string(vocab.size()) + " tokens but the model expects " +
                             std::to_string(c.vocab_size));
    }
    if (capture.level == CaptureLevel::detailed && capture.preview_dims > c.d_model) {
        throw ParameterError("preview_dims " + std::to_string(capture.preview_dims) + " exceeds d_model " +
                             std::to_string(c.d_model));
    }
    if (options.candidate_count == 0) throw ParameterError("candidate_count must be >= 1");
    TraceHeader h;
    h.model = {options.model_id, c.n_layer, c.n_head, c.d_model, c.n_ctx, c.vocab_size};
    h.tokenizer = {"byte-bpe", options.tokenizer_id, vocab.size()};
    h.prompt = prompt;
    h.capture = capture;
    h.candidate_count = options.candidate_count;
    h.prompt_tokens = vocab.encode(prompt.text);
    return h;
}

std::vector<CandidateEntry> candidates(std::span<const double> dist, const BpeVocab& vocab, std::size_t count,
                                       double& other_mass) {
    std::vector<CandidateEntry> out;
    double covered = 0;
    const auto top = top_indices(dist, count);
    for (std::size_t r = 0; r < top.size(); ++r) {
        const double p = dist[static_cast<std::size_t>(top[r])];
        out.push_back({top[r], vocab.display_text(top[r]), p, r});
        covered += p;
    }
    other_mass = std::clamp(1.0 - covered, 0.0, 1.0);
    return out;
}

TraceDetail take_detail(ForwardRecord& rec) {
    return {std::move(rec.embedding_preview), std::move(rec.layers)};
}

}  // namespace

GenerationTrace generate_trace(const ModelWeights& weights, const BpeVocab& vocab, const PromptSpec& prompt,
                               const DecodeParams& params, const CaptureSpec& capture, const TraceOptions& options) {
    params.validate();
    GenerationTrace trace;
    trace.header = make_header(weights, vocab, prompt, capture, options);
    trace.header.capture.full_attention = false;
    trace.k_requested = params.k;
    trace.decode = params;
    if (params.strategy == DecodeStrategy::top_k) trace.decode.k = std::min(params.k, vocab.size());

    const std::size_t n_ctx = weights.config.n_ctx;
    std::vector<TokenId> ids;
    for (const auto& t : trace.header.prompt_tokens) ids.push_back(t.id);
    if (ids.empty()) throw ParameterError("prompt '" + prompt.id + "' is empty after encoding");
    if (ids.size() > n_ctx) throw ContextOverflowError(ids.size(), n_ctx);
    if (ids.size() == n_ctx) {
        throw ParameterError("prompt '" + prompt.id + "' fills the whole context of " + std::to_string(n_ctx) +
                             " tokens");
    }

    const bool keep_candidates = capture.level != CaptureLevel::none;
    const bool detailed = capture.level == CaptureLevel::detailed;
    Rng rng(params.seed);
    trace.stop_reason = StopReason::max_new_tokens;
    while (trace.steps.size() < params.max_new_tokens) {
        if (ids.size() >= n_ctx) {
            trace.stop_reason = StopReason::context_limit;
            break;
        }
        ForwardRecord rec = forward(weights, ids, trace.header.capture, LogitRows::last);
        const auto dist = softmax(rec.logits.row(0), params.temperature);

        GenerationStep step;
        step.position = ids.size();
        if (keep_candidates) step.candidates = candidates(dist, vocab, options.candidate_count, step.other_mass);
        if (detailed) step.detail = take_detail(rec);

        const TokenId id = next_token(dist, trace.decode, rng);
        step.chosen.id = id;
        step.chosen.text = vocab.display_text(id);
        step.chosen.p = dist[static_cast<std::size_t>(id)];
        step.chosen.rank = rank_of(dist, id);
        step.chosen.in_candidates = step.chosen.rank < step.candidates.size();
        trace.steps.push_back(std::move(step));
        ids.push_back(id);

        if (params.stop_at_eos && id == *params.eos_id) {
            trace.stop_reason = StopReason::eos;
            break;
        }
    }
    return trace;
}

TrainingTrace training_trace(const ModelWeights& weights, const BpeVocab& vocab, const PromptSpec& prompt,
                             const CaptureSpec& capture, const TraceOptions& options) {
    TrainingTrace trace;
    trace.header = make_header(weights, vocab, prompt, capture, options);
    trace.header.capture.full_attention = capture.level == CaptureLevel::detailed;
    const auto& tokens = trace.header.prompt_tokens;
    if (tokens.size() < 2) {
        throw ParameterError("training text '" + prompt.id + "' encodes to " + std::to_string(tokens.size()) +
                             " token(s), need at least 2");
    }
    if (tokens.size() > weights.config.n_ctx) throw ContextOverflowError(tokens.size(), weights.config.n_ctx);

    std::vector<TokenId> ids;
    for (const auto& t : tokens) ids.push_back(t.id);
    ForwardRecord rec = forward(weights, ids, trace.header.capture);
    const bool keep_candidates = capture.level != CaptureLevel::none;

    double total_loss = 0;
    for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
        const auto dist = softmax(rec.logits.row(i), 1.0);
        TrainingPosition pos;
        pos.position = i;
        pos.target = tokens[i + 1];
        const TokenId target = pos.target.id;
        if (keep_candidates) pos.candidates = candidates(dist, vocab, options.candidate_count, pos.other_mass);
        pos.p_target = dist[static_cast<std::size_t>(target)];
        const CrossEntropy ce = cross_entropy(dist, target);
        pos.loss = ce.loss;
        pos.loss_floored = ce.floored;

        const auto grad = logit_gradient(dist, target);
        bool target_stored = false;
        for (const auto& c : pos.candidates) {
            pos.grad_top.push_back({c.id, grad[static_cast<std::size_t>(c.id)]});
            target_stored = target_stored || c.id == target;
        }
        if (!target_stored) pos.grad_top.push_back({target, grad[static_cast<std::size_t>(target)]});

        total_loss += pos.loss;
        trace.positions.push_back(std::move(pos));
    }
    trace.mean_loss = total_loss / static_cast<double>(trace.positions.size());
    if (capture.level == CaptureLevel::detailed) trace.detail = take_detail(rec);
    return trace;
}

}  // namespace tracelm
