#include <json.hpp>

#include "tracelm/schema.hpp"

namespace tracelm {
namespace {

using Json = nlohmann::json;

std::vector<float> floats(const Json& j) { return j.get<std::vector<float>>(); }

std::vector<std::vector<float>> float_rows(const Json& j) { return j.get<std::vector<std::vector<float>>>(); }

TokenRecord token(const Json& j) {
    TokenRecord t;
    t.id = j.at("id").get<TokenId>();
    t.text = j.at("text").get<std::string>();
    if (!j.at("byte_start").is_null()) t.byte_start = j.at("byte_start").get<std::size_t>();
    if (!j.at("byte_end").is_null()) t.byte_end = j.at("byte_end").get<std::size_t>();
    return t;
}

CandidateEntry candidate(const Json& j) {
    return {j.at("id").get<TokenId>(), j.at("text").get<std::string>(), j.at("p").get<double>(),
            j.at("rank").get<std::size_t>()};
}

std::vector<CandidateEntry> candidates(const Json& j) {
    std::vector<CandidateEntry> out;
    for (const auto& c : j) out.push_back(candidate(c));
    return out;
}

TraceHeader header(const Json& j) {
    TraceHeader h;
    const Json& m = j.at("model");
    h.model = {m.at("id").get<std::string>(),      m.at("n_layer").get<std::size_t>(),
               m.at("n_head").get<std::size_t>(),  m.at("d_model").get<std::size_t>(),
               m.at("n_ctx").get<std::size_t>(),   m.at("vocab_size").get<std::size_t>()};
    const Json& t = j.at("tokenizer");
    h.tokenizer = {t.at("family").get<std::string>(), t.at("id").get<std::string>(), t.at("vocab_size").get<std::size_t>()};
    h.prompt = {j.at("prompt").at("id").get<std::string>(), j.at("language").get<std::string>(),
                j.at("prompt").at("text").get<std::string>()};
    h.capture.level = parse_capture_level(j.at("capture_level").get<std::string>());
    h.capture.preview_dims = j.at("capture").at("preview_dims").get<std::size_t>();
    h.capture.attention_reduction = parse_attention_reduction(j.at("capture").at("attention_reduction").get<std::string>());
    h.candidate_count = j.at("candidate_count").get<std::size_t>();
    for (const auto& tok : j.at("prompt_tokens")) h.prompt_tokens.push_back(token(tok));
    return h;
}

TraceDetail detail(const Json& j, bool full) {
    TraceDetail d;
    d.embedding_preview = float_rows(j.at("embedding_preview"));
    for (const auto& l : j.at("layers")) {
        LayerCapture c;
        if (full) {
            for (const auto& head : l.at("attention")) c.attention.push_back(float_rows(head));
            for (const auto& head : c.attention) c.last_query_attention.push_back(head.back());
        } else {
            c.last_query_attention = float_rows(l.at("attention_last_query"));
        }
        c.hidden_preview = float_rows(l.at("hidden_preview"));
        c.hidden_norm = floats(l.at("hidden_norm"));
        d.layers.push_back(std::move(c));
    }
    return d;
}

GenerationTrace generation(const Json& j) {
    GenerationTrace g;
    g.header = header(j);
    const Json& d = j.at("decode");
    g.decode.strategy = parse_decode_strategy(d.at("strategy").get<std::string>());
    g.decode.k = d.at("k").get<std::size_t>();
    g.k_requested = d.at("k_requested").get<std::size_t>();
    g.decode.temperature = d.at("temperature").get<double>();
    g.decode.seed = std::stoull(d.at("seed").get<std::string>());
    g.decode.max_new_tokens = d.at("max_new_tokens").get<std::size_t>();
    g.decode.stop_at_eos = d.at("stop_at_eos").get<bool>();
    if (!d.at("eos_id").is_null()) g.decode.eos_id = d.at("eos_id").get<TokenId>();
    for (const auto& s : j.at("steps")) {
        GenerationStep step;
        step.position = s.at("position").get<std::size_t>();
        step.candidates = candidates(s.at("candidates"));
        step.other_mass = s.at("other_mass").get<double>();
        const Json& c = s.at("chosen");
        static_cast<CandidateEntry&>(step.chosen) = candidate(c);
        step.chosen.in_candidates = c.at("in_candidates").get<bool>();
        if (s.contains("detail")) step.detail = detail(s.at("detail"), false);
        g.steps.push_back(std::move(step));
    }
    g.stop_reason = parse_stop_reason(j.at("stop_reason").get<std::string>());
    return g;
}

TrainingTrace training(const Json& j) {
    TrainingTrace t;
    t.header = header(j);
    t.header.capture.full_attention = t.header.capture.level == CaptureLevel::detailed;
    for (const auto& p : j.at("positions")) {
        TrainingPosition pos;
        pos.position = p.at("position").get<std::size_t>();
        pos.target = token(p.at("target"));
        pos.candidates = candidates(p.at("candidates"));
        pos.other_mass = p.at("other_mass").get<double>();
        pos.p_target = p.at("p_target").get<double>();
        pos.loss = p.at("loss").get<double>();
        pos.loss_floored = p.at("loss_floored").get<bool>();
        for (const auto& g : p.at("grad_top")) pos.grad_top.push_back({g.at("id").get<TokenId>(), g.at("g").get<double>()});
        t.positions.push_back(std::move(pos));
    }
    t.mean_loss = j.at("mean_loss").get<double>();
    if (j.contains("detail")) t.detail = detail(j.at("detail"), true);
    return t;
}

}  // namespace

const TraceHeader& ParsedTrace::header() const {
    return std::visit([](const auto& t) -> const TraceHeader& { return t.header; }, trace);
}

std::string ParsedTrace::serialize() const {
    return std::visit([&](const auto& t) { return serialize_trace(t, quant_digits); }, trace);
}

ParsedTrace parse_trace(std::string_view bytes, const std::string& source) {
    ValidationReport report = validate(bytes);
    if (!report.ok()) throw ValidationError(source, std::move(report));
    const Json j = Json::parse(bytes);
    ParsedTrace out;
    out.quant_digits = j.at("quant_digits").get<int>();
    if (j.at("kind") == "generation") {
        out.trace = generation(j);
    } else {
        out.trace = training(j);
    }
    return out;
}

}  // namespace tracelm
