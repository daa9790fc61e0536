#include <cmath>
#include <cstdio>
#include <cstdlib>

#include <json.hpp>

#include "json_path.hpp"
#include "tracelm/schema.hpp"
#include "tracelm/unicode.hpp"

namespace tracelm {
namespace {

using Json = nlohmann::ordered_json;
using detail::JsonPath;

class Writer {
public:
    explicit Writer(int digits) : digits_(digits) {
        if (digits < 1 || digits > 17) throw ParameterError("quant_digits must be in [1, 17]");
    }

    Json num(double v, const JsonPath& path) const {
        if (!std::isfinite(v)) throw SerializationError(path.str(), "non-finite value");
        return quantize(v, digits_);
    }

    Json text(const std::string& s, const JsonPath& path) const {
        if (!unicode::is_valid_utf8(s)) throw SerializationError(path.str(), "text is not valid UTF-8");
        return s;
    }

    Json vec(const std::vector<float>& v, const JsonPath& path) const {
        Json out = Json::array();
        for (std::size_t i = 0; i < v.size(); ++i) out.push_back(num(v[i], path[i]));
        return out;
    }

    Json mat(const std::vector<std::vector<float>>& m, const JsonPath& path) const {
        Json out = Json::array();
        for (std::size_t i = 0; i < m.size(); ++i) out.push_back(vec(m[i], path[i]));
        return out;
    }

    Json token(const TokenRecord& t, const JsonPath& path) const {
        Json j;
        j["id"] = t.id;
        j["text"] = text(t.text, path / "text");
        j["byte_start"] = t.byte_start ? Json(*t.byte_start) : Json(nullptr);
        j["byte_end"] = t.byte_end ? Json(*t.byte_end) : Json(nullptr);
        return j;
    }

    Json candidate(const CandidateEntry& c, const JsonPath& path) const {
        Json j;
        j["id"] = c.id;
        j["text"] = text(c.text, path / "text");
        j["p"] = num(c.p, path / "p");
        j["rank"] = c.rank;
        return j;
    }

    Json candidates(const std::vector<CandidateEntry>& cs, const JsonPath& path) const {
        Json out = Json::array();
        for (std::size_t i = 0; i < cs.size(); ++i) out.push_back(candidate(cs[i], path[i]));
        return out;
    }

    Json header(const TraceHeader& h, std::string_view kind) const {
        const JsonPath root;
        Json j;
        j["schema_version"] = kSchemaVersion;
        j["kind"] = kind;
        j["quant_digits"] = digits_;
        j["model"] = {{"id", text(h.model.id, root / "model" / "id")},
                      {"n_layer", h.model.n_layer},
                      {"n_head", h.model.n_head},
                      {"d_model", h.model.d_model},
                      {"n_ctx", h.model.n_ctx},
                      {"vocab_size", h.model.vocab_size}};
        j["tokenizer"] = {{"family", h.tokenizer.family},
                          {"id", text(h.tokenizer.id, root / "tokenizer" / "id")},
                          {"vocab_size", h.tokenizer.vocab_size}};
        j["language"] = text(h.prompt.language, root / "language");
        j["prompt"] = {{"id", text(h.prompt.id, root / "prompt" / "id")},
                       {"text", text(h.prompt.text, root / "prompt" / "text")}};
        j["capture_level"] = to_string(h.capture.level);
        j["capture"] = {{"preview_dims", h.capture.preview_dims},
                        {"attention_reduction", to_string(h.capture.attention_reduction)}};
        j["candidate_count"] = h.candidate_count;
        const JsonPath tokens = root / "prompt_tokens";
        Json pt = Json::array();
        for (std::size_t i = 0; i < h.prompt_tokens.size(); ++i) pt.push_back(token(h.prompt_tokens[i], tokens[i]));
        j["prompt_tokens"] = std::move(pt);
        return j;
    }

    Json detail(const TraceDetail& d, bool full_attention, const JsonPath& path) const {
        Json j;
        j["embedding_preview"] = mat(d.embedding_preview, path / "embedding_preview");
        const JsonPath layers = path / "layers";
        Json ls = Json::array();
        for (std::size_t l = 0; l < d.layers.size(); ++l) {
            const JsonPath lp = layers[l];
            const LayerCapture& c = d.layers[l];
            Json lj;
            if (full_attention) {
                const JsonPath ap = lp / "attention";
                Json heads = Json::array();
                for (std::size_t h = 0; h < c.attention.size(); ++h) heads.push_back(mat(c.attention[h], ap[h]));
                lj["attention"] = std::move(heads);
            } else {
                lj["attention_last_query"] = mat(c.last_query_attention, lp / "attention_last_query");
            }
            lj["hidden_preview"] = mat(c.hidden_preview, lp / "hidden_preview");
            lj["hidden_norm"] = vec(c.hidden_norm, lp / "hidden_norm");
            ls.push_back(std::move(lj));
        }
        j["layers"] = std::move(ls);
        return j;
    }

private:
    int digits_;
};

}  // namespace

double quantize(double value, int digits) {
    if (value == 0.0 || !std::isfinite(value)) return value == 0.0 ? 0.0 : value;
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.*g", digits, value);
    return std::strtod(buf, nullptr);
}

std::string serialize_trace(const GenerationTrace& trace, int quant_digits) {
    const Writer w(quant_digits);
    const JsonPath root;
    Json j = w.header(trace.header, "generation");

    const DecodeParams& d = trace.decode;
    j["decode"] = {{"strategy", to_string(d.strategy)},
                   {"k", d.k},
                   {"k_requested", trace.k_requested},
                   {"temperature", w.num(d.temperature, root / "decode" / "temperature")},
                   {"seed", std::to_string(d.seed)},
                   {"max_new_tokens", d.max_new_tokens},
                   {"stop_at_eos", d.stop_at_eos},
                   {"eos_id", d.eos_id ? Json(*d.eos_id) : Json(nullptr)}};

    const JsonPath steps = root / "steps";
    Json sj = Json::array();
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
        const GenerationStep& s = trace.steps[i];
        const JsonPath sp = steps[i];
        Json step;
        step["position"] = s.position;
        step["candidates"] = w.candidates(s.candidates, sp / "candidates");
        step["other_mass"] = w.num(s.other_mass, sp / "other_mass");
        Json chosen = w.candidate(s.chosen, sp / "chosen");
        chosen["in_candidates"] = s.chosen.in_candidates;
        step["chosen"] = std::move(chosen);
        if (s.detail) step["detail"] = w.detail(*s.detail, false, sp / "detail");
        sj.push_back(std::move(step));
    }
    j["steps"] = std::move(sj);
    j["stop_reason"] = to_string(trace.stop_reason);
    return j.dump();
}

std::string serialize_trace(const TrainingTrace& trace, int quant_digits) {
    const Writer w(quant_digits);
    const JsonPath root;
    Json j = w.header(trace.header, "training");

    const JsonPath positions = root / "positions";
    Json pj = Json::array();
    for (std::size_t i = 0; i < trace.positions.size(); ++i) {
        const TrainingPosition& p = trace.positions[i];
        const JsonPath pp = positions[i];
        Json pos;
        pos["position"] = p.position;
        pos["target"] = w.token(p.target, pp / "target");
        pos["candidates"] = w.candidates(p.candidates, pp / "candidates");
        pos["other_mass"] = w.num(p.other_mass, pp / "other_mass");
        pos["p_target"] = w.num(p.p_target, pp / "p_target");
        pos["loss"] = w.num(p.loss, pp / "loss");
        pos["loss_floored"] = p.loss_floored;
        const JsonPath gp = pp / "grad_top";
        Json grad = Json::array();
        for (std::size_t k = 0; k < p.grad_top.size(); ++k) {
            grad.push_back({{"id", p.grad_top[k].id}, {"g", w.num(p.grad_top[k].g, gp[k] / "g")}});
        }
        pos["grad_top"] = std::move(grad);
        pj.push_back(std::move(pos));
    }
    j["positions"] = std::move(pj);
    j["mean_loss"] = w.num(trace.mean_loss, root / "mean_loss");
    if (trace.detail) j["detail"] = w.detail(*trace.detail, true, root / "detail");
    return j.dump();
}

}  // namespace tracelm
