#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "tracelm/error.hpp"
#include "tracelm/model.hpp"

namespace tracelm {
namespace {

// y = x * W + b, accumulated in double.
Matrix affine(const Matrix& x, const Matrix& w, std::span<const float> bias) {
    Matrix y(x.rows, w.cols);
    std::vector<double> acc(w.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        std::copy(bias.begin(), bias.end(), acc.begin());
        const auto xi = x.row(i);
        for (std::size_t k = 0; k < x.cols; ++k) {
            const double a = xi[k];
            const auto wk = w.row(k);
            for (std::size_t j = 0; j < w.cols; ++j) acc[j] += a * wk[j];
        }
        auto yi = y.row(i);
        for (std::size_t j = 0; j < w.cols; ++j) yi[j] = static_cast<float>(acc[j]);
    }
    return y;
}

Matrix layer_norm_rows(const Matrix& x, std::span<const float> gain, std::span<const float> bias, float eps) {
    Matrix y(x.rows, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        const auto r = layer_norm(x.row(i), gain, bias, eps);
        std::copy(r.begin(), r.end(), y.row(i).begin());
    }
    return y;
}

std::vector<float> preview(std::span<const float> row, std::size_t dims) {
    return {row.begin(), row.begin() + static_cast<std::ptrdiff_t>(std::min(dims, row.size()))};
}

float l2_norm(std::span<const float> row) {
    double s = 0;
    for (float v : row) s += static_cast<double>(v) * v;
    return static_cast<float>(std::sqrt(s));
}

// Reduces per-head attention maps into the captured layout.
void capture_attention(const std::vector<Matrix>& heads, const CaptureSpec& spec, LayerCapture& out) {
    const std::size_t seq = heads.front().rows;
    const std::size_t n_out = spec.attention_reduction == AttentionReduction::per_head ? heads.size() : 1;
    const auto value = [&](std::size_t h, std::size_t i, std::size_t j) -> float {
        if (spec.attention_reduction == AttentionReduction::per_head) return heads[h](i, j);
        double s = 0;
        for (const auto& m : heads) s += m(i, j);
        return static_cast<float>(s / static_cast<double>(heads.size()));
    };
    out.last_query_attention.assign(n_out, {});
    for (std::size_t h = 0; h < n_out; ++h) {
        for (std::size_t j = 0; j < seq; ++j) out.last_query_attention[h].push_back(value(h, seq - 1, j));
    }
    if (!spec.full_attention) return;
    out.attention.assign(n_out, {});
    for (std::size_t h = 0; h < n_out; ++h) {
        for (std::size_t i = 0; i < seq; ++i) {
            std::vector<float> r;
            for (std::size_t j = 0; j <= i; ++j) r.push_back(value(h, i, j));
            out.attention[h].push_back(std::move(r));
        }
    }
}

}  // namespace

std::string_view to_string(CaptureLevel level) {
    switch (level) {
        case CaptureLevel::none: return "none";
        case CaptureLevel::simple: return "simple";
        case CaptureLevel::detailed: return "detailed";
    }
    return "simple";
}

std::string_view to_string(AttentionReduction reduction) {
    return reduction == AttentionReduction::per_head ? "per_head" : "head_mean";
}

CaptureLevel parse_capture_level(std::string_view s) {
    if (s == "none") return CaptureLevel::none;
    if (s == "simple") return CaptureLevel::simple;
    if (s == "detailed") return CaptureLevel::detailed;
    throw ParameterError("unknown capture level '" + std::string(s) + "'");
}

AttentionReduction parse_attention_reduction(std::string_view s) {
    if (s == "head_mean") return AttentionReduction::head_mean;
    if (s == "per_head") return AttentionReduction::per_head;
    throw ParameterError("unknown attention reduction '" + std::string(s) + "'");
}

std::vector<float> layer_norm(std::span<const float> x, std::span<const float> gain, std::span<const float> bias,
                              float eps) {
    const auto n = static_cast<double>(x.size());
    double mean = 0;
    for (float v : x) mean += v;
    mean /= n;
    double var = 0;
    for (float v : x) var += (v - mean) * (v - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
    std::vector<float> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = static_cast<float>((x[i] - mean) * inv * gain[i] + bias[i]);
    }
    return y;
}

float gelu(float z) {
    const double zd = z;
    const double c = std::sqrt(2.0 / std::numbers::pi);
    return static_cast<float>(0.5 * zd * (1.0 + std::tanh(c * (zd + 0.044715 * zd * zd * zd))));
}

std::vector<float> mlp(std::span<const float> x, const LayerWeights& layer) {
    Matrix in(1, x.size());
    std::copy(x.begin(), x.end(), in.data.begin());
    Matrix hidden = affine(in, layer.fc_weight, layer.fc_bias);
    for (float& v : hidden.data) v = gelu(v);
    return affine(hidden, layer.fc_out_weight, layer.fc_out_bias).data;
}

AttentionResult causal_self_attention(const Matrix& x, const LayerWeights& layer, const ModelConfig& config) {
    const std::size_t seq = x.rows;
    const std::size_t d = config.d_model;
    const std::size_t hd = config.head_dim();
    const Matrix qkv = affine(x, layer.qkv_weight, layer.qkv_bias);
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    AttentionResult result;
    Matrix merged(seq, d);
    std::vector<double> scores(seq);
    for (std::size_t h = 0; h < config.n_head; ++h) {
        Matrix weights(seq, seq);
        const std::size_t q0 = h * hd;
        const std::size_t k0 = d + h * hd;
        const std::size_t v0 = 2 * d + h * hd;
        for (std::size_t i = 0; i < seq; ++i) {
            double max_score = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j <= i; ++j) {
                double dot = 0;
                for (std::size_t c = 0; c < hd; ++c) dot += static_cast<double>(qkv(i, q0 + c)) * qkv(j, k0 + c);
                scores[j] = dot * scale;
                max_score = std::max(max_score, scores[j]);
            }
            double total = 0;
            for (std::size_t j = 0; j <= i; ++j) {
                scores[j] = std::exp(scores[j] - max_score);
                total += scores[j];
            }
            // Entries j > i stay exactly 0.
            for (std::size_t j = 0; j <= i; ++j) weights(i, j) = static_cast<float>(scores[j] / total);
            for (std::size_t c = 0; c < hd; ++c) {
                double acc = 0;
                for (std::size_t j = 0; j <= i; ++j) acc += scores[j] / total * qkv(j, v0 + c);
                merged(i, q0 + c) = static_cast<float>(acc);
            }
        }
        result.weights.push_back(std::move(weights));
    }
    result.output = affine(merged, layer.attn_out_weight, layer.attn_out_bias);
    return result;
}

std::vector<double> softmax(std::span<const float> logits, double temperature) {
    if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
        throw ParameterError("temperature must be a finite value >= 0, got " + std::to_string(temperature));
    }
    std::vector<double> p(logits.size(), 0.0);
    if (logits.empty()) return p;
    const auto argmax = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    if (temperature == 0.0) {
        p[argmax] = 1.0;
        return p;
    }
    const double max_logit = logits[argmax];
    double total = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp((logits[i] - max_logit) / temperature);
        total += p[i];
    }
    for (double& v : p) v /= total;
    return p;
}

ForwardRecord forward(const ModelWeights& weights, std::span<const TokenId> ids, const CaptureSpec& capture,
                      LogitRows rows) {
    const ModelConfig& cfg = weights.config;
    if (ids.empty()) throw ParameterError("forward: empty token sequence");
    if (ids.size() > cfg.n_ctx) throw ContextOverflowError(ids.size(), cfg.n_ctx);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= cfg.vocab_size) {
            throw ParameterError("forward: token id " + std::to_string(ids[i]) + " at position " + std::to_string(i) +
                                 " out of range [0, " + std::to_string(cfg.vocab_size) + ")");
        }
    }
    const bool detailed = capture.level == CaptureLevel::detailed;
    if (detailed && capture.preview_dims > cfg.d_model) {
        throw ParameterError("preview_dims " + std::to_string(capture.preview_dims) + " exceeds d_model");
    }

    const std::size_t seq = ids.size();
    const std::size_t d = cfg.d_model;
    ForwardRecord rec;

    Matrix x(seq, d);
    for (std::size_t p = 0; p < seq; ++p) {
        const auto te = weights.token_embedding.row(static_cast<std::size_t>(ids[p]));
        const auto pe = weights.position_embedding.row(p);
        auto xr = x.row(p);
        for (std::size_t i = 0; i < d; ++i) xr[i] = te[i] + pe[i];
        if (detailed) rec.embedding_preview.push_back(preview(xr, capture.preview_dims));
    }

    for (const LayerWeights& layer : weights.layers) {
        const Matrix h1 = layer_norm_rows(x, layer.ln1_gain, layer.ln1_bias, cfg.layer_norm_eps);
        AttentionResult attn = causal_self_attention(h1, layer, cfg);
        for (std::size_t k = 0; k < x.data.size(); ++k) x.data[k] += attn.output.data[k];

        const Matrix h2 = layer_norm_rows(x, layer.ln2_gain, layer.ln2_bias, cfg.layer_norm_eps);
        Matrix hidden = affine(h2, layer.fc_weight, layer.fc_bias);
        for (float& v : hidden.data) v = gelu(v);
        const Matrix m = affine(hidden, layer.fc_out_weight, layer.fc_out_bias);
        for (std::size_t k = 0; k < x.data.size(); ++k) x.data[k] += m.data[k];

        if (detailed) {
            LayerCapture lc;
            capture_attention(attn.weights, capture, lc);
            for (std::size_t p = 0; p < seq; ++p) {
                lc.hidden_preview.push_back(preview(x.row(p), capture.preview_dims));
                lc.hidden_norm.push_back(l2_norm(x.row(p)));
            }
            rec.layers.push_back(std::move(lc));
        }
    }

    const std::size_t first = rows == LogitRows::last ? seq - 1 : 0;
    rec.logits = Matrix(seq - first, cfg.vocab_size);
    for (std::size_t p = first; p < seq; ++p) {
        const auto f = layer_norm(x.row(p), weights.final_ln_gain, weights.final_ln_bias, cfg.layer_norm_eps);
        auto out = rec.logits.row(p - first);
        for (std::size_t v = 0; v < cfg.vocab_size; ++v) {
            const auto e = weights.token_embedding.row(v);
            double s = 0;
            for (std::size_t i = 0; i < d; ++i) s += static_cast<double>(f[i]) * e[i];
            out[v] = static_cast<float>(s);
        }
    }
    return rec;
}

}  // namespace tracelm
