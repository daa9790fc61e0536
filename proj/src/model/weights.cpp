#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tracelm/error.hpp"
#include "tracelm/model.hpp"

namespace tracelm {
namespace {

std::string shape_string(const std::vector<std::size_t>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? ", " : "") + std::to_string(s[i]);
    return out + "]";
}

class TensorReader {
public:
    TensorReader(const TensorFile& file, WeightLayout layout) : file_(file), layout_(layout) {
        // "transformer." prefix is used by GPT2LMHeadModel exports.
        prefix_ = file.contains("wte.weight") || !file.contains("transformer.wte.weight") ? "" : "transformer.";
    }

    std::vector<float> vector(const std::string& name, std::size_t n) const {
        return checked(name, {n});
    }

    Matrix matrix(const std::string& name, std::size_t rows, std::size_t cols) const {
        Matrix m(rows, cols);
        m.data = checked(name, {rows, cols});
        return m;
    }

    /// Projection stored [in, out] in Conv1D layout, [out, in] in Linear layout.
    Matrix projection(const std::string& name, std::size_t in, std::size_t out) const {
        if (layout_ == WeightLayout::conv1d) return matrix(name, in, out);
        const std::vector<float> raw = checked(name, {out, in});
        Matrix m(in, out);
        for (std::size_t o = 0; o < out; ++o)
            for (std::size_t i = 0; i < in; ++i) m(i, o) = raw[o * in + i];
        return m;
    }

private:
    std::vector<float> checked(const std::string& short_name, const std::vector<std::size_t>& shape) const {
        const std::string name = prefix_ + short_name;
        auto it = file_.entries().find(name);
        if (it == file_.entries().end()) throw LoadError(file_.name() + ": missing tensor '" + name + "'");
        if (it->second.shape != shape) {
            throw LoadError(file_.name() + ": shape mismatch for tensor '" + name + "': expected " + shape_string(shape) +
                            ", found " + shape_string(it->second.shape));
        }
        std::vector<float> v = file_.to_f32(name);
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!std::isfinite(v[i])) {
                throw LoadError(file_.name() + ": non-finite value in tensor '" + name + "' at element " + std::to_string(i));
            }
        }
        return v;
    }

    const TensorFile& file_;
    WeightLayout layout_;
    std::string prefix_;
};

}  // namespace

void ModelConfig::validate() const {
    if (n_layer < 1 || n_head < 1 || d_model < 1 || n_ctx < 1) throw ParameterError("model dimensions must be >= 1");
    if (vocab_size < 2) throw ParameterError("vocab_size must be >= 2");
    if (d_model % n_head != 0) {
        throw ParameterError("d_model " + std::to_string(d_model) + " not divisible by n_head " + std::to_string(n_head));
    }
    if (!(layer_norm_eps > 0.0f) || !std::isfinite(layer_norm_eps)) throw ParameterError("layer_norm_eps must be > 0");
}

ModelConfig ModelConfig::from_json(std::string_view json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw LoadError(std::string("model config: malformed JSON: ") + e.what());
    }
    ModelConfig c;
    const auto get = [&](std::initializer_list<const char*> keys, std::size_t& dst) {
        for (const char* k : keys) {
            if (j.contains(k)) {
                if (!j[k].is_number_unsigned()) throw LoadError(std::string("model config: ") + k + " must be a positive integer");
                dst = j[k].get<std::size_t>();
                return;
            }
        }
        throw LoadError(std::string("model config: missing ") + *keys.begin());
    };
    get({"n_layer"}, c.n_layer);
    get({"n_head"}, c.n_head);
    get({"n_embd", "d_model"}, c.d_model);
    get({"n_positions", "n_ctx"}, c.n_ctx);
    get({"vocab_size"}, c.vocab_size);
    if (j.contains("layer_norm_epsilon")) c.layer_norm_eps = j["layer_norm_epsilon"].get<float>();
    try {
        c.validate();
    } catch (const ParameterError& e) {
        throw LoadError(std::string("model config: ") + e.what());
    }
    return c;
}

ModelConfig ModelConfig::read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

std::string ModelConfig::to_json() const {
    nlohmann::ordered_json j;
    j["model_type"] = "gpt2";
    j["n_layer"] = n_layer;
    j["n_head"] = n_head;
    j["n_embd"] = d_model;
    j["n_positions"] = n_ctx;
    j["vocab_size"] = vocab_size;
    char eps[32];
    std::snprintf(eps, sizeof eps, "%.7g", static_cast<double>(layer_norm_eps));
    j["layer_norm_epsilon"] = std::stod(eps);
    return j.dump(2) + "\n";
}

ModelWeights load_model(const TensorFile& container, const ModelConfig& config) {
    try {
        config.validate();
    } catch (const ParameterError& e) {
        throw LoadError(container.name() + ": " + e.what());
    }
    WeightLayout layout = WeightLayout::conv1d;
    if (auto it = container.metadata().find("weight_layout"); it != container.metadata().end()) {
        if (it->second == "linear") {
            layout = WeightLayout::linear;
        } else if (it->second != "conv1d") {
            throw LoadError(container.name() + ": unknown weight_layout '" + it->second + "'");
        }
    }

    const TensorReader r(container, layout);
    const std::size_t d = config.d_model;
    ModelWeights w;
    w.config = config;
    w.token_embedding = r.matrix("wte.weight", config.vocab_size, d);
    w.position_embedding = r.matrix("wpe.weight", config.n_ctx, d);
    for (std::size_t l = 0; l < config.n_layer; ++l) {
        const std::string h = "h." + std::to_string(l) + ".";
        LayerWeights lw;
        lw.ln1_gain = r.vector(h + "ln_1.weight", d);
        lw.ln1_bias = r.vector(h + "ln_1.bias", d);
        lw.qkv_weight = r.projection(h + "attn.c_attn.weight", d, 3 * d);
        lw.qkv_bias = r.vector(h + "attn.c_attn.bias", 3 * d);
        lw.attn_out_weight = r.projection(h + "attn.c_proj.weight", d, d);
        lw.attn_out_bias = r.vector(h + "attn.c_proj.bias", d);
        lw.ln2_gain = r.vector(h + "ln_2.weight", d);
        lw.ln2_bias = r.vector(h + "ln_2.bias", d);
        lw.fc_weight = r.projection(h + "mlp.c_fc.weight", d, 4 * d);
        lw.fc_bias = r.vector(h + "mlp.c_fc.bias", 4 * d);
        lw.fc_out_weight = r.projection(h + "mlp.c_proj.weight", 4 * d, d);
        lw.fc_out_bias = r.vector(h + "mlp.c_proj.bias", d);
        w.layers.push_back(std::move(lw));
    }
    w.final_ln_gain = r.vector("ln_f.weight", d);
    w.final_ln_bias = r.vector("ln_f.bias", d);

    // A separate output head is accepted only when it is the tied embedding.
    if (container.contains("lm_head.weight")) {
        const std::string head = "lm_head.weight";
        const auto& entry = container.entries().at(head);
        const std::vector<float> values = container.to_f32(head);
        if (entry.shape != std::vector<std::size_t>{config.vocab_size, d} ||
            std::memcmp(values.data(), w.token_embedding.data.data(), values.size() * sizeof(float)) != 0) {
            throw LoadError(container.name() + ": tensor '" + head + "' is not identical to wte.weight (untied output head)");
        }
    }
    return w;
}

std::map<std::string, TensorData> export_tensors(const ModelWeights& w, WeightLayout layout) {
    std::map<std::string, TensorData> out;
    const auto vec = [&](const std::string& name, const std::vector<float>& v) {
        out[name] = TensorData{{v.size()}, v};
    };
    const auto mat = [&](const std::string& name, const Matrix& m) {
        out[name] = TensorData{{m.rows, m.cols}, m.data};
    };
    const auto proj = [&](const std::string& name, const Matrix& m) {
        if (layout == WeightLayout::conv1d) return mat(name, m);
        Matrix t(m.cols, m.rows);
        for (std::size_t i = 0; i < m.rows; ++i)
            for (std::size_t j = 0; j < m.cols; ++j) t(j, i) = m(i, j);
        mat(name, t);
    };
    mat("wte.weight", w.token_embedding);
    mat("wpe.weight", w.position_embedding);
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
        const auto& lw = w.layers[l];
        const std::string h = "h." + std::to_string(l) + ".";
        vec(h + "ln_1.weight", lw.ln1_gain);
        vec(h + "ln_1.bias", lw.ln1_bias);
        proj(h + "attn.c_attn.weight", lw.qkv_weight);
        vec(h + "attn.c_attn.bias", lw.qkv_bias);
        proj(h + "attn.c_proj.weight", lw.attn_out_weight);
        vec(h + "attn.c_proj.bias", lw.attn_out_bias);
        vec(h + "ln_2.weight", lw.ln2_gain);
        vec(h + "ln_2.bias", lw.ln2_bias);
        proj(h + "mlp.c_fc.weight", lw.fc_weight);
        vec(h + "mlp.c_fc.bias", lw.fc_bias);
        proj(h + "mlp.c_proj.weight", lw.fc_out_weight);
        vec(h + "mlp.c_proj.bias", lw.fc_out_bias);
    }
    vec("ln_f.weight", w.final_ln_gain);
    vec("ln_f.bias", w.final_ln_bias);
    return out;
}

}  // namespace tracelm
