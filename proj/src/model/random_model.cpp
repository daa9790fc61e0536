#include "tracelm/random_model.hpp"

#include <cmath>
#include <random>

namespace tracelm {

std::map<std::string, TensorData> random_gpt2_tensors(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    const auto uniform = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0; };
    std::map<std::string, TensorData> out;
    const auto fill = [&](const std::string& name, std::vector<std::size_t> shape, double scale, double offset = 0.0) {
        TensorData t;
        std::size_t n = 1;
        for (auto s : shape) n *= s;
        t.shape = std::move(shape);
        t.values.resize(n);
        for (auto& v : t.values) v = static_cast<float>(offset + scale * uniform());
        out.emplace(name, std::move(t));
    };

    const std::size_t d = config.d_model;
    const double w_in = 2.0 / std::sqrt(static_cast<double>(d));
    const double w_hidden = 2.0 / std::sqrt(static_cast<double>(4 * d));
    fill("wte.weight", {config.vocab_size, d}, 1.0);
    fill("wpe.weight", {config.n_ctx, d}, 0.3);
    for (std::size_t l = 0; l < config.n_layer; ++l) {
        const std::string h = "h." + std::to_string(l) + ".";
        fill(h + "ln_1.weight", {d}, 0.2, 1.0);
        fill(h + "ln_1.bias", {d}, 0.1);
        fill(h + "attn.c_attn.weight", {d, 3 * d}, w_in);
        fill(h + "attn.c_attn.bias", {3 * d}, 0.1);
        fill(h + "attn.c_proj.weight", {d, d}, w_in);
        fill(h + "attn.c_proj.bias", {d}, 0.1);
        fill(h + "ln_2.weight", {d}, 0.2, 1.0);
        fill(h + "ln_2.bias", {d}, 0.1);
        fill(h + "mlp.c_fc.weight", {d, 4 * d}, w_in);
        fill(h + "mlp.c_fc.bias", {4 * d}, 0.1);
        fill(h + "mlp.c_proj.weight", {4 * d, d}, w_hidden);
        fill(h + "mlp.c_proj.bias", {d}, 0.1);
    }
    fill("ln_f.weight", {d}, 0.2, 1.0);
    fill("ln_f.bias", {d}, 0.1);
    return out;
}

}  // namespace tracelm
