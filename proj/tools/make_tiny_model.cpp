// Writes a seeded random GPT-2-shaped checkpoint (model.safetensors +
// config.json) for demos and tests.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "tracelm/error.hpp"
#include "tracelm/model.hpp"
#include "tracelm/random_model.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Write a seeded random GPT-2-shaped checkpoint"};
    tracelm::ModelConfig cfg{.n_layer = 2, .n_head = 2, .d_model = 8, .n_ctx = 16, .vocab_size = 16};
    std::uint64_t seed = 1234;
    std::filesystem::path out_dir;
    std::string dtype = "F32";
    app.add_option("--out", out_dir, "Output directory")->required();
    app.add_option("--n-layer", cfg.n_layer);
    app.add_option("--n-head", cfg.n_head);
    app.add_option("--d-model", cfg.d_model);
    app.add_option("--n-ctx", cfg.n_ctx);
    app.add_option("--vocab-size", cfg.vocab_size);
    app.add_option("--seed", seed);
    app.add_option("--dtype", dtype)->check(CLI::IsMember({"F32", "F16"}));
    CLI11_PARSE(app, argc, argv);

    try {
        auto tensors = tracelm::random_gpt2_tensors(cfg, seed);
        for (auto& [name, t] : tensors) t.dtype = dtype;
        std::filesystem::create_directories(out_dir);
        std::ofstream(out_dir / "model.safetensors", std::ios::binary) << tracelm::write_tensor_file(tensors);
        std::ofstream(out_dir / "config.json") << cfg.to_json();
    } catch (const tracelm::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    std::cout << "wrote " << (out_dir / "model.safetensors").string() << "\n";
    return 0;
}
