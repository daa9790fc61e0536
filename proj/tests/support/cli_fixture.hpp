#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "fixtures.hpp"
#include "tracelm/cli.hpp"
#include "tracelm/model.hpp"
#include "tracelm/random_model.hpp"

namespace tracelm::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("tracelm-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    std::filesystem::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << text;
}

/// Model directory with a random 256-token checkpoint plus a byte-level
/// tokenizer (vocab.json, merges.txt) that matches it.
inline std::filesystem::path write_byte_model(const std::filesystem::path& dir, std::size_t n_ctx = 64,
                                              std::uint64_t seed = 11) {
    const ModelConfig cfg{.n_layer = 2, .n_head = 2, .d_model = 8, .n_ctx = n_ctx, .vocab_size = 256};
    write_text(dir / "model.safetensors", write_tensor_file(random_gpt2_tensors(cfg, seed)));
    write_text(dir / "config.json", cfg.to_json());
    write_text(dir / "vocab.json", byte_vocab_json());
    write_text(dir / "merges.txt", "#version: 0.2\n");
    return dir;
}

struct CliResult {
    int code = -1;
    std::string out;
    std::string err;
};

inline CliResult run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    CliResult r;
    r.code = run_cli(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

}  // namespace tracelm::testing
