#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace tracelm::cli {

struct GenerateOptions {
    std::filesystem::path model_dir;
    std::filesystem::path tokenizer_dir;  // defaults to model_dir
    std::filesystem::path vocab;
    std::filesystem::path merges;
    std::filesystem::path catalog;
    std::filesystem::path out;
    std::string model_id;  // defaults to the model directory name
    std::string tokenizer_id = "gpt2";
    std::vector<std::string> languages;

    std::string strategy = "greedy";
    std::size_t k = 40;
    double temperature = 1.0;
    std::uint64_t seed = 0;
    std::size_t max_new_tokens = 30;
    bool stop_at_eos = false;
    std::optional<std::int64_t> eos_id;

    std::string capture = "detailed";
    std::size_t preview_dims = 8;
    std::string attention = "head_mean";
    std::size_t candidates = 10;
    int quant_digits = 5;

    unsigned jobs = 0;  // 0: hardware concurrency
    bool no_manifest = false;
};

int cmd_generate(const GenerateOptions& opt, std::ostream& out, std::ostream& err);
int cmd_validate(const std::vector<std::string>& inputs, const std::string& format, std::ostream& out,
                 std::ostream& err);
int cmd_inspect(const std::filesystem::path& path, std::optional<std::size_t> step, std::size_t top,
                std::ostream& out, std::ostream& err);
int cmd_diff(const std::filesystem::path& a, const std::filesystem::path& b, double tolerance, std::ostream& out,
             std::ostream& err);
int cmd_manifest(const std::filesystem::path& root, std::ostream& out, std::ostream& err);
int cmd_serve(const std::filesystem::path& root, const std::filesystem::path& viewer, const std::string& host,
              int port, std::ostream& out, std::ostream& err);

}  // namespace tracelm::cli
