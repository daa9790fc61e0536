#include <cstdlib>
#include <mutex>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "commands.hpp"
#include "tracelm/cli.hpp"

namespace tracelm {

namespace {

void configure_logging() {
    static std::once_flag once;
    std::call_once(once, [] {
        auto logger = spdlog::stderr_color_mt("trace");
        spdlog::set_default_logger(logger);
        spdlog::set_pattern("[%l] %v");
        const char* level = std::getenv("TRACE_LOG");
        spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::warn);
    });
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    configure_logging();
    CLI::App app{"Record, check and serve language model traces"};
    app.name("trace");
    app.require_subcommand(1);

    cli::GenerateOptions gen;
    std::optional<std::int64_t> eos_id;
    auto* generate = app.add_subcommand("generate", "Run every catalog prompt through the model and write traces");
    generate->add_option("--model", gen.model_dir, "Directory holding model.safetensors and config.json")->required();
    generate->add_option("--tokenizer", gen.tokenizer_dir,
                         "Directory holding vocab.json and merges.txt (default: the model directory)");
    generate->add_option("--vocab", gen.vocab, "vocab.json path (overrides --tokenizer)");
    generate->add_option("--merges", gen.merges, "merges.txt path (overrides --tokenizer)");
    generate->add_option("--catalog", gen.catalog, "Prompt catalog JSON")->required();
    generate->add_option("--out", gen.out, "Output root; traces go to OUT/traces/<model>/<lang>/")->required();
    generate->add_option("--model-id", gen.model_id, "Model id in traces and paths (default: model directory name)");
    generate->add_option("--tokenizer-id", gen.tokenizer_id, "Tokenizer id recorded in traces")
        ->capture_default_str();
    generate->add_option("--languages", gen.languages, "Comma-separated subset of catalog languages")
        ->delimiter(',');
    generate->add_option("--strategy", gen.strategy, "Decoding strategy")
        ->check(CLI::IsMember({"greedy", "top_k"}))
        ->capture_default_str();
    generate->add_option("--k", gen.k, "Pool size for top_k (clamped to the vocabulary)")->capture_default_str();
    generate->add_option("--temperature", gen.temperature, "Softmax temperature; 0 means argmax")
        ->capture_default_str();
    generate->add_option("--seed", gen.seed, "Sampling seed")->capture_default_str();
    generate->add_option("--max-new-tokens", gen.max_new_tokens, "Tokens to generate per prompt")
        ->capture_default_str();
    generate->add_flag("--stop-at-eos", gen.stop_at_eos, "Stop when the end-of-text token is chosen");
    generate->add_option("--eos-id", eos_id, "End-of-text token id (default: <|endoftext|> when present)");
    generate->add_option("--capture", gen.capture, "Capture level")
        ->check(CLI::IsMember({"none", "simple", "detailed"}))
        ->capture_default_str();
    generate->add_option("--preview-dims", gen.preview_dims, "Hidden-state preview width at detailed capture")
        ->capture_default_str();
    generate->add_option("--attention", gen.attention, "Attention storage at detailed capture")
        ->check(CLI::IsMember({"head_mean", "per_head"}))
        ->capture_default_str();
    generate->add_option("--candidates", gen.candidates, "Top candidates stored per step (K)")
        ->capture_default_str();
    generate->add_option("--quant-digits", gen.quant_digits, "Significant digits kept for floats")
        ->capture_default_str();
    generate->add_option("--jobs,-j", gen.jobs, "Worker threads (default: hardware concurrency)");
    generate->add_flag("--no-manifest", gen.no_manifest, "Do not rewrite OUT/manifest.json");

    std::vector<std::string> validate_inputs;
    std::string validate_format = "text";
    auto* validate = app.add_subcommand("validate", "Check trace files against the schema");
    validate->add_option("paths", validate_inputs, "Files, directories or glob patterns")->required();
    validate->add_option("--format", validate_format, "Report format")
        ->check(CLI::IsMember({"text", "json"}))
        ->capture_default_str();

    std::filesystem::path inspect_path;
    std::optional<std::size_t> inspect_step;
    std::size_t inspect_top = 1000000;
    auto* inspect = app.add_subcommand("inspect", "Print a trace, or one step or position in detail");
    inspect->add_option("path", inspect_path, "Trace file")->required();
    inspect->add_option("--step", inspect_step, "Step (generation) or position index (training)");
    inspect->add_option("--top", inspect_top, "Show at most this many candidates");

    std::filesystem::path diff_a, diff_b;
    double tolerance = 1e-4;
    auto* diff = app.add_subcommand("diff", "Compare two traces field by field");
    diff->add_option("a", diff_a, "First trace")->required();
    diff->add_option("b", diff_b, "Second trace")->required();
    diff->add_option("--tolerance", tolerance, "Absolute tolerance for floats")->capture_default_str();

    std::filesystem::path manifest_root;
    auto* manifest = app.add_subcommand("manifest", "Rebuild ROOT/manifest.json from ROOT/traces");
    manifest->add_option("root", manifest_root, "Output root")->required();

    std::filesystem::path serve_root, serve_viewer;
    std::string host = "127.0.0.1";
    int port = 8000;
    auto* serve = app.add_subcommand("serve", "Serve the viewer bundle and traces as static files");
    serve->add_option("root", serve_root, "Output root (manifest.json and traces/)")->required();
    serve->add_option("--viewer", serve_viewer, "Viewer bundle directory, served at /");
    serve->add_option("--host", host, "Bind address")->capture_default_str();
    serve->add_option("--port", port, "Port; 0 picks a free one")->capture_default_str();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    if (*generate) {
        gen.eos_id = eos_id;
        return cli::cmd_generate(gen, out, err);
    }
    if (*validate) return cli::cmd_validate(validate_inputs, validate_format, out, err);
    if (*inspect) return cli::cmd_inspect(inspect_path, inspect_step, inspect_top, out, err);
    if (*diff) return cli::cmd_diff(diff_a, diff_b, tolerance, out, err);
    if (*manifest) return cli::cmd_manifest(manifest_root, out, err);
    return cli::cmd_serve(serve_root, serve_viewer, host, port, out, err);
}

}  // namespace tracelm
