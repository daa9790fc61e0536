#include "commands.hpp"

#include <glob.h>
#include <pthread.h>
#include <signal.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "tracelm/catalog.hpp"
#include "tracelm/cli.hpp"
#include "tracelm/error.hpp"
#include "tracelm/generation.hpp"
#include "tracelm/model.hpp"
#include "tracelm/schema.hpp"

namespace tracelm::cli {

namespace fs = std::filesystem;

namespace {

std::string read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string quoted(const std::string& s) {
    return nlohmann::json(s).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

std::string bar(double p, std::size_t width = 30) {
    const auto filled = static_cast<std::size_t>(std::clamp(p, 0.0, 1.0) * static_cast<double>(width) + 0.5);
    return std::string(filled, '#') + std::string(width - filled, '.');
}

struct Job {
    std::string language;
    const CatalogPrompt* prompt;
    std::string kind;
    fs::path path;
};

struct JobResult {
    bool ok = false;
    std::size_t bytes = 0;
    std::string error;
};

// ---------------------------------------------------------------- generate

struct Engine {
    std::optional<BpeVocab> vocab;
    ModelWeights weights;
    DecodeParams decode;
    CaptureSpec capture;
    TraceOptions options;
    int quant_digits = kDefaultQuantDigits;
};

Engine load_engine(const GenerateOptions& opt) {
    Engine e;
    fs::path vocab_path = opt.vocab;
    fs::path merges_path = opt.merges;
    const fs::path tok_dir = opt.tokenizer_dir.empty() ? opt.model_dir : opt.tokenizer_dir;
    if (vocab_path.empty()) vocab_path = tok_dir / "vocab.json";
    if (merges_path.empty()) merges_path = tok_dir / "merges.txt";
    e.vocab = BpeVocab::load_files(vocab_path, merges_path);
    spdlog::debug("tokenizer: {} tokens, {} merges", e.vocab->size(), e.vocab->merge_count());

    const ModelConfig config = ModelConfig::read(opt.model_dir / "config.json");
    e.weights = load_model(TensorFile::read(opt.model_dir / "model.safetensors"), config);
    spdlog::debug("model: {} layers, d_model {}, vocab {}", config.n_layer, config.d_model, config.vocab_size);

    e.decode.strategy = parse_decode_strategy(opt.strategy);
    e.decode.k = opt.k;
    e.decode.temperature = opt.temperature;
    e.decode.seed = opt.seed;
    e.decode.max_new_tokens = opt.max_new_tokens;
    e.decode.stop_at_eos = opt.stop_at_eos;
    if (opt.eos_id) {
        e.decode.eos_id = static_cast<TokenId>(*opt.eos_id);
    } else if (auto id = e.vocab->special("<|endoftext|>")) {
        e.decode.eos_id = *id;
    } else if (auto found = e.vocab->find("<|endoftext|>")) {
        e.decode.eos_id = *found;
    }
    if (opt.stop_at_eos && !e.decode.eos_id) throw ParameterError("--stop-at-eos needs --eos-id for this tokenizer");
    e.decode.validate();

    e.capture.level = parse_capture_level(opt.capture);
    e.capture.preview_dims = opt.preview_dims;
    e.capture.attention_reduction = parse_attention_reduction(opt.attention);

    e.options.model_id = opt.model_id.empty() ? fs::absolute(opt.model_dir).lexically_normal().filename().string()
                                              : opt.model_id;
    if (e.options.model_id.empty()) e.options.model_id = fs::absolute(opt.model_dir).parent_path().filename().string();
    e.options.tokenizer_id = opt.tokenizer_id;
    e.options.candidate_count = opt.candidates;
    if (opt.quant_digits < 1 || opt.quant_digits > 17) throw ParameterError("--quant-digits must be in 1..17");
    e.quant_digits = opt.quant_digits;
    return e;
}

JobResult run_job(const Engine& e, const Job& job) {
    JobResult r;
    try {
        const PromptSpec prompt{job.prompt->id, job.language, job.prompt->text};
        std::string bytes;
        if (job.kind == "generation") {
            bytes = serialize_trace(generate_trace(e.weights, *e.vocab, prompt, e.decode, e.capture, e.options),
                                    e.quant_digits);
        } else {
            CaptureSpec capture = e.capture;
            capture.full_attention = capture.level == CaptureLevel::detailed;
            bytes = serialize_trace(training_trace(e.weights, *e.vocab, prompt, capture, e.options), e.quant_digits);
        }
        write_file_atomic(job.path, bytes);
        r.ok = true;
        r.bytes = bytes.size();
    } catch (const std::exception& ex) {
        r.error = ex.what();
    }
    return r;
}

// ---------------------------------------------------------------- inspect

void print_header(const ParsedTrace& t, std::ostream& out) {
    const TraceHeader& h = t.header();
    out << (t.is_generation() ? "generation" : "training") << " trace: model " << h.model.id << ", language "
        << h.prompt.language << ", prompt " << h.prompt.id << ", capture " << to_string(h.capture.level) << "\n";
    out << "prompt " << quoted(h.prompt.text) << " (" << h.prompt_tokens.size() << " tokens)\n  ";
    for (std::size_t i = 0; i < h.prompt_tokens.size(); ++i) {
        out << (i ? " | " : "") << quoted(h.prompt_tokens[i].text);
    }
    out << "\n";
}

void print_candidates(const std::vector<CandidateEntry>& candidates, std::size_t top, std::ostream& out) {
    const std::size_t n = std::min(top, candidates.size());
    for (std::size_t i = 0; i < n; ++i) {
        const auto& c = candidates[i];
        out << fmt::format("  {:>3}  {} {:.5f}  {:>6}  {}\n", c.rank, bar(c.p), c.p, c.id, quoted(c.text));
    }
    if (n < candidates.size()) out << "  ... " << candidates.size() - n << " more\n";
}

int inspect_generation(const ParsedTrace& parsed, std::optional<std::size_t> step, std::size_t top,
                       std::ostream& out, std::ostream& err) {
    const auto& t = std::get<GenerationTrace>(parsed.trace);
    out << "decode " << to_string(t.decode.strategy) << ", k " << t.decode.k << ", temperature "
        << t.decode.temperature << ", seed " << t.decode.seed << "; " << t.steps.size() << " steps, stop "
        << to_string(t.stop_reason) << "\n";
    if (!step) {
        for (std::size_t i = 0; i < t.steps.size(); ++i) {
            const auto& s = t.steps[i];
            out << fmt::format("  step {:>3}  pos {:>4}  p {:.5f}  rank {:>5}  {}\n", i, s.position, s.chosen.p,
                               s.chosen.rank, quoted(s.chosen.text));
        }
        return kExitOk;
    }
    if (*step >= t.steps.size()) {
        err << "error: step " << *step << " out of range; valid steps are 0.." << t.steps.size() - 1 << "\n";
        return kExitUsage;
    }
    const auto& s = t.steps[*step];
    out << "step " << *step << " (position " << s.position << ")\n";
    out << "chosen " << quoted(s.chosen.text) << " id " << s.chosen.id << " p " << fmt::format("{:.5f}", s.chosen.p)
        << " rank " << s.chosen.rank << (s.chosen.in_candidates ? "" : " (outside the stored candidates)") << "\n";
    out << "candidates (" << s.candidates.size() << "):\n";
    print_candidates(s.candidates, top, out);
    out << fmt::format("other mass {:.5f}\n", s.other_mass);
    return kExitOk;
}

int inspect_training(const ParsedTrace& parsed, std::optional<std::size_t> step, std::size_t top,
                     std::ostream& out, std::ostream& err) {
    const auto& t = std::get<TrainingTrace>(parsed.trace);
    out << t.positions.size() << " positions, mean loss " << fmt::format("{:.5f}", t.mean_loss) << "\n";
    if (!step) {
        out << fmt::format("  {:>4}  {:>8}  {:>9}  {}\n", "pos", "p_target", "loss", "target");
        for (const auto& p : t.positions) {
            out << fmt::format("  {:>4}  {:>8.5f}  {:>9.5f}  {}\n", p.position, p.p_target, p.loss,
                               quoted(p.target.text));
        }
        return kExitOk;
    }
    if (*step >= t.positions.size()) {
        err << "error: position index " << *step << " out of range; valid indices are 0.." << t.positions.size() - 1
            << "\n";
        return kExitUsage;
    }
    const auto& p = t.positions[*step];
    out << "position " << p.position << ": target " << quoted(p.target.text) << " id " << p.target.id << "\n";
    out << fmt::format("p_target {:.5f}  loss {:.5f}{}\n", p.p_target, p.loss, p.loss_floored ? " (floored)" : "");
    out << "candidates (" << p.candidates.size() << "):\n";
    print_candidates(p.candidates, top, out);
    out << fmt::format("other mass {:.5f}\n", p.other_mass);
    out << "logit gradient:\n";
    for (const auto& g : p.grad_top) out << fmt::format("  {:>6}  {:+.5f}\n", g.id, g.g);
    return kExitOk;
}

// ---------------------------------------------------------------- validate

bool has_glob_chars(const std::string& s) { return s.find_first_of("*?[") != std::string::npos; }

void collect_directory(const fs::path& dir, std::vector<fs::path>& files) {
    std::vector<fs::path> found;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file() || e.path().extension() != ".json") continue;
        const auto name = e.path().filename().string();
        if (name == "manifest.json" || name == "model.json") continue;
        found.push_back(e.path());
    }
    std::sort(found.begin(), found.end());
    files.insert(files.end(), found.begin(), found.end());
}

}  // namespace

int cmd_generate(const GenerateOptions& opt, std::ostream& out, std::ostream& err) {
    const auto t0 = std::chrono::steady_clock::now();
    Engine engine;
    PromptCatalog catalog;
    try {
        engine = load_engine(opt);
        catalog = PromptCatalog::read(opt.catalog);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    std::vector<std::string> languages = opt.languages;
    if (languages.empty()) {
        for (auto loc : kSupportedLocales) {
            if (catalog.languages.count(std::string(loc))) languages.emplace_back(loc);
        }
    }
    std::vector<Job> jobs;
    for (const auto& lang : languages) {
        auto it = catalog.languages.find(lang);
        if (it == catalog.languages.end()) {
            err << "error: language '" << lang << "' is not in catalog " << opt.catalog.string() << "\n";
            return kExitUsage;
        }
        for (const auto& prompt : it->second) {
            for (const auto& kind : prompt.kinds()) {
                jobs.push_back({lang, &prompt, kind,
                                opt.out / trace_relative_path(engine.options.model_id, lang, prompt.id, kind)});
            }
        }
    }
    try {
        for (const auto& job : jobs) fs::create_directories(job.path.parent_path());
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    std::vector<JobResult> results(jobs.size());
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            results[i] = run_job(engine, jobs[i]);
            spdlog::info("{} {}/{}: {}", jobs[i].kind, jobs[i].language, jobs[i].prompt->id,
                         results[i].ok ? "ok" : results[i].error);
        }
    };
    std::size_t n_threads = opt.jobs ? opt.jobs : std::max(1u, std::thread::hardware_concurrency());
    n_threads = std::min(n_threads, std::max<std::size_t>(jobs.size(), 1));
    {
        std::vector<std::jthread> pool;
        for (std::size_t i = 1; i < n_threads; ++i) pool.emplace_back(worker);
        worker();
    }

    struct Row {
        std::size_t prompts = 0, files = 0, failed = 0, bytes = 0;
    };
    std::map<std::string, Row> rows;
    Row total;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        Row& row = rows[jobs[i].language];
        for (Row* r : {&row, &total}) {
            r->files += results[i].ok;
            r->failed += !results[i].ok;
            r->bytes += results[i].bytes;
        }
    }
    for (const auto& lang : languages) {
        rows[lang].prompts = catalog.languages.at(lang).size();
        total.prompts += rows[lang].prompts;
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out << fmt::format("{:<10} {:>7} {:>6} {:>7} {:>12}\n", "language", "prompts", "files", "failed", "bytes");
    for (const auto& lang : languages) {
        const Row& r = rows[lang];
        out << fmt::format("{:<10} {:>7} {:>6} {:>7} {:>12}\n", lang, r.prompts, r.files, r.failed, r.bytes);
    }
    out << fmt::format("{:<10} {:>7} {:>6} {:>7} {:>12}\n", "total", total.prompts, total.files, total.failed,
                       total.bytes);
    out << fmt::format("model {}, {} worker(s), {:.2f} s\n", engine.options.model_id, n_threads, seconds);

    int status = kExitOk;
    if (total.failed) {
        err << total.failed << " of " << jobs.size() << " job(s) failed:\n";
        for (std::size_t i = 0; i < jobs.size(); ++i) {
            if (!results[i].ok) {
                err << "  " << jobs[i].language << "/" << jobs[i].prompt->id << " " << jobs[i].kind << ": "
                    << results[i].error << "\n";
            }
        }
        status = kExitPartial;
    }
    if (!opt.no_manifest && total.files) {
        try {
            write_manifest(opt.out);
            out << "wrote " << (opt.out / "manifest.json").string() << "\n";
        } catch (const Error& e) {
            err << "error: manifest: " << e.what() << "\n";
            return kExitUsage;
        }
    }
    return status;
}

int cmd_validate(const std::vector<std::string>& inputs, const std::string& format, std::ostream& out,
                 std::ostream& err) {
    std::vector<fs::path> files;
    for (const auto& input : inputs) {
        std::vector<fs::path> matches;
        if (has_glob_chars(input)) {
            glob_t g{};
            if (::glob(input.c_str(), 0, nullptr, &g) == 0) {
                for (std::size_t i = 0; i < g.gl_pathc; ++i) matches.emplace_back(g.gl_pathv[i]);
            }
            globfree(&g);
        } else if (fs::exists(input)) {
            matches.emplace_back(input);
        } else {
            err << "error: no such file or directory: " << input << "\n";
            return kExitUsage;
        }
        for (const auto& m : matches) {
            if (fs::is_directory(m)) {
                collect_directory(m, files);
            } else {
                files.push_back(m);
            }
        }
    }
    if (files.empty()) {
        err << "error: no inputs\n";
        return kExitUsage;
    }

    nlohmann::ordered_json report;
    report["ok"] = true;
    report["files"] = nlohmann::ordered_json::array();
    std::size_t invalid = 0;
    for (const auto& f : files) {
        std::string bytes;
        try {
            bytes = read_bytes(f);
        } catch (const Error& e) {
            err << "error: " << e.what() << "\n";
            return kExitUsage;
        }
        const ValidationReport r = validate(bytes);
        invalid += !r.ok();
        if (format == "json") {
            auto entry = nlohmann::ordered_json::parse(r.to_json());
            report["files"].push_back({{"path", f.string()}, {"ok", r.ok()}, {"violations", entry["violations"]}});
        } else if (r.ok()) {
            out << "ok    " << f.string() << "\n";
        } else {
            out << "FAIL  " << f.string() << " (" << r.violations.size() << " violation(s))\n";
            for (const auto& v : r.violations) out << "      " << v.path << ": " << v.message << "\n";
        }
    }
    if (format == "json") {
        report["ok"] = invalid == 0;
        out << report.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << "\n";
    } else {
        out << files.size() << " file(s), " << invalid << " invalid\n";
    }
    return invalid ? kExitFindings : kExitOk;
}

int cmd_inspect(const fs::path& path, std::optional<std::size_t> step, std::size_t top, std::ostream& out,
                std::ostream& err) {
    std::string bytes;
    try {
        bytes = read_bytes(path);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    try {
        const ParsedTrace parsed = parse_trace(bytes, path.string());
        print_header(parsed, out);
        return parsed.is_generation() ? inspect_generation(parsed, step, top, out, err)
                                      : inspect_training(parsed, step, top, out, err);
    } catch (const ValidationError& e) {
        err << "error: " << e.what();
        return kExitFindings;
    }
}

int cmd_diff(const fs::path& a, const fs::path& b, double tolerance, std::ostream& out, std::ostream& err) {
    std::string ba, bb;
    try {
        ba = read_bytes(a);
        bb = read_bytes(b);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    try {
        const DiffReport report = diff_traces(ba, bb, tolerance);
        out << report.to_text();
        if (!report.empty()) {
            err << report.total << " difference(s) at tolerance " << tolerance << "\n";
            return kExitFindings;
        }
        return kExitOk;
    } catch (const ValidationError& e) {
        err << "error: " << e.what();
        return kExitFindings;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}

int cmd_manifest(const fs::path& root, std::ostream& out, std::ostream& err) {
    try {
        const std::string bytes = write_manifest(root);
        const auto entries = nlohmann::json::parse(bytes)["entries"].size();
        out << "wrote " << (root / "manifest.json").string() << " (" << entries << " entries)\n";
        return kExitOk;
    } catch (const ValidationError& e) {
        err << "error: " << e.what();
        return kExitFindings;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}

int cmd_serve(const fs::path& root, const fs::path& viewer, const std::string& host, int port, std::ostream& out,
              std::ostream& err) {
    // Block the stop signals before the server spawns its threads so only sigwait sees them.
    sigset_t stop_signals;
    sigemptyset(&stop_signals);
    sigaddset(&stop_signals, SIGINT);
    sigaddset(&stop_signals, SIGTERM);
    sigset_t previous;
    pthread_sigmask(SIG_BLOCK, &stop_signals, &previous);

    StaticServer server;
    try {
        server.start(root, viewer, host, port);
    } catch (const Error& e) {
        pthread_sigmask(SIG_SETMASK, &previous, nullptr);
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    out << "serving " << root.string() << (viewer.empty() ? "" : " + " + viewer.string()) << " at http://" << host
        << ":" << server.port() << "/ (Ctrl-C to stop)" << std::endl;
    int sig = 0;
    sigwait(&stop_signals, &sig);
    server.stop();
    pthread_sigmask(SIG_SETMASK, &previous, nullptr);
    return kExitOk;
}

}  // namespace tracelm::cli
