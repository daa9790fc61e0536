#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include <json.hpp>

#include "support/fixtures.hpp"
#include "support/mutations.hpp"
#include "support/tiny_model.hpp"
#include "support/trace_factory.hpp"
#include "tracelm/generation.hpp"
#include "tracelm/schema.hpp"

using namespace tracelm;
using namespace tracelm::testing;
namespace fs = std::filesystem;

namespace {

GenerationTrace small_generation(std::uint64_t seed = 1, CaptureLevel level = CaptureLevel::simple,
                                 const std::string& id = "p1", const std::string& lang = "en") {
    DecodeParams p;
    p.strategy = DecodeStrategy::top_k;
    p.k = 20;
    p.seed = seed;
    p.max_new_tokens = 6;
    return generate_trace(gpt2_shaped_model().weights, gpt2_vocab(), {id, lang, "The weather today is"}, p,
                          {.level = level}, {.model_id = "small"});
}

TrainingTrace small_training(CaptureLevel level = CaptureLevel::simple, const std::string& id = "p1",
                             const std::string& lang = "en") {
    return training_trace(gpt2_shaped_model().weights, gpt2_vocab(), {id, lang, "Paris is the capital of France."},
                          {.level = level}, {.model_id = "small"});
}

bool has_violation_at(const ValidationReport& r, const std::string& path) {
    return std::any_of(r.violations.begin(), r.violations.end(), [&](const Violation& v) { return v.path == path; });
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("tracelm-schema-" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("quantization") {
    CHECK(quantize(0.123456789, 5) == 0.12346);
    CHECK(nlohmann::json(quantize(0.123456789, 5)).dump() == "0.12346");
    CHECK(quantize(-0.0, 5) == 0.0);
    CHECK_FALSE(std::signbit(quantize(-0.0, 5)));
    CHECK(quantize(123456.0, 3) == 123000.0);
    CHECK(quantize(1.0, 5) == 1.0);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-10, 10);
    for (int i = 0; i < 1000; ++i) {
        const double v = u(rng);
        const double q = quantize(v, 5);
        CHECK(quantize(q, 5) == q);
        CHECK(std::abs(q - v) <= 5e-5 * std::abs(v));
    }
}

TEST_CASE("canonical serialization") {
    const auto gen = small_generation();
    const std::string bytes = serialize_trace(gen);

    CHECK(bytes.find('\n') == std::string::npos);
    CHECK(bytes.rfind(R"({"schema_version":"1.0","kind":"generation","quant_digits":5,"model":{"id":"small")", 0) == 0);
    CHECK(validate(bytes).ok());
    CHECK(serialize_trace(gen) == bytes);

    SUBCASE("serialize . parse . serialize is the identity") {
        for (const std::string& b : {bytes, serialize_trace(small_training(CaptureLevel::detailed)),
                                     serialize_trace(small_generation(3, CaptureLevel::detailed), 7)}) {
            CHECK(parse_trace(b).serialize() == b);
        }
    }
    SUBCASE("parse restores the in-memory trace up to quantization") {
        const auto parsed = std::get<GenerationTrace>(parse_trace(bytes).trace);
        REQUIRE(parsed.steps.size() == gen.steps.size());
        CHECK(parsed.header.prompt_tokens == gen.header.prompt_tokens);
        CHECK(parsed.decode.seed == gen.decode.seed);
        for (std::size_t i = 0; i < gen.steps.size(); ++i) {
            CHECK(parsed.steps[i].chosen.id == gen.steps[i].chosen.id);
            CHECK(parsed.steps[i].chosen.p == doctest::Approx(gen.steps[i].chosen.p).epsilon(1e-5));
        }
    }
    SUBCASE("seed above 2^53 survives") {
        auto g = gen;
        g.decode.seed = 18446744073709551615ULL;
        const auto b = serialize_trace(g);
        CHECK(b.find(R"("seed":"18446744073709551615")") != std::string::npos);
        CHECK(std::get<GenerationTrace>(parse_trace(b).trace).decode.seed == 18446744073709551615ULL);
    }
    SUBCASE("non-finite values name the field") {
        auto g = small_generation(1, CaptureLevel::detailed);
        g.steps[2].detail->layers[1].hidden_norm[0] = std::nanf("");
        CHECK_THROWS_WITH_AS(serialize_trace(g), "steps[2].detail.layers[1].hidden_norm[0]: non-finite value",
                             SerializationError);
        auto t = small_training();
        t.positions[0].loss = INFINITY;
        CHECK_THROWS_WITH_AS(serialize_trace(t), "positions[0].loss: non-finite value", SerializationError);
    }
    SUBCASE("invalid UTF-8 text") {
        auto g = gen;
        g.header.prompt.text = "\xff";
        CHECK_THROWS_WITH_AS(serialize_trace(g), doctest::Contains("prompt.text"), SerializationError);
    }
    SUBCASE("quant digits domain") { CHECK_THROWS_AS(serialize_trace(gen, 0), ParameterError); }
}

TEST_CASE("validate examples") {
    const std::string bytes = serialize_trace(small_generation());
    CHECK(validate(bytes).ok());

    auto doc = nlohmann::json::parse(bytes);
    doc["steps"][1]["candidates"][3]["p"] = 1.5;
    const auto r = validate(doc.dump());
    CHECK_FALSE(r.ok());
    CHECK(has_violation_at(r, "steps[1].candidates[3].p"));

    const auto truncated = validate(bytes.substr(0, bytes.size() / 2));
    REQUIRE(truncated.violations.size() == 1);
    CHECK(truncated.violations[0].path == "$");
    CHECK(truncated.violations[0].message.rfind("malformed JSON", 0) == 0);

    CHECK(validate("").violations[0].message.rfind("malformed JSON", 0) == 0);
    CHECK(validate("\xff\xfe").violations[0].message.rfind("malformed JSON", 0) == 0);
    CHECK(has_violation_at(validate("[]"), "$"));
    CHECK(has_violation_at(validate(R"({"schema_version":"1.0"})"), "kind"));

    const auto json_report = nlohmann::json::parse(r.to_json());
    CHECK(json_report["ok"] == false);
    CHECK(json_report["violations"][0].contains("path"));
}

TEST_CASE("every engine-produced trace validates") {
    std::mt19937_64 rng(2024);
    int generation = 0, training = 0;
    for (int i = 0; i < 150; ++i) {
        const auto t = random_engine_trace(rng);
        (t.generation ? generation : training)++;
        const auto report = validate(t.bytes);
        INFO(report.to_text());
        CHECK(report.ok());
        CHECK(parse_trace(t.bytes).serialize() == t.bytes);
    }
    CHECK(generation > 30);
    CHECK(training > 30);
}

TEST_CASE("mutation sensitivity") {
    const auto mutations = trace_mutations();
    std::mt19937_64 rng(99);
    std::vector<std::string> traces;
    for (int i = 0; i < 40; ++i) traces.push_back(random_engine_trace(rng).bytes);
    traces.push_back(serialize_trace(small_generation(1, CaptureLevel::detailed)));
    traces.push_back(serialize_trace(small_training(CaptureLevel::detailed)));

    for (const auto& m : mutations) {
        int applied = 0, detected = 0;
        for (const auto& bytes : traces) {
            auto doc = nlohmann::json::parse(bytes);
            if (!m.apply(doc, rng)) continue;
            ++applied;
            const auto report = validate(doc.dump());
            if (!report.ok()) {
                ++detected;
            } else {
                MESSAGE(m.name << " undetected on " << doc.dump().substr(0, 300));
            }
        }
        INFO(m.name);
        CHECK(applied > 0);
        CHECK(detected == applied);
    }
}

TEST_CASE("diff_traces") {
    const std::string a = serialize_trace(small_generation(1));
    CHECK(diff_traces(a, a, 0.0).empty());

    SUBCASE("re-quantized from 6 to 5 digits") {
        const auto g = small_generation(1, CaptureLevel::detailed);
        CHECK(diff_traces(serialize_trace(g, 6), serialize_trace(g, 5), 1e-4).empty());
        CHECK_FALSE(diff_traces(serialize_trace(g, 6), serialize_trace(g, 3), 1e-6).empty());
    }
    SUBCASE("different seeds diverge at the first differing chosen token") {
        const auto g1 = small_generation(1);
        const auto g2 = small_generation(2);
        std::size_t first = 0;
        while (first < g1.steps.size() && g1.steps[first].chosen.id == g2.steps[first].chosen.id) ++first;
        REQUIRE(first < g1.steps.size());
        const auto report = diff_traces(serialize_trace(g1), serialize_trace(g2), 1e-4);
        CHECK_FALSE(report.empty());
        REQUIRE(report.first_divergent_step.has_value());
        CHECK(*report.first_divergent_step == first);
        const std::string path = "steps[" + std::to_string(first) + "].chosen.id";
        CHECK(std::any_of(report.differences.begin(), report.differences.end(),
                          [&](const Difference& d) { return d.path == path; }));
        CHECK(report.to_text().find("first divergent chosen token at step " + std::to_string(first)) != std::string::npos);
    }
    SUBCASE("structural differences") {
        const std::string t = serialize_trace(small_training());
        const auto report = diff_traces(a, t, 1e-4);
        CHECK_FALSE(report.empty());
        CHECK(std::any_of(report.differences.begin(), report.differences.end(),
                          [](const Difference& d) { return d.path == "steps" && d.message == "only in first trace"; }));
    }
    SUBCASE("invalid input") {
        try {
            diff_traces(a, "{", 1e-4);
            FAIL("expected ValidationError");
        } catch (const ValidationError& e) {
            CHECK(e.report().violations[0].message.rfind("malformed JSON", 0) == 0);
        }
    }
}

TEST_CASE("build_manifest") {
    TempDir dir;
    const auto write = [&](const std::string& model, const std::string& lang, const std::string& prompt,
                           const std::string& bytes, std::string_view kind) {
        write_file_atomic(dir.path / trace_relative_path(model, lang, prompt, kind), bytes);
    };

    SUBCASE("empty root") {
        const auto m = nlohmann::json::parse(write_manifest(dir.path));
        CHECK(m["entries"].empty());
        CHECK(m["models"].empty());
        CHECK(fs::exists(dir.path / "manifest.json"));
    }
    SUBCASE("2 models x 2 languages x 3 prompts x 2 kinds") {
        for (const std::string model : {"small", "other"}) {
            for (const std::string lang : {"fr", "en"}) {
                for (const std::string prompt : {"p3", "p1", "p2"}) {
                    auto g = small_generation(1, CaptureLevel::simple, prompt, lang);
                    auto t = small_training(CaptureLevel::simple, prompt, lang);
                    g.header.model.id = t.header.model.id = model;
                    write(model, lang, prompt, serialize_trace(g), "generation");
                    write(model, lang, prompt, serialize_trace(t), "training");
                }
            }
        }
        fs::create_directories(dir.path / "traces" / "small");
        std::ofstream(dir.path / "traces" / "small" / "model.json") << R"({"display_name":"Small random GPT-2"})";
        const auto m = nlohmann::json::parse(write_manifest(dir.path));
        const auto& entries = m["entries"];
        REQUIRE(entries.size() == 24);
        for (std::size_t i = 1; i < entries.size(); ++i) {
            const auto key = [](const nlohmann::json& e) {
                return std::tuple(e["model_id"].get<std::string>(), e["language"].get<std::string>(),
                                  e["prompt_id"].get<std::string>(), e["kind"].get<std::string>());
            };
            CHECK(key(entries[i - 1]) < key(entries[i]));
        }
        CHECK(entries[0]["path"] == "traces/other/en/p1.generation.json");
        CHECK(entries[0]["byte_size"].get<std::size_t>() == fs::file_size(dir.path / "traces/other/en/p1.generation.json"));
        CHECK(m["languages"] == nlohmann::json::array({"en", "fr"}));
        REQUIRE(m["models"].size() == 2);
        CHECK(m["models"][1]["display_name"] == "Small random GPT-2");
        CHECK(m["models"][1]["params_hint"] == "404.3K");
        CHECK(build_manifest(dir.path) == write_manifest(dir.path));
    }
    SUBCASE("corrupted file aborts with its name") {
        write("small", "en", "p1", serialize_trace(small_generation()), "generation");
        write("small", "en", "p2", "{\"schema_version\":", "generation");
        CHECK_THROWS_WITH_AS(build_manifest(dir.path), doctest::Contains("traces/small/en/p2.generation.json"),
                             ValidationError);
    }
    SUBCASE("content must agree with its path") {
        write("small", "en", "p9", serialize_trace(small_generation()), "generation");
        CHECK_THROWS_WITH_AS(build_manifest(dir.path), doctest::Contains("prompt.id 'p1' disagrees"), LoadError);
    }
    SUBCASE("unsupported locale and stray files") {
        write("small", "de", "p1", serialize_trace(small_generation(1, CaptureLevel::simple, "p1", "de")), "generation");
        CHECK_THROWS_WITH_AS(build_manifest(dir.path), doctest::Contains("'de' is not a supported"), LoadError);
        fs::remove_all(dir.path / "traces");
        write_file_atomic(dir.path / "traces" / "small" / "notes.json", "{}");
        CHECK_THROWS_WITH_AS(build_manifest(dir.path), doctest::Contains("not in the layout"), LoadError);
    }
}
