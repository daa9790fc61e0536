#include <doctest.h>
#include <httplib.h>

#include <json.hpp>

#include "support/cli_fixture.hpp"
#include "support/mutations.hpp"
#include "tracelm/catalog.hpp"
#include "tracelm/error.hpp"
#include "tracelm/schema.hpp"

using namespace tracelm;
using namespace tracelm::testing;
namespace fs = std::filesystem;

namespace {

const char* kTwoPromptCatalog = R"({
  "source": "original",
  "languages": {
    "en": [
      {"prompt_id": "greeting", "text": "Hello there, how are", "intended_views": ["generation_simple", "training_simple"]},
      {"prompt_id": "story", "text": "Once upon a time"}
    ]
  }
})";

struct Workspace {
    TempDir dir;
    fs::path model = write_byte_model(dir / "bytes-model");
    fs::path catalog = dir / "catalog.json";

    Workspace() { write_text(catalog, kTwoPromptCatalog); }

    std::vector<std::string> generate_args(const fs::path& out, const std::string& jobs = "2") const {
        return {"generate", "--model", model.string(), "--catalog", catalog.string(), "--out", out.string(),
                "--model-id", "bytes", "--tokenizer-id", "bytes", "--max-new-tokens", "6", "--candidates", "5",
                "-j", jobs};
    }
};

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_text(e.path());
    }
    return out;
}

}  // namespace

TEST_CASE("catalog parsing") {
    const auto c = PromptCatalog::parse(kTwoPromptCatalog);
    REQUIRE(c.languages.size() == 1);
    CHECK(c.prompt_count() == 2);
    CHECK(c.languages.at("en")[0].kinds() == std::vector<std::string>{"generation", "training"});
    CHECK(c.languages.at("en")[1].kinds() == std::vector<std::string>{"generation", "training"});
    const auto only_gen = PromptCatalog::parse(
        R"({"languages":{"fr":[{"prompt_id":"a","text":"x","intended_views":["generation_detailed"]}]}})");
    CHECK(only_gen.languages.at("fr")[0].kinds() == std::vector<std::string>{"generation"});

    const auto rejects = [](const std::string& text, const std::string& fragment) {
        try {
            PromptCatalog::parse(text, "cat.json");
            FAIL("accepted: " << text);
        } catch (const LoadError& e) {
            CHECK_MESSAGE(std::string(e.what()).find(fragment) != std::string::npos, e.what());
        }
    };
    rejects(R"({"languages":{"en":[{"prompt_id":"a","text":"x"},{"prompt_id":"a","text":"y"}]}})", "duplicate");
    rejects(R"({"languages":{"de":[{"prompt_id":"a","text":"x"}]}})", "unsupported language");
    rejects(R"({"languages":{"en":[]}})", "non-empty");
    rejects(R"({"languages":{}})", "no languages");
    rejects(R"({"languages":{"en":[{"prompt_id":"a/b","text":"x"}]}})", "must match");
    rejects(R"({"languages":{"en":[{"prompt_id":"a","text":"x","intended_views":["story_view"]}]}})", "unknown view");
    rejects(R"({"languages":{"en":[{"prompt_id":"a"}]}})", "languages.en[0]");
    rejects("{not json", "malformed");
}

TEST_CASE("the shipped sample catalog covers every locale with three prompts") {
    const auto c = PromptCatalog::read(source_dir() / "catalog" / "prompts.json");
    REQUIRE(c.languages.size() == kSupportedLocales.size());
    for (auto loc : kSupportedLocales) CHECK(c.languages.at(std::string(loc)).size() == 3);
}

TEST_CASE("generate writes one trace per prompt and kind") {
    Workspace ws;
    const auto out = ws.dir / "out";
    const auto r = run(ws.generate_args(out));
    INFO(r.err);
    REQUIRE(r.code == kExitOk);
    const auto files = tree_bytes(out / "traces");
    CHECK(files.size() == 4);
    for (const auto* name : {"bytes/en/greeting.generation.json", "bytes/en/greeting.training.json",
                             "bytes/en/story.generation.json", "bytes/en/story.training.json"}) {
        REQUIRE(files.count(name));
        CHECK(validate(files.at(name)).ok());
    }
    CHECK(r.out.find("total") != std::string::npos);
    const auto manifest = nlohmann::json::parse(read_text(out / "manifest.json"));
    CHECK(manifest["entries"].size() == 4);

    SUBCASE("parallelism does not change the bytes") {
        const auto serial = ws.dir / "serial";
        const auto wide = ws.dir / "wide";
        REQUIRE(run(ws.generate_args(serial, "1")).code == kExitOk);
        REQUIRE(run(ws.generate_args(wide, "8")).code == kExitOk);
        CHECK(tree_bytes(serial) == tree_bytes(wide));
        CHECK(tree_bytes(serial) == tree_bytes(out));
    }
    SUBCASE("seeded sampling repeats exactly") {
        auto args = ws.generate_args(ws.dir / "s1");
        for (const char* a : {"--strategy", "top_k", "--k", "20", "--temperature", "1.3", "--seed", "99"}) {
            args.emplace_back(a);
        }
        REQUIRE(run(args).code == kExitOk);
        args[6] = (ws.dir / "s2").string();
        REQUIRE(run(args).code == kExitOk);
        CHECK(tree_bytes(ws.dir / "s1") == tree_bytes(ws.dir / "s2"));
    }
}

TEST_CASE("generate load and partial failures") {
    Workspace ws;
    SUBCASE("missing merges file names the path") {
        const auto missing = ws.dir / "nowhere" / "merges.txt";
        auto args = ws.generate_args(ws.dir / "out");
        args.insert(args.end(), {"--vocab", (ws.model / "vocab.json").string(), "--merges", missing.string()});
        const auto r = run(args);
        CHECK(r.code == kExitUsage);
        CHECK(r.err.find(missing.string()) != std::string::npos);
        CHECK_FALSE(fs::exists(ws.dir / "out"));
    }
    SUBCASE("missing model") {
        auto args = ws.generate_args(ws.dir / "out");
        args[2] = (ws.dir / "no-model").string();
        const auto r = run(args);
        CHECK(r.code == kExitUsage);
        CHECK(r.err.find("no-model") != std::string::npos);
    }
    SUBCASE("bad decode parameters") {
        auto args = ws.generate_args(ws.dir / "out");
        args.insert(args.end(), {"--temperature", "-1"});
        CHECK(run(args).code == kExitUsage);
    }
    SUBCASE("a prompt that does not fit fails alone") {
        write_text(ws.catalog, R"({"languages":{"en":[
            {"prompt_id":"short","text":"fits fine"},
            {"prompt_id":"long","text":")" + std::string(80, 'x') + R"("}]}})");
        const auto r = run(ws.generate_args(ws.dir / "out"));
        CHECK(r.code == kExitPartial);
        CHECK(r.err.find("en/long generation") != std::string::npos);
        CHECK(r.err.find("en/long training") != std::string::npos);
        CHECK(fs::exists(ws.dir / "out/traces/bytes/en/short.generation.json"));
        CHECK(fs::exists(ws.dir / "out/traces/bytes/en/short.training.json"));
        CHECK_FALSE(fs::exists(ws.dir / "out/traces/bytes/en/long.generation.json"));
        CHECK(fs::exists(ws.dir / "out/manifest.json"));
    }
    SUBCASE("language filter must name catalog languages") {
        auto args = ws.generate_args(ws.dir / "out");
        args.insert(args.end(), {"--languages", "cs"});
        CHECK(run(args).code == kExitUsage);
    }
}

TEST_CASE("validate, inspect, diff and manifest") {
    Workspace ws;
    const auto out = ws.dir / "out";
    REQUIRE(run(ws.generate_args(out)).code == kExitOk);
    const auto gen = out / "traces/bytes/en/greeting.generation.json";
    const auto train = out / "traces/bytes/en/story.training.json";

    SUBCASE("validate") {
        auto r = run({"validate", gen.string()});
        CHECK(r.code == kExitOk);
        r = run({"validate", out.string()});
        CHECK(r.code == kExitOk);
        CHECK(r.out.find("4 file(s), 0 invalid") != std::string::npos);
        r = run({"validate", (out / "traces/*/en/*.training.json").string()});
        CHECK(r.code == kExitOk);
        CHECK(r.out.find("2 file(s)") != std::string::npos);

        auto doc = nlohmann::ordered_json::parse(read_text(gen));
        doc["steps"][1]["candidates"][2]["p"] = 1.5;
        const auto bad = ws.dir / "bad.json";
        write_text(bad, doc.dump());
        r = run({"validate", gen.string(), bad.string()});
        CHECK(r.code == kExitFindings);
        CHECK(r.out.find("steps[1].candidates[2].p") != std::string::npos);
        r = run({"validate", "--format", "json", bad.string()});
        CHECK(r.code == kExitFindings);
        const auto report = nlohmann::json::parse(r.out);
        CHECK(report["ok"] == false);
        CHECK(report["files"][0]["violations"][0]["path"].get<std::string>().starts_with("steps[1].candidates"));

        r = run({"validate", (ws.dir / "*.nothing").string()});
        CHECK(r.code == kExitUsage);
        CHECK(r.err.find("no inputs") != std::string::npos);
        CHECK(run({"validate", (ws.dir / "absent.json").string()}).code == kExitUsage);
    }
    SUBCASE("inspect") {
        auto r = run({"inspect", gen.string(), "--step", "0"});
        REQUIRE(r.code == kExitOk);
        // Five candidate rows in descending probability.
        std::istringstream lines(r.out);
        std::string line;
        std::vector<double> ps;
        bool in_candidates = false;
        while (std::getline(lines, line)) {
            if (line.starts_with("candidates")) {
                in_candidates = true;
            } else if (line.starts_with("other mass")) {
                in_candidates = false;
            } else if (in_candidates) {
                std::istringstream fields(line);
                std::string rank, bar_text;
                double p = 0;
                fields >> rank >> bar_text >> p;
                ps.push_back(p);
            }
        }
        CHECK(ps.size() == 5);
        CHECK(std::is_sorted(ps.rbegin(), ps.rend()));

        r = run({"inspect", gen.string(), "--step", "6"});
        CHECK(r.code == kExitUsage);
        CHECK(r.err.find("0..5") != std::string::npos);

        r = run({"inspect", train.string()});
        CHECK(r.code == kExitOk);
        CHECK(r.out.find("p_target") != std::string::npos);
        CHECK(r.out.find("loss") != std::string::npos);
        r = run({"inspect", train.string(), "--step", "0"});
        CHECK(r.code == kExitOk);
        CHECK(r.out.find("logit gradient") != std::string::npos);
    }
    SUBCASE("diff") {
        auto r = run({"diff", gen.string(), gen.string()});
        CHECK(r.code == kExitOk);
        CHECK(r.out.empty());
        r = run({"diff", gen.string(), train.string()});
        CHECK(r.code == kExitFindings);
        CHECK_FALSE(r.out.empty());
        const auto bad = ws.dir / "bad.json";
        write_text(bad, "{}");
        CHECK(run({"diff", gen.string(), bad.string()}).code == kExitFindings);
        CHECK(run({"diff", gen.string(), (ws.dir / "absent.json").string()}).code == kExitUsage);
    }
    SUBCASE("manifest") {
        fs::remove(out / "manifest.json");
        auto r = run({"manifest", out.string()});
        CHECK(r.code == kExitOk);
        CHECK(read_text(out / "manifest.json") == build_manifest(out));
        write_text(out / "traces/bytes/en/extra.generation.json", "{}");
        r = run({"manifest", out.string()});
        CHECK(r.code == kExitFindings);
        CHECK(r.err.find("extra.generation.json") != std::string::npos);
    }
    SUBCASE("commands do not modify their inputs") {
        const auto before = tree_bytes(out / "traces");
        run({"validate", out.string()});
        run({"inspect", gen.string(), "--step", "1"});
        run({"diff", gen.string(), train.string()});
        CHECK(tree_bytes(out / "traces") == before);
    }
}

TEST_CASE("usage errors") {
    CHECK(run({}).code == kExitUsage);
    CHECK(run({"frobnicate"}).code == kExitUsage);
    CHECK(run({"validate", "--format", "xml", "x"}).code == kExitUsage);
    const auto help = run({"--help"});
    CHECK(help.code == kExitOk);
    CHECK(help.out.find("generate") != std::string::npos);
}

TEST_CASE("static server") {
    TempDir root;
    write_text(root / "manifest.json", R"({"schema_version":"1.0"})");
    write_text(root / "traces/m/en/p.generation.json", "{}");
    TempDir viewer;
    write_text(viewer / "index.html", "<html></html>");
    write_text(viewer / "manifest.json", "shadowed");

    StaticServer server;
    server.start(root.path(), {}, "127.0.0.1", 0);
    REQUIRE(server.port() > 0);
    httplib::Client client("127.0.0.1", server.port());
    auto res = client.Get("/manifest.json");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->body == read_text(root / "manifest.json"));
    CHECK(res->get_header_value("Content-Type").starts_with("application/json"));
    res = client.Get("/traces/m/en/p.generation.json");
    REQUIRE(res);
    CHECK(res->status == 200);
    res = client.Get("/traces/m/en/missing.json");
    REQUIRE(res);
    CHECK(res->status == 404);
    res = client.Post("/manifest.json", "{}", "application/json");
    REQUIRE(res);
    CHECK(res->status != 200);

    SUBCASE("port in use") {
        StaticServer second;
        CHECK_THROWS_AS(second.start(root.path(), {}, "127.0.0.1", server.port()), LoadError);
        const auto r = run({"serve", root.path().string(), "--port", std::to_string(server.port())});
        CHECK(r.code == kExitUsage);
        CHECK(r.err.find("port") != std::string::npos);
    }
    SUBCASE("viewer bundle layered over the traces") {
        StaticServer layered;
        layered.start(root.path(), viewer.path(), "127.0.0.1", 0);
        httplib::Client c2("127.0.0.1", layered.port());
        auto index = c2.Get("/");
        REQUIRE(index);
        CHECK(index->status == 200);
        CHECK(index->body == "<html></html>");
        auto manifest = c2.Get("/manifest.json");
        REQUIRE(manifest);
        CHECK(manifest->body == read_text(root / "manifest.json"));
        auto trace = c2.Get("/traces/m/en/p.generation.json");
        REQUIRE(trace);
        CHECK(trace->status == 200);
        layered.stop();
    }
    SUBCASE("missing root") {
        StaticServer s;
        CHECK_THROWS_AS(s.start(root / "nope", {}, "127.0.0.1", 0), LoadError);
        CHECK(run({"serve", (root / "nope").string(), "--port", "0"}).code == kExitUsage);
    }
    server.stop();
}
