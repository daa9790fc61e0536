#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include <unistd.h>

#include <json.hpp>

#include "tracelm/schema.hpp"
#include "tracelm/unicode.hpp"

namespace fs = std::filesystem;

namespace tracelm {
namespace {

using Json = nlohmann::ordered_json;

constexpr std::size_t kPreviewCodePoints = 60;

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw LoadError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string preview(const std::string& text) {
    std::size_t offset = 0, count = 0;
    while (offset < text.size() && count < kPreviewCodePoints) {
        offset += unicode::decode_utf8(text, offset).length;
        ++count;
    }
    return offset < text.size() ? text.substr(0, offset) + "…" : text;
}

std::string params_hint(const nlohmann::json& m) {
    const double d = m.at("d_model").get<double>();
    const double count = m.at("vocab_size").get<double>() * d + m.at("n_ctx").get<double>() * d +
                         m.at("n_layer").get<double>() * (12 * d * d + 13 * d) + 2 * d;
    char buf[32];
    if (count >= 1e9) {
        std::snprintf(buf, sizeof buf, "%.1fB", count / 1e9);
    } else if (count >= 1e6) {
        std::snprintf(buf, sizeof buf, "%.0fM", count / 1e6);
    } else if (count >= 1e3) {
        std::snprintf(buf, sizeof buf, "%.1fK", count / 1e3);
    } else {
        std::snprintf(buf, sizeof buf, "%.0f", count);
    }
    return buf;
}

struct Entry {
    std::string model, language, prompt_id, kind;
    Json json;
};

}  // namespace

fs::path trace_relative_path(const std::string& model_id, const std::string& language, const std::string& prompt_id,
                             std::string_view kind) {
    return fs::path("traces") / model_id / language / (prompt_id + "." + std::string(kind) + ".json");
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
    static std::atomic<unsigned> counter{0};
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp-" + std::to_string(::getpid()) + "-" + std::to_string(counter++);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw Error("cannot write " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw Error("cannot rename into " + path.string() + ": " + ec.message());
    }
}

std::string build_manifest(const fs::path& root) {
    if (!fs::is_directory(root)) throw LoadError("manifest root " + root.string() + " is not a directory");
    const fs::path traces = root / "traces";
    std::vector<Entry> entries;
    std::map<std::string, Json> models;
    std::map<std::string, std::string> display_names;
    std::set<std::tuple<std::string, std::string, std::string, std::string>> seen;

    if (fs::exists(traces)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::recursive_directory_iterator(traces)) {
            if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (const fs::path& file : files) {
            const fs::path rel = fs::relative(file, root);
            std::vector<std::string> parts;
            for (const auto& p : rel) parts.push_back(p.string());
            if (parts.size() == 3 && parts[2] == "model.json") {
                const auto j = nlohmann::json::parse(read_file(file), nullptr, false);
                if (j.is_discarded() || !j.contains("display_name") || !j["display_name"].is_string()) {
                    throw LoadError(rel.string() + ": expected {\"display_name\": string}");
                }
                display_names[parts[1]] = j["display_name"].get<std::string>();
                continue;
            }
            const std::string name = parts.back();
            std::string kind;
            for (std::string_view k : {".generation.json", ".training.json"}) {
                if (name.size() > k.size() && name.ends_with(k)) kind = std::string(k.substr(1, k.size() - 6));
            }
            if (parts.size() != 4 || kind.empty()) {
                throw LoadError(rel.string() + ": not in the layout traces/<model>/<lang>/<prompt_id>.<kind>.json");
            }
            const std::string prompt_id = name.substr(0, name.size() - kind.size() - 6);
            const std::string& model = parts[1];
            const std::string& lang = parts[2];
            if (std::find(kSupportedLocales.begin(), kSupportedLocales.end(), lang) == kSupportedLocales.end()) {
                throw LoadError(rel.string() + ": language '" + lang + "' is not a supported interface locale");
            }

            const std::string bytes = read_file(file);
            ValidationReport report = validate(bytes);
            if (!report.ok()) throw ValidationError(rel.string(), std::move(report));
            const auto j = nlohmann::json::parse(bytes);
            const auto mismatch = [&](const std::string& field, const std::string& value, const std::string& expected) {
                if (value != expected) {
                    throw LoadError(rel.string() + ": " + field + " '" + value + "' disagrees with the path ('" + expected + "')");
                }
            };
            mismatch("model.id", j["model"]["id"].get<std::string>(), model);
            mismatch("language", j["language"].get<std::string>(), lang);
            mismatch("prompt.id", j["prompt"]["id"].get<std::string>(), prompt_id);
            mismatch("kind", j["kind"].get<std::string>(), kind);
            if (!seen.emplace(model, lang, prompt_id, kind).second) {
                throw LoadError(rel.string() + ": duplicate trace for (" + model + ", " + lang + ", " + prompt_id + ", " + kind + ")");
            }

            Json m;
            m["id"] = model;
            m["display_name"] = model;
            m["params_hint"] = params_hint(j["model"]);
            if (auto it = models.find(model); it != models.end() && it->second["params_hint"] != m["params_hint"]) {
                throw LoadError(rel.string() + ": model '" + model + "' has a different shape than its other traces");
            }
            models[model] = m;

            Json e;
            e["model_id"] = model;
            e["language"] = lang;
            e["prompt_id"] = prompt_id;
            e["prompt_preview"] = preview(j["prompt"]["text"].get<std::string>());
            e["kind"] = kind;
            e["capture_level"] = j["capture_level"];
            e["path"] = rel.generic_string();
            e["byte_size"] = bytes.size();
            entries.push_back({model, lang, prompt_id, kind, std::move(e)});
        }
    }

    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        return std::tie(a.model, a.language, a.prompt_id, a.kind) < std::tie(b.model, b.language, b.prompt_id, b.kind);
    });
    std::set<std::string> languages;
    for (const auto& e : entries) languages.insert(e.language);

    Json out;
    out["schema_version"] = kSchemaVersion;
    out["models"] = Json::array();
    for (auto& [id, m] : models) {
        if (auto it = display_names.find(id); it != display_names.end()) m["display_name"] = it->second;
        out["models"].push_back(m);
    }
    out["languages"] = Json::array();
    for (std::string_view tag : kSupportedLocales) {
        if (languages.contains(std::string(tag))) out["languages"].push_back(tag);
    }
    out["entries"] = Json::array();
    for (auto& e : entries) out["entries"].push_back(std::move(e.json));
    return out.dump(1) + "\n";
}

std::string write_manifest(const fs::path& root) {
    std::string bytes = build_manifest(root);
    write_file_atomic(root / "manifest.json", bytes);
    return bytes;
}

}  // namespace tracelm
