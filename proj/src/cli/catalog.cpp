#include "tracelm/catalog.hpp"

#include <algorithm>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tracelm/error.hpp"
#include "tracelm/schema.hpp"

namespace tracelm {

std::vector<std::string> CatalogPrompt::kinds() const {
    const auto wants = [&](std::string_view prefix) {
        return intended_views.empty() || std::any_of(intended_views.begin(), intended_views.end(),
                                                     [&](const std::string& v) { return v.starts_with(prefix); });
    };
    std::vector<std::string> out;
    if (wants("generation_")) out.emplace_back("generation");
    if (wants("training_")) out.emplace_back("training");
    return out;
}

PromptCatalog PromptCatalog::parse(std::string_view json_text, const std::string& name) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw LoadError(name + ": malformed JSON: " + e.what());
    }
    const auto fail = [&](const std::string& where, const std::string& what) -> LoadError {
        return LoadError(name + ": " + where + ": " + what);
    };
    if (!j.is_object() || !j.contains("languages") || !j["languages"].is_object()) {
        throw fail("$", "expected {\"languages\": {<tag>: [prompts]}}");
    }
    static const std::regex id_pattern("[A-Za-z0-9._-]+");
    PromptCatalog catalog;
    for (const auto& [lang, prompts] : j["languages"].items()) {
        const std::string where = "languages." + lang;
        if (std::find(kSupportedLocales.begin(), kSupportedLocales.end(), lang) == kSupportedLocales.end()) {
            throw fail(where, "unsupported language tag");
        }
        if (!prompts.is_array() || prompts.empty()) throw fail(where, "expected a non-empty list of prompts");
        std::set<std::string> ids;
        auto& out = catalog.languages[lang];
        for (std::size_t i = 0; i < prompts.size(); ++i) {
            const auto& p = prompts[i];
            const std::string at = where + "[" + std::to_string(i) + "]";
            if (!p.is_object() || !p.contains("prompt_id") || !p["prompt_id"].is_string() || !p.contains("text") ||
                !p["text"].is_string()) {
                throw fail(at, "expected {\"prompt_id\": string, \"text\": string, \"intended_views\": [...]}");
            }
            CatalogPrompt prompt;
            prompt.id = p["prompt_id"].get<std::string>();
            prompt.text = p["text"].get<std::string>();
            if (!std::regex_match(prompt.id, id_pattern) || prompt.id == "." || prompt.id == "..") {
                throw fail(at, "prompt_id '" + prompt.id + "' must match [A-Za-z0-9._-]+");
            }
            if (!ids.insert(prompt.id).second) throw fail(at, "duplicate prompt_id '" + prompt.id + "'");
            if (prompt.text.empty()) throw fail(at, "empty text");
            if (p.contains("intended_views")) {
                if (!p["intended_views"].is_array()) throw fail(at, "intended_views must be a list");
                for (const auto& v : p["intended_views"]) {
                    const std::string view = v.is_string() ? v.get<std::string>() : v.dump();
                    if (std::find(std::begin(kViewKinds), std::end(kViewKinds), view) == std::end(kViewKinds)) {
                        throw fail(at, "unknown view '" + view + "'");
                    }
                    prompt.intended_views.push_back(view);
                }
            }
            out.push_back(std::move(prompt));
        }
    }
    if (catalog.languages.empty()) throw fail("languages", "no languages");
    return catalog;
}

PromptCatalog PromptCatalog::read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open catalog " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

std::size_t PromptCatalog::prompt_count() const {
    std::size_t n = 0;
    for (const auto& [lang, prompts] : languages) n += prompts.size();
    return n;
}

}  // namespace tracelm
