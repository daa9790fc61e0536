#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace tracelm {

inline constexpr std::string_view kViewKinds[] = {"generation_simple", "generation_detailed", "training_simple",
                                                  "training_detailed"};

struct CatalogPrompt {
    std::string id;
    std::string text;
    std::vector<std::string> intended_views;

    /// Trace kinds ("generation", "training") the intended views need, in that order.
    std::vector<std::string> kinds() const;
};

/// Curated prompts keyed by language tag.
struct PromptCatalog {
    std::map<std::string, std::vector<CatalogPrompt>> languages;

    /// Throws LoadError naming the catalog and the offending entry.
    static PromptCatalog parse(std::string_view json_text, const std::string& name = "catalog");
    static PromptCatalog read(const std::filesystem::path& path);

    std::size_t prompt_count() const;
};

}  // namespace tracelm
