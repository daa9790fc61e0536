#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "tracelm/error.hpp"
#include "tracelm/trace.hpp"

namespace tracelm {

inline constexpr std::string_view kSchemaVersion = "1.0";
inline constexpr int kDefaultQuantDigits = 5;

/// Interface locales a trace may be filed under.
inline constexpr std::array<std::string_view, 5> kSupportedLocales = {"en", "cs", "fr", "uk", "zh"};

/// Rounds to `digits` significant decimal digits (printf %.*g, read back).
double quantize(double value, int digits);

/// Canonical JSON: fixed key order, no whitespace, floats quantized.
/// Throws SerializationError naming the field path of a non-finite value
/// or of text that is not valid UTF-8.
std::string serialize_trace(const GenerationTrace& trace, int quant_digits = kDefaultQuantDigits);
std::string serialize_trace(const TrainingTrace& trace, int quant_digits = kDefaultQuantDigits);

struct Violation {
    std::string path;  // e.g. steps[2].candidates[0].p, "$" for the document
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;

    bool ok() const noexcept { return violations.empty(); }
    std::string to_text() const;
    std::string to_json() const;
};

/// Total over byte strings: every problem is reported, nothing is thrown.
ValidationReport validate(std::string_view bytes);

class ValidationError : public Error {
public:
    ValidationError(const std::string& source, ValidationReport report)
        : Error(source + ": invalid trace (" + std::to_string(report.violations.size()) + " violation(s))\n" +
                report.to_text()),
          report_(std::move(report)) {}

    const ValidationReport& report() const noexcept { return report_; }

private:
    ValidationReport report_;
};

struct ParsedTrace {
    std::variant<GenerationTrace, TrainingTrace> trace;
    int quant_digits = kDefaultQuantDigits;

    bool is_generation() const { return std::holds_alternative<GenerationTrace>(trace); }
    const TraceHeader& header() const;
    std::string serialize() const;
};

/// Validates, then rebuilds the in-memory trace. Throws ValidationError.
ParsedTrace parse_trace(std::string_view bytes, const std::string& source = "trace");

struct Difference {
    std::string path;
    std::string message;
};

struct DiffReport {
    std::vector<Difference> differences;  // capped at kMaxDifferences
    std::size_t total = 0;
    std::optional<std::size_t> first_divergent_step;  // generation: first step whose chosen id differs

    static constexpr std::size_t kMaxDifferences = 200;
    bool empty() const noexcept { return total == 0; }
    std::string to_text() const;
};

/// Structural comparison; numbers are equal when |a - b| <= tolerance,
/// integers must match exactly. Throws ValidationError for an invalid input.
DiffReport diff_traces(std::string_view a, std::string_view b, double tolerance);

/// Scans root/traces/<model>/<lang>/<prompt_id>.<kind>.json, validates
/// every file and returns the manifest bytes. Throws ValidationError for an
/// invalid trace (the message names the file) and LoadError for layout
/// problems such as duplicates or content that disagrees with its path.
std::string build_manifest(const std::filesystem::path& root);

/// build_manifest plus an atomic write of root/manifest.json.
std::string write_manifest(const std::filesystem::path& root);

/// Writes through a temporary file in the same directory and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

/// Trace path relative to the output root.
std::filesystem::path trace_relative_path(const std::string& model_id, const std::string& language,
                                          const std::string& prompt_id, std::string_view kind);

}  // namespace tracelm
