#include <cmath>
#include <set>

#include <json.hpp>

#include "json_path.hpp"
#include "tracelm/schema.hpp"

namespace tracelm {
namespace {

using Json = nlohmann::json;
using detail::JsonPath;

std::string brief(const Json& j) {
    std::string s = j.dump();
    return s.size() > 60 ? s.substr(0, 57) + "..." : s;
}

class Differ {
public:
    Differ(DiffReport& report, double tolerance) : report_(report), tolerance_(tolerance) {}

    void compare(const Json& a, const Json& b, const JsonPath& path) {
        if (a.is_number() && b.is_number()) {
            if (a.is_number_integer() && b.is_number_integer()) {
                if (a != b) add(path, brief(a) + " != " + brief(b));
            } else if (!(std::abs(a.get<double>() - b.get<double>()) <= tolerance_)) {
                add(path, brief(a) + " vs " + brief(b) + " (|diff| = " + Json(std::abs(a.get<double>() - b.get<double>())).dump() +
                              ")");
            }
            return;
        }
        if (a.type() != b.type()) {
            add(path, "type differs: " + brief(a) + " vs " + brief(b));
            return;
        }
        if (a.is_object()) {
            std::set<std::string> keys;
            for (const auto& [k, v] : a.items()) keys.insert(k);
            for (const auto& [k, v] : b.items()) keys.insert(k);
            for (const auto& k : keys) {
                const JsonPath child = path / k;
                if (!a.contains(k)) {
                    add(child, "only in second trace");
                } else if (!b.contains(k)) {
                    add(child, "only in first trace");
                } else {
                    compare(a[k], b[k], child);
                }
            }
        } else if (a.is_array()) {
            if (a.size() != b.size()) add(path, "length " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
            for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) compare(a[i], b[i], path[i]);
        } else if (a != b) {
            add(path, brief(a) + " != " + brief(b));
        }
    }

private:
    void add(const JsonPath& path, std::string message) {
        ++report_.total;
        if (report_.differences.size() < DiffReport::kMaxDifferences) report_.differences.push_back({path.str(), std::move(message)});
    }

    DiffReport& report_;
    double tolerance_;
};

}  // namespace

std::string DiffReport::to_text() const {
    std::string out;
    if (first_divergent_step) out += "first divergent chosen token at step " + std::to_string(*first_divergent_step) + "\n";
    for (const auto& d : differences) out += d.path + ": " + d.message + "\n";
    if (total > differences.size()) out += "... " + std::to_string(total - differences.size()) + " more difference(s)\n";
    return out;
}

DiffReport diff_traces(std::string_view a, std::string_view b, double tolerance) {
    if (!(tolerance >= 0.0)) throw ParameterError("tolerance must be >= 0");
    if (auto r = validate(a); !r.ok()) throw ValidationError("first trace", std::move(r));
    if (auto r = validate(b); !r.ok()) throw ValidationError("second trace", std::move(r));
    Json ja = Json::parse(a);
    Json jb = Json::parse(b);
    // Encoding precision is not content; values are compared under the tolerance.
    ja.erase("quant_digits");
    jb.erase("quant_digits");

    DiffReport report;
    Differ(report, tolerance).compare(ja, jb, JsonPath());
    if (ja.contains("steps") && jb.contains("steps")) {
        const auto& sa = ja["steps"];
        const auto& sb = jb["steps"];
        for (std::size_t i = 0; i < std::min(sa.size(), sb.size()); ++i) {
            if (sa[i]["chosen"]["id"] != sb[i]["chosen"]["id"]) {
                report.first_divergent_step = i;
                break;
            }
        }
    }
    return report;
}

}  // namespace tracelm
