#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <regex>
#include <set>

#include <json.hpp>

#include "json_path.hpp"
#include "tracelm/generation.hpp"
#include "tracelm/schema.hpp"
#include "tracelm/unicode.hpp"

namespace tracelm {
namespace {

using Json = nlohmann::json;
using detail::JsonPath;

struct KeySpec {
    const char* name;
    bool required;
};

class Checker {
public:
    explicit Checker(ValidationReport& report) : report_(report) {}

    void fail(const JsonPath& path, std::string message) { report_.violations.push_back({path.str(), std::move(message)}); }

    /// Reports missing required keys and unknown keys; true if j is an object.
    bool object(const Json& j, const JsonPath& path, std::initializer_list<KeySpec> keys) {
        if (!j.is_object()) {
            fail(path, "expected an object");
            return false;
        }
        for (const auto& k : keys) {
            if (k.required && !j.contains(k.name)) fail(path / k.name, "missing required field");
        }
        for (const auto& [name, value] : j.items()) {
            const bool known = std::any_of(keys.begin(), keys.end(), [&](const KeySpec& k) { return name == k.name; });
            if (!known) fail(path / name, "unexpected field");
        }
        return true;
    }

    const Json* field(const Json& j, const char* name) const {
        if (!j.is_object()) return nullptr;
        auto it = j.find(name);
        return it == j.end() ? nullptr : &*it;
    }

    std::optional<std::int64_t> integer(const Json& j, const char* name, const JsonPath& path, std::int64_t lo,
                                        std::int64_t hi) {
        const Json* v = field(j, name);
        if (v == nullptr) return std::nullopt;
        if (!v->is_number_integer()) {
            fail(path / name, "expected an integer");
            return std::nullopt;
        }
        const std::int64_t x = v->is_number_unsigned() && v->get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX)
                                   ? INT64_MAX
                                   : v->get<std::int64_t>();
        if (x < lo || x > hi) {
            fail(path / name, "value " + std::to_string(x) + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
            return std::nullopt;
        }
        return x;
    }

    std::optional<double> number(const Json& j, const char* name, const JsonPath& path, double lo, double hi) {
        const Json* v = field(j, name);
        if (v == nullptr) return std::nullopt;
        return number_value(*v, path / name, lo, hi);
    }

    std::optional<double> number_value(const Json& v, const JsonPath& path, double lo, double hi) {
        if (!v.is_number()) {
            fail(path, "expected a number");
            return std::nullopt;
        }
        const double x = v.get<double>();
        if (!(x >= lo && x <= hi)) {
            fail(path, "value " + Json(x).dump() + " outside [" + Json(lo).dump() + ", " + Json(hi).dump() + "]");
            return std::nullopt;
        }
        return x;
    }

    std::optional<std::string> string(const Json& j, const char* name, const JsonPath& path) {
        const Json* v = field(j, name);
        if (v == nullptr) return std::nullopt;
        if (!v->is_string()) {
            fail(path / name, "expected a string");
            return std::nullopt;
        }
        return v->get<std::string>();
    }

    std::optional<std::string> one_of(const Json& j, const char* name, const JsonPath& path,
                                      std::initializer_list<std::string_view> allowed) {
        auto s = string(j, name, path);
        if (!s) return std::nullopt;
        if (std::find(allowed.begin(), allowed.end(), *s) == allowed.end()) {
            std::string list;
            for (auto a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
            fail(path / name, "'" + *s + "' is not one of {" + list + "}");
            return std::nullopt;
        }
        return s;
    }

    std::optional<bool> boolean(const Json& j, const char* name, const JsonPath& path) {
        const Json* v = field(j, name);
        if (v == nullptr) return std::nullopt;
        if (!v->is_boolean()) {
            fail(path / name, "expected a boolean");
            return std::nullopt;
        }
        return v->get<bool>();
    }

    const Json* array(const Json& j, const char* name, const JsonPath& path) {
        const Json* v = field(j, name);
        if (v == nullptr) return nullptr;
        if (!v->is_array()) {
            fail(path / name, "expected an array");
            return nullptr;
        }
        return v;
    }

private:
    ValidationReport& report_;
};

bool close(double a, double b, double tol) { return std::abs(a - b) <= tol; }

/// Shared facts gathered from the header, used by kind-specific checks.
struct Context {
    bool header_ok = true;
    std::int64_t vocab_size = 0;
    std::int64_t n_layer = 0;
    std::int64_t n_head = 0;
    std::int64_t d_model = 0;
    std::int64_t n_ctx = 0;
    int quant_digits = kDefaultQuantDigits;
    std::string capture_level;
    std::string reduction;
    std::int64_t preview_dims = 0;
    std::int64_t candidate_count = 0;
    std::vector<Json> prompt_tokens;
    double tol = 1e-4;  // 10^(1 - quant_digits)
};

class TraceValidator {
public:
    explicit TraceValidator(ValidationReport& report) : c_(report) {}

    void run(const Json& doc) {
        const JsonPath root;
        if (!doc.is_object()) {
            c_.fail(root, "expected a JSON object");
            return;
        }
        const auto kind = c_.one_of(doc, "kind", root, {"generation", "training"});
        const Json* version = c_.field(doc, "schema_version");
        if (version == nullptr) {
            c_.fail(root / "schema_version", "missing required field");
        } else if (!version->is_string() || version->get<std::string>() != kSchemaVersion) {
            c_.fail(root / "schema_version", "unrecognized schema version " + version->dump());
            return;
        }
        if (!kind) {
            if (!doc.contains("kind")) c_.fail(root / "kind", "missing required field");
            return;
        }
        const bool generation = *kind == "generation";
        if (generation) {
            c_.object(doc, root,
                      {{"schema_version", true}, {"kind", true}, {"quant_digits", true}, {"model", true},
                       {"tokenizer", true}, {"language", true}, {"prompt", true}, {"capture_level", true},
                       {"capture", true}, {"candidate_count", true}, {"prompt_tokens", true}, {"decode", true},
                       {"steps", true}, {"stop_reason", true}});
        } else {
            c_.object(doc, root,
                      {{"schema_version", true}, {"kind", true}, {"quant_digits", true}, {"model", true},
                       {"tokenizer", true}, {"language", true}, {"prompt", true}, {"capture_level", true},
                       {"capture", true}, {"candidate_count", true}, {"prompt_tokens", true}, {"positions", true},
                       {"mean_loss", true}, {"detail", false}});
        }
        header(doc);
        if (!ctx_.header_ok) return;
        if (generation) {
            generation_body(doc);
        } else {
            training_body(doc);
        }
    }

private:
    void header(const Json& doc) {
        const JsonPath root;
        const auto q = c_.integer(doc, "quant_digits", root, 1, 17);
        if (q) {
            ctx_.quant_digits = static_cast<int>(*q);
        } else {
            ctx_.header_ok = false;
        }
        ctx_.tol = std::pow(10.0, 1 - ctx_.quant_digits);

        const JsonPath mp = root / "model";
        if (const Json* m = c_.field(doc, "model");
            m && c_.object(*m, mp, {{"id", true}, {"n_layer", true}, {"n_head", true}, {"d_model", true},
                                    {"n_ctx", true}, {"vocab_size", true}})) {
            const auto id = c_.string(*m, "id", mp);
            if (id && !valid_id(*id)) c_.fail(mp / "id", "model id must match [A-Za-z0-9._-]+");
            const auto nl = c_.integer(*m, "n_layer", mp, 1, 1 << 16);
            const auto nh = c_.integer(*m, "n_head", mp, 1, 1 << 16);
            const auto d = c_.integer(*m, "d_model", mp, 1, 1 << 24);
            const auto nc = c_.integer(*m, "n_ctx", mp, 1, 1 << 24);
            const auto v = c_.integer(*m, "vocab_size", mp, 2, 1 << 24);
            if (nl && nh && d && nc && v) {
                ctx_.n_layer = *nl;
                ctx_.n_head = *nh;
                ctx_.d_model = *d;
                ctx_.n_ctx = *nc;
                ctx_.vocab_size = *v;
                if (*d % *nh != 0) c_.fail(mp / "d_model", "not divisible by n_head");
            } else {
                ctx_.header_ok = false;
            }
        } else {
            ctx_.header_ok = false;
        }

        const JsonPath tp = root / "tokenizer";
        if (const Json* t = c_.field(doc, "tokenizer");
            t && c_.object(*t, tp, {{"family", true}, {"id", true}, {"vocab_size", true}})) {
            c_.one_of(*t, "family", tp, {"byte-bpe"});
            c_.string(*t, "id", tp);
            const auto v = c_.integer(*t, "vocab_size", tp, 1, 1 << 24);
            if (v && ctx_.vocab_size && *v != ctx_.vocab_size) c_.fail(tp / "vocab_size", "differs from model.vocab_size");
        }

        if (const auto lang = c_.string(doc, "language", root)) {
            static const std::regex bcp47("[a-z]{2,3}(-[A-Za-z0-9]{2,8})*");
            if (!std::regex_match(*lang, bcp47)) c_.fail(root / "language", "'" + *lang + "' is not a BCP-47 tag");
        }

        std::string prompt_text;
        const JsonPath pp = root / "prompt";
        if (const Json* p = c_.field(doc, "prompt"); p && c_.object(*p, pp, {{"id", true}, {"text", true}})) {
            const auto id = c_.string(*p, "id", pp);
            if (id && !valid_id(*id)) c_.fail(pp / "id", "prompt id must match [A-Za-z0-9._-]+");
            if (auto t = c_.string(*p, "text", pp)) prompt_text = *t;
        }

        if (auto level = c_.one_of(doc, "capture_level", root, {"none", "simple", "detailed"})) {
            ctx_.capture_level = *level;
        } else {
            ctx_.header_ok = false;
        }
        const JsonPath cp = root / "capture";
        if (const Json* cap = c_.field(doc, "capture");
            cap && c_.object(*cap, cp, {{"preview_dims", true}, {"attention_reduction", true}})) {
            const auto dims = c_.integer(*cap, "preview_dims", cp, 1, ctx_.d_model > 0 ? ctx_.d_model : 1 << 24);
            const auto red = c_.one_of(*cap, "attention_reduction", cp, {"head_mean", "per_head"});
            if (dims && red) {
                ctx_.preview_dims = *dims;
                ctx_.reduction = *red;
            } else {
                ctx_.header_ok = false;
            }
        } else {
            ctx_.header_ok = false;
        }

        if (auto k = c_.integer(doc, "candidate_count", root, 1, 1 << 24)) {
            ctx_.candidate_count = *k;
        } else {
            ctx_.header_ok = false;
        }

        const Json* tokens = c_.array(doc, "prompt_tokens", root);
        if (tokens == nullptr) {
            ctx_.header_ok = false;
            return;
        }
        const JsonPath tk = root / "prompt_tokens";
        if (tokens->empty()) c_.fail(tk, "no prompt tokens");
        if (ctx_.n_ctx && static_cast<std::int64_t>(tokens->size()) > ctx_.n_ctx) c_.fail(tk, "more tokens than n_ctx");
        std::int64_t expected_start = 0;
        bool spans_ok = true;
        for (std::size_t i = 0; i < tokens->size(); ++i) {
            const JsonPath ip = tk[i];
            const Json& t = (*tokens)[i];
            if (!token_record(t, ip, true)) {
                spans_ok = false;
                continue;
            }
            const auto start = t["byte_start"].get<std::int64_t>();
            const auto end = t["byte_end"].get<std::int64_t>();
            if (start != expected_start) {
                c_.fail(ip / "byte_start", "span does not continue at byte " + std::to_string(expected_start));
                spans_ok = false;
            }
            if (end <= start) {
                c_.fail(ip / "byte_end", "empty or reversed span");
                spans_ok = false;
            }
            expected_start = end;
        }
        if (spans_ok && !tokens->empty() && expected_start != static_cast<std::int64_t>(prompt_text.size())) {
            c_.fail(tk, "token spans cover " + std::to_string(expected_start) + " bytes, prompt text has " +
                            std::to_string(prompt_text.size()));
        }
        ctx_.prompt_tokens.assign(tokens->begin(), tokens->end());
    }

    static bool valid_id(const std::string& s) {
        static const std::regex id("[A-Za-z0-9._-]+");
        return std::regex_match(s, id) && s != "." && s != "..";
    }

    /// Token record with id range check; spans must be present when required.
    bool token_record(const Json& t, const JsonPath& path, bool spans_required) {
        if (!c_.object(t, path, {{"id", true}, {"text", true}, {"byte_start", true}, {"byte_end", true}})) return false;
        bool ok = token_id(t, "id", path).has_value();
        ok = c_.string(t, "text", path).has_value() && ok;
        for (const char* k : {"byte_start", "byte_end"}) {
            const Json* v = c_.field(t, k);
            if (v == nullptr) {
                ok = false;
            } else if (v->is_null()) {
                if (spans_required) {
                    c_.fail(path / k, "span required for prompt tokens");
                    ok = false;
                }
            } else if (!c_.integer(t, k, path, 0, INT64_MAX)) {
                ok = false;
            }
        }
        return ok;
    }

    std::optional<std::int64_t> token_id(const Json& j, const char* name, const JsonPath& path) {
        return c_.integer(j, name, path, 0, ctx_.vocab_size - 1);
    }

    struct CandidateFacts {
        std::vector<std::int64_t> ids;
        std::vector<double> p;
        bool ok = true;
    };

    CandidateFacts candidate_list(const Json& parent, const JsonPath& path) {
        CandidateFacts f;
        const Json* list = c_.array(parent, "candidates", path);
        if (list == nullptr) {
            f.ok = false;
            return f;
        }
        const JsonPath lp = path / "candidates";
        const std::size_t expected = ctx_.capture_level == "none"
                                         ? 0
                                         : static_cast<std::size_t>(std::min(ctx_.candidate_count, ctx_.vocab_size));
        if (list->size() != expected) {
            c_.fail(lp, "expected " + std::to_string(expected) + " candidates, found " + std::to_string(list->size()));
        }
        std::set<std::int64_t> seen;
        for (std::size_t j = 0; j < list->size(); ++j) {
            const JsonPath ep = lp[j];
            const Json& e = (*list)[j];
            if (!c_.object(e, ep, {{"id", true}, {"text", true}, {"p", true}, {"rank", true}})) {
                f.ok = false;
                continue;
            }
            const auto id = token_id(e, "id", ep);
            c_.string(e, "text", ep);
            const auto p = c_.number(e, "p", ep, 0.0, 1.0);
            if (const auto rank = c_.integer(e, "rank", ep, 0, INT64_MAX); rank && *rank != static_cast<std::int64_t>(j)) {
                c_.fail(ep / "rank", "rank " + std::to_string(*rank) + " at index " + std::to_string(j));
            }
            if (!id || !p) {
                f.ok = false;
                continue;
            }
            if (!seen.insert(*id).second) c_.fail(ep / "id", "duplicate candidate id " + std::to_string(*id));
            // Order is (p desc, id asc) before rounding; rounding may merge
            // neighbouring values, so equal stored values are accepted in any id order.
            if (!f.p.empty() && *p > f.p.back()) c_.fail(ep / "p", "candidates not sorted by descending p");
            f.ids.push_back(*id);
            f.p.push_back(*p);
        }
        return f;
    }

    void mass(const Json& parent, const JsonPath& path, const CandidateFacts& f) {
        const auto other = c_.number(parent, "other_mass", path, 0.0, 1.0);
        if (!other || !f.ok) return;
        double total = *other;
        for (double p : f.p) total += p;
        const double tol = ctx_.tol * static_cast<double>(std::max<std::int64_t>(ctx_.candidate_count, 1));
        if (!close(total, 1.0, tol)) {
            c_.fail(path / "other_mass", "candidate p + other_mass = " + Json(total).dump() + ", expected 1");
        }
    }

    /// Checks a preview matrix [rows][preview_dims].
    void preview(const Json& parent, const char* name, const JsonPath& path, std::size_t rows) {
        const Json* m = c_.array(parent, name, path);
        if (m == nullptr) return;
        const JsonPath mp = path / name;
        if (m->size() != rows) c_.fail(mp, "expected " + std::to_string(rows) + " rows, found " + std::to_string(m->size()));
        for (std::size_t i = 0; i < m->size(); ++i) {
            const Json& row = (*m)[i];
            const JsonPath rp = mp[i];
            if (!row.is_array() || row.size() != static_cast<std::size_t>(ctx_.preview_dims)) {
                c_.fail(rp, "expected " + std::to_string(ctx_.preview_dims) + " values");
                continue;
            }
            for (std::size_t k = 0; k < row.size(); ++k) c_.number_value(row[k], rp[k], -HUGE_VAL, HUGE_VAL);
        }
    }

    /// One attention row: `length` non-negative entries summing to 1.
    void attention_row(const Json& row, const JsonPath& path, std::size_t length) {
        if (!row.is_array() || row.size() != length) {
            c_.fail(path, "expected an attention row of " + std::to_string(length) + " entries");
            return;
        }
        double total = 0;
        bool ok = true;
        for (std::size_t k = 0; k < row.size(); ++k) {
            const auto v = c_.number_value(row[k], path[k], 0.0, 1.0);
            if (v) {
                total += *v;
            } else {
                ok = false;
            }
        }
        if (ok && !close(total, 1.0, ctx_.tol)) c_.fail(path, "attention row sums to " + Json(total).dump());
    }

    std::size_t stored_heads() const { return ctx_.reduction == "per_head" ? static_cast<std::size_t>(ctx_.n_head) : 1; }

    void detail(const Json& d, const JsonPath& path, std::size_t seq, bool full) {
        if (!c_.object(d, path, {{"embedding_preview", true}, {"layers", true}})) return;
        preview(d, "embedding_preview", path, seq);
        const Json* layers = c_.array(d, "layers", path);
        if (layers == nullptr) return;
        const JsonPath lp = path / "layers";
        if (layers->size() != static_cast<std::size_t>(ctx_.n_layer)) c_.fail(lp, "expected one entry per layer");
        const std::size_t heads = stored_heads();
        for (std::size_t l = 0; l < layers->size(); ++l) {
            const JsonPath p = lp[l];
            const Json& layer = (*layers)[l];
            const char* attn_key = full ? "attention" : "attention_last_query";
            if (!c_.object(layer, p, {{attn_key, true}, {"hidden_preview", true}, {"hidden_norm", true}})) continue;
            if (const Json* a = c_.array(layer, attn_key, p)) {
                const JsonPath ap = p / attn_key;
                if (a->size() != heads) c_.fail(ap, "expected " + std::to_string(heads) + " head entries");
                for (std::size_t h = 0; h < a->size(); ++h) {
                    const JsonPath hp = ap[h];
                    if (!full) {
                        attention_row((*a)[h], hp, seq);
                        continue;
                    }
                    if (!(*a)[h].is_array() || (*a)[h].size() != seq) {
                        c_.fail(hp, "expected " + std::to_string(seq) + " query rows");
                        continue;
                    }
                    for (std::size_t q = 0; q < seq; ++q) attention_row((*a)[h][q], hp[q], q + 1);
                }
            }
            preview(layer, "hidden_preview", p, seq);
            if (const Json* n = c_.array(layer, "hidden_norm", p)) {
                const JsonPath np = p / "hidden_norm";
                if (n->size() != seq) c_.fail(np, "expected " + std::to_string(seq) + " values");
                for (std::size_t i = 0; i < n->size(); ++i) c_.number_value((*n)[i], np[i], 0.0, HUGE_VAL);
            }
        }
    }

    void generation_body(const Json& doc) {
        const JsonPath root;
        const JsonPath dp = root / "decode";
        const Json* decode = c_.field(doc, "decode");
        std::string strategy;
        std::int64_t k = 0, max_new = 0;
        bool stop_at_eos = false;
        std::optional<std::int64_t> eos;
        if (decode && c_.object(*decode, dp,
                                {{"strategy", true}, {"k", true}, {"k_requested", true}, {"temperature", true},
                                 {"seed", true}, {"max_new_tokens", true}, {"stop_at_eos", true}, {"eos_id", true}})) {
            strategy = c_.one_of(*decode, "strategy", dp, {"greedy", "top_k"}).value_or("");
            const auto kv = c_.integer(*decode, "k", dp, 1, INT64_MAX);
            const auto kr = c_.integer(*decode, "k_requested", dp, 1, INT64_MAX);
            if (kv) k = *kv;
            if (strategy == "top_k" && kv && kr) {
                if (*kv != std::min(*kr, ctx_.vocab_size)) c_.fail(dp / "k", "must equal min(k_requested, vocab_size)");
            }
            c_.number(*decode, "temperature", dp, 0.0, HUGE_VAL);
            if (const auto seed = c_.string(*decode, "seed", dp)) {
                static const std::regex digits("0|[1-9][0-9]{0,19}");
                if (!std::regex_match(*seed, digits) || (seed->size() == 20 && *seed > "18446744073709551615")) {
                    c_.fail(dp / "seed", "seed must be a decimal unsigned 64-bit integer");
                }
            }
            max_new = c_.integer(*decode, "max_new_tokens", dp, 1, INT64_MAX).value_or(0);
            stop_at_eos = c_.boolean(*decode, "stop_at_eos", dp).value_or(false);
            if (const Json* e = c_.field(*decode, "eos_id"); e && !e->is_null()) eos = token_id(*decode, "eos_id", dp);
            if (stop_at_eos && !eos) c_.fail(dp / "eos_id", "stop_at_eos requires an eos id");
        }

        const Json* steps = c_.array(doc, "steps", root);
        const auto stop = c_.one_of(doc, "stop_reason", root, {"max_new_tokens", "eos", "context_limit"});
        if (steps == nullptr) return;
        const JsonPath sp = root / "steps";
        if (steps->empty()) c_.fail(sp, "no generation steps");
        if (max_new && static_cast<std::int64_t>(steps->size()) > max_new) c_.fail(sp, "more steps than max_new_tokens");

        const std::size_t prompt_len = ctx_.prompt_tokens.size();
        std::optional<std::int64_t> last_chosen;
        for (std::size_t i = 0; i < steps->size(); ++i) {
            const JsonPath p = sp[i];
            const Json& s = (*steps)[i];
            const bool detailed = ctx_.capture_level == "detailed";
            if (!c_.object(s, p,
                           {{"position", true}, {"candidates", true}, {"other_mass", true}, {"chosen", true},
                            {"detail", detailed}})) {
                continue;
            }
            if (!detailed && s.contains("detail")) c_.fail(p / "detail", "detail present below capture level detailed");
            const auto position = c_.integer(s, "position", p, 0, INT64_MAX);
            const std::size_t expected_position = prompt_len + i;
            if (position && *position != static_cast<std::int64_t>(expected_position)) {
                c_.fail(p / "position", "expected position " + std::to_string(expected_position));
            }
            if (ctx_.n_ctx && static_cast<std::int64_t>(expected_position) >= ctx_.n_ctx) {
                c_.fail(p / "position", "position beyond the context window");
            }
            const CandidateFacts f = candidate_list(s, p);
            mass(s, p, f);

            const JsonPath cp = p / "chosen";
            const Json* chosen = c_.field(s, "chosen");
            if (chosen && c_.object(*chosen, cp,
                                    {{"id", true}, {"text", true}, {"p", true}, {"rank", true}, {"in_candidates", true}})) {
                const auto id = token_id(*chosen, "id", cp);
                c_.string(*chosen, "text", cp);
                const auto cp_p = c_.number(*chosen, "p", cp, 0.0, 1.0);
                const auto rank = c_.integer(*chosen, "rank", cp, 0, ctx_.vocab_size - 1);
                const auto inside = c_.boolean(*chosen, "in_candidates", cp);
                if (id) last_chosen = *id;
                if (rank && strategy == "greedy" && *rank != 0) c_.fail(cp / "rank", "greedy choice must have rank 0");
                if (rank && strategy == "top_k" && k && *rank >= k) c_.fail(cp / "rank", "rank outside the sampling pool");
                if (rank && inside && f.ok) {
                    const bool expect_inside = *rank < static_cast<std::int64_t>(f.ids.size());
                    if (*inside != expect_inside) {
                        c_.fail(cp / "in_candidates", "inconsistent with rank and stored candidates");
                    } else if (expect_inside && id && cp_p) {
                        const auto r = static_cast<std::size_t>(*rank);
                        if (f.ids[r] != *id) c_.fail(cp / "id", "differs from candidates[" + std::to_string(r) + "].id");
                        if (!close(f.p[r], *cp_p, ctx_.tol * *cp_p)) c_.fail(cp / "p", "differs from the candidate entry");
                    } else if (!expect_inside && cp_p && !f.p.empty() && *cp_p > f.p.back() * (1 + ctx_.tol)) {
                        c_.fail(cp / "p", "exceeds every stored candidate yet is ranked below them");
                    }
                }
                if (id && stop_at_eos && eos && *id == *eos && i + 1 != steps->size()) {
                    c_.fail(cp / "id", "end-of-text chosen before the last step");
                }
            }
            if (detailed && s.contains("detail")) detail(s["detail"], p / "detail", expected_position, false);
        }

        if (!stop) return;
        const JsonPath rp = root / "stop_reason";
        if (*stop == "max_new_tokens" && max_new && static_cast<std::int64_t>(steps->size()) != max_new) {
            c_.fail(rp, "max_new_tokens reached after " + std::to_string(steps->size()) + " steps");
        } else if (*stop == "eos" && (!stop_at_eos || !eos || last_chosen != eos)) {
            c_.fail(rp, "eos without a final end-of-text token");
        } else if (*stop == "context_limit" && static_cast<std::int64_t>(prompt_len + steps->size()) != ctx_.n_ctx) {
            c_.fail(rp, "context_limit before the context is full");
        }
    }

    void training_body(const Json& doc) {
        const JsonPath root;
        const Json* positions = c_.array(doc, "positions", root);
        const auto mean = c_.number(doc, "mean_loss", root, 0.0, HUGE_VAL);
        const bool detailed = ctx_.capture_level == "detailed";
        if (detailed && !doc.contains("detail")) c_.fail(root / "detail", "missing required field");
        if (!detailed && doc.contains("detail")) c_.fail(root / "detail", "detail present below capture level detailed");
        if (detailed && doc.contains("detail")) detail(doc["detail"], root / "detail", ctx_.prompt_tokens.size(), true);
        if (positions == nullptr) return;

        const JsonPath pp = root / "positions";
        const std::size_t expected = ctx_.prompt_tokens.empty() ? 0 : ctx_.prompt_tokens.size() - 1;
        if (positions->size() != expected) {
            c_.fail(pp, "expected " + std::to_string(expected) + " positions, found " + std::to_string(positions->size()));
        }
        if (positions->empty()) c_.fail(pp, "no training positions");
        double loss_total = 0;
        bool losses_ok = true;
        for (std::size_t i = 0; i < positions->size(); ++i) {
            const JsonPath p = pp[i];
            const Json& e = (*positions)[i];
            if (!c_.object(e, p,
                           {{"position", true}, {"target", true}, {"candidates", true}, {"other_mass", true},
                            {"p_target", true}, {"loss", true}, {"loss_floored", true}, {"grad_top", true}})) {
                losses_ok = false;
                continue;
            }
            if (const auto pos = c_.integer(e, "position", p, 0, INT64_MAX); pos && *pos != static_cast<std::int64_t>(i)) {
                c_.fail(p / "position", "expected position " + std::to_string(i));
            }
            std::optional<std::int64_t> target;
            if (const Json* t = c_.field(e, "target"); t && token_record(*t, p / "target", true)) {
                target = (*t)["id"].get<std::int64_t>();
                if (i + 1 < ctx_.prompt_tokens.size() && *t != ctx_.prompt_tokens[i + 1]) {
                    c_.fail(p / "target", "differs from prompt_tokens[" + std::to_string(i + 1) + "]");
                }
            }
            const CandidateFacts f = candidate_list(e, p);
            mass(e, p, f);
            const auto pt = c_.number(e, "p_target", p, 0.0, 1.0);
            const auto loss = c_.number(e, "loss", p, 0.0, HUGE_VAL);
            const auto floored = c_.boolean(e, "loss_floored", p);
            if (loss) {
                loss_total += *loss;
            } else {
                losses_ok = false;
            }
            if (pt && loss) {
                const double expect = -std::log(std::max(*pt, kProbabilityFloor));
                if (!close(*loss, expect, ctx_.tol * (1.0 + expect))) {
                    c_.fail(p / "loss", "loss " + Json(*loss).dump() + " but -ln(p_target) = " + Json(expect).dump());
                }
                const bool below = *pt < kProbabilityFloor * (1 - ctx_.tol);
                const bool above = *pt > kProbabilityFloor * (1 + ctx_.tol);
                if (floored && ((*floored && above) || (!*floored && below))) {
                    c_.fail(p / "loss_floored", "inconsistent with p_target against the 1e-12 floor");
                }
            }
            if (target && pt && f.ok) {
                for (std::size_t j = 0; j < f.ids.size(); ++j) {
                    if (f.ids[j] == *target && !close(f.p[j], *pt, ctx_.tol * *pt)) {
                        c_.fail(p / "p_target", "differs from the candidate entry for the target");
                    }
                }
            }
            grad(e, p, f, target, pt);
        }
        if (mean && losses_ok && !positions->empty()) {
            const double expect = loss_total / static_cast<double>(positions->size());
            if (!close(*mean, expect, ctx_.tol * (1.0 + expect))) {
                c_.fail(root / "mean_loss", "differs from the mean of the position losses " + Json(expect).dump());
            }
        }
    }

    void grad(const Json& e, const JsonPath& p, const CandidateFacts& f, std::optional<std::int64_t> target,
              std::optional<double> p_target) {
        const Json* g = c_.array(e, "grad_top", p);
        if (g == nullptr) return;
        const JsonPath gp = p / "grad_top";
        std::vector<std::int64_t> ids;
        std::vector<double> values;
        for (std::size_t j = 0; j < g->size(); ++j) {
            const JsonPath ep = gp[j];
            if (!c_.object((*g)[j], ep, {{"id", true}, {"g", true}})) return;
            const auto id = token_id((*g)[j], "id", ep);
            const auto v = c_.number((*g)[j], "g", ep, -1.0, 1.0);
            if (!id || !v) return;
            ids.push_back(*id);
            values.push_back(*v);
        }
        if (!f.ok || !target) return;
        std::vector<std::int64_t> expected = f.ids;
        if (std::find(expected.begin(), expected.end(), *target) == expected.end()) expected.push_back(*target);
        if (ids != expected) {
            c_.fail(gp, "entries must cover the stored candidates, then the target");
            return;
        }
        for (std::size_t j = 0; j < ids.size(); ++j) {
            const bool is_target = ids[j] == *target;
            double p = j < f.p.size() ? f.p[j] : p_target.value_or(values[j] + 1.0);
            const double expect = p - (is_target ? 1.0 : 0.0);
            if (!close(values[j], expect, ctx_.tol)) {
                c_.fail(gp[j] / "g", "g = " + Json(values[j]).dump() + ", expected p - onehot = " + Json(expect).dump());
            }
        }
        if (static_cast<std::int64_t>(f.ids.size()) == ctx_.vocab_size) {
            double total = 0;
            for (double v : values) total += v;
            if (!close(total, 0.0, ctx_.tol * static_cast<double>(std::max<std::int64_t>(ctx_.candidate_count, 1)))) {
                c_.fail(gp, "full gradient sums to " + Json(total).dump() + ", expected 0");
            }
        }
    }

    Checker c_;
    Context ctx_;
};

}  // namespace

std::string ValidationReport::to_text() const {
    std::string out;
    for (const auto& v : violations) out += v.path + ": " + v.message + "\n";
    return out;
}

std::string ValidationReport::to_json() const {
    nlohmann::ordered_json j;
    j["ok"] = ok();
    j["violations"] = nlohmann::ordered_json::array();
    for (const auto& v : violations) j["violations"].push_back({{"path", v.path}, {"message", v.message}});
    return j.dump();
}

ValidationReport validate(std::string_view bytes) {
    ValidationReport report;
    if (!unicode::is_valid_utf8(bytes)) {
        report.violations.push_back({"$", "malformed JSON: input is not valid UTF-8"});
        return report;
    }
    Json doc;
    try {
        doc = Json::parse(bytes);
    } catch (const Json::parse_error& e) {
        report.violations.push_back({"$", std::string("malformed JSON: ") + e.what()});
        return report;
    }
    TraceValidator(report).run(doc);
    return report;
}

}  // namespace tracelm
