#include <algorithm>
#include <cmath>
#include <numeric>

#include "tracelm/error.hpp"
#include "tracelm/generation.hpp"

namespace tracelm {
namespace {

void check_target(std::span<const double> dist, TokenId target) {
    if (target < 0 || static_cast<std::size_t>(target) >= dist.size()) {
        throw ParameterError("target id " + std::to_string(target) + " out of range [0, " +
                             std::to_string(dist.size()) + ")");
    }
}

void check_normalized(std::span<const double> dist) {
    if (dist.empty()) throw ParameterError("empty distribution");
    const double total = std::accumulate(dist.begin(), dist.end(), 0.0);
    if (!(std::abs(total - 1.0) <= 1e-6)) {
        throw ParameterError("distribution sums to " + std::to_string(total) + ", expected 1 within 1e-6");
    }
}

}  // namespace

void DecodeParams::validate() const {
    if (strategy == DecodeStrategy::top_k && k == 0) throw ParameterError("top_k sampling needs k >= 1");
    if (max_new_tokens == 0) throw ParameterError("max_new_tokens must be >= 1");
    if (!(temperature >= 0.0) || !std::isfinite(temperature)) throw ParameterError("temperature must be finite and >= 0");
    if (stop_at_eos && !eos_id) throw ParameterError("stop_at_eos set without an eos id");
}

std::string_view to_string(DecodeStrategy s) { return s == DecodeStrategy::greedy ? "greedy" : "top_k"; }

DecodeStrategy parse_decode_strategy(std::string_view s) {
    if (s == "greedy") return DecodeStrategy::greedy;
    if (s == "top_k") return DecodeStrategy::top_k;
    throw ParameterError("unknown decode strategy '" + std::string(s) + "'");
}

std::string_view to_string(StopReason r) {
    switch (r) {
        case StopReason::max_new_tokens: return "max_new_tokens";
        case StopReason::eos: return "eos";
        case StopReason::context_limit: return "context_limit";
    }
    return "max_new_tokens";
}

StopReason parse_stop_reason(std::string_view s) {
    if (s == "max_new_tokens") return StopReason::max_new_tokens;
    if (s == "eos") return StopReason::eos;
    if (s == "context_limit") return StopReason::context_limit;
    throw ParameterError("unknown stop reason '" + std::string(s) + "'");
}

std::vector<TokenId> top_indices(std::span<const double> dist, std::size_t count) {
    std::vector<TokenId> idx(dist.size());
    std::iota(idx.begin(), idx.end(), 0);
    count = std::min(count, idx.size());
    const auto before = [&](TokenId a, TokenId b) { return dist[a] > dist[b] || (dist[a] == dist[b] && a < b); };
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count), idx.end(), before);
    idx.resize(count);
    return idx;
}

std::size_t rank_of(std::span<const double> dist, TokenId id) {
    const double p = dist[static_cast<std::size_t>(id)];
    std::size_t rank = 0;
    for (std::size_t i = 0; i < dist.size(); ++i) {
        if (dist[i] > p || (dist[i] == p && static_cast<TokenId>(i) < id)) ++rank;
    }
    return rank;
}

TokenId next_token(std::span<const double> dist, const DecodeParams& params, Rng& rng) {
    check_normalized(dist);
    if (params.strategy == DecodeStrategy::greedy) {
        return static_cast<TokenId>(std::max_element(dist.begin(), dist.end()) - dist.begin());
    }
    if (params.k == 0) throw ParameterError("top_k sampling needs k >= 1");
    const auto pool = top_indices(dist, params.k);
    double total = 0;
    for (TokenId id : pool) total += dist[id];
    const double u = rng.uniform() * total;
    double cumulative = 0;
    for (TokenId id : pool) {
        cumulative += dist[id];
        if (u < cumulative) return id;
    }
    return pool.back();
}

CrossEntropy cross_entropy(std::span<const double> dist, TokenId target) {
    check_target(dist, target);
    const double p = dist[static_cast<std::size_t>(target)];
    if (!(p >= 0.0)) throw ParameterError("negative probability for target " + std::to_string(target));
    if (p < kProbabilityFloor) return {-std::log(kProbabilityFloor), true};
    // -log(1) is -0.0; report a plain zero.
    return {p >= 1.0 ? 0.0 : -std::log(p), false};
}

std::vector<double> logit_gradient(std::span<const double> dist, TokenId target) {
    check_target(dist, target);
    check_normalized(dist);
    std::vector<double> g(dist.begin(), dist.end());
    g[static_cast<std::size_t>(target)] -= 1.0;
    return g;
}

}  // namespace tracelm
