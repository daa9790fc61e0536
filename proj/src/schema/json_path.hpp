#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace tracelm::detail {

/// Lazily rendered JSON path (steps[3].candidates[0].p). Nodes live on the
/// stack of the caller; the string is only built when a problem is reported.
class JsonPath {
public:
    JsonPath() = default;

    JsonPath operator/(std::string_view key) const { return JsonPath(this, key, 0, false); }
    JsonPath operator[](std::size_t index) const { return JsonPath(this, {}, index, true); }

    std::string str() const {
        if (parent_ == nullptr) return "$";
        std::string out = parent_->parent_ == nullptr ? "" : parent_->str();
        if (is_index_) return out + "[" + std::to_string(index_) + "]";
        return out.empty() ? std::string(key_) : out + "." + std::string(key_);
    }

private:
    JsonPath(const JsonPath* parent, std::string_view key, std::size_t index, bool is_index)
        : parent_(parent), key_(key), index_(index), is_index_(is_index) {}

    const JsonPath* parent_ = nullptr;
    std::string_view key_;
    std::size_t index_ = 0;
    bool is_index_ = false;
};

}  // namespace tracelm::detail
