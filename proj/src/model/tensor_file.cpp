#include "tracelm/tensor_file.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "tracelm/error.hpp"

namespace tracelm {
namespace {

std::size_t dtype_size(const std::string& dtype) {
    if (dtype == "F64" || dtype == "I64" || dtype == "U64") return 8;
    if (dtype == "F32" || dtype == "I32" || dtype == "U32") return 4;
    if (dtype == "F16" || dtype == "BF16" || dtype == "I16" || dtype == "U16") return 2;
    if (dtype == "I8" || dtype == "U8" || dtype == "BOOL" || dtype == "F8_E4M3" || dtype == "F8_E5M2") return 1;
    return 0;
}

std::uint64_t read_le64(std::string_view b) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[i]);
    return v;
}

}  // namespace

std::size_t TensorFile::Entry::element_count() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

TensorFile TensorFile::parse(std::string bytes, std::string name) {
    TensorFile f;
    f.name_ = std::move(name);
    const std::string& nm = f.name_;
    if (bytes.size() < 8) throw LoadError(nm + ": truncated container (no header length)");
    const std::uint64_t header_len = read_le64(bytes);
    if (header_len > bytes.size() - 8) throw LoadError(nm + ": header length exceeds file size");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(std::string_view(bytes).substr(8, header_len));
    } catch (const nlohmann::json::parse_error& e) {
        throw LoadError(nm + ": malformed header JSON: " + e.what());
    }
    if (!header.is_object()) throw LoadError(nm + ": header is not a JSON object");

    f.data_start_ = 8 + header_len;
    const std::size_t data_size = bytes.size() - f.data_start_;
    for (const auto& [key, value] : header.items()) {
        if (key == "__metadata__") {
            if (!value.is_object()) throw LoadError(nm + ": __metadata__ is not an object");
            for (const auto& [mk, mv] : value.items()) {
                if (!mv.is_string()) throw LoadError(nm + ": __metadata__." + mk + " is not a string");
                f.metadata_[mk] = mv.get<std::string>();
            }
            continue;
        }
        const std::string where = nm + ": tensor '" + key + "': ";
        if (!value.is_object() || !value.contains("dtype") || !value.contains("shape") ||
            !value.contains("data_offsets")) {
            throw LoadError(where + "entry needs dtype, shape and data_offsets");
        }
        Entry e;
        if (!value["dtype"].is_string()) throw LoadError(where + "dtype is not a string");
        e.dtype = value["dtype"].get<std::string>();
        if (!value["shape"].is_array()) throw LoadError(where + "shape is not an array");
        for (const auto& d : value["shape"]) {
            if (!d.is_number_unsigned()) throw LoadError(where + "shape has a non-integer dimension");
            e.shape.push_back(d.get<std::size_t>());
        }
        const auto& off = value["data_offsets"];
        if (!off.is_array() || off.size() != 2 || !off[0].is_number_unsigned() || !off[1].is_number_unsigned()) {
            throw LoadError(where + "data_offsets must be [begin, end]");
        }
        e.begin = off[0].get<std::size_t>();
        e.end = off[1].get<std::size_t>();
        if (e.begin > e.end || e.end > data_size) throw LoadError(where + "data_offsets outside the data section");
        if (const std::size_t sz = dtype_size(e.dtype); sz != 0 && e.element_count() * sz != e.end - e.begin) {
            throw LoadError(where + "byte length does not match shape and dtype");
        }
        f.entries_.emplace(key, std::move(e));
    }
    f.bytes_ = std::move(bytes);
    return f;
}

TensorFile TensorFile::read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

std::vector<float> TensorFile::to_f32(const std::string& tensor) const {
    auto it = entries_.find(tensor);
    if (it == entries_.end()) throw LoadError(name_ + ": missing tensor '" + tensor + "'");
    const Entry& e = it->second;
    const char* src = bytes_.data() + data_start_ + e.begin;
    const std::size_t n = e.element_count();
    std::vector<float> out(n);
    if (e.dtype == "F32") {
        for (std::size_t i = 0; i < n; ++i) {
            std::uint32_t bits = 0;
            for (int b = 3; b >= 0; --b) bits = (bits << 8) | static_cast<unsigned char>(src[4 * i + b]);
            out[i] = std::bit_cast<float>(bits);
        }
    } else if (e.dtype == "F16") {
        for (std::size_t i = 0; i < n; ++i) {
            const auto lo = static_cast<unsigned char>(src[2 * i]);
            const auto hi = static_cast<unsigned char>(src[2 * i + 1]);
            out[i] = half_to_float(static_cast<std::uint16_t>(lo | (hi << 8)));
        }
    } else {
        throw LoadError(name_ + ": tensor '" + tensor + "' has unsupported dtype " + e.dtype);
    }
    return out;
}

std::string write_tensor_file(const std::map<std::string, TensorData>& tensors,
                              const std::map<std::string, std::string>& metadata) {
    nlohmann::ordered_json header = nlohmann::ordered_json::object();
    if (!metadata.empty()) header["__metadata__"] = metadata;
    std::string data;
    for (const auto& [name, t] : tensors) {
        const std::size_t begin = data.size();
        for (float v : t.values) {
            if (t.dtype == "F16") {
                const std::uint16_t h = float_to_half(v);
                data += static_cast<char>(h & 0xFF);
                data += static_cast<char>(h >> 8);
            } else {
                const auto bits = std::bit_cast<std::uint32_t>(v);
                for (int b = 0; b < 4; ++b) data += static_cast<char>((bits >> (8 * b)) & 0xFF);
            }
        }
        header[name] = {{"dtype", t.dtype}, {"shape", t.shape}, {"data_offsets", {begin, data.size()}}};
    }
    std::string h = header.dump();
    while ((h.size() + 8) % 8 != 0) h += ' ';
    std::string out;
    const std::uint64_t n = h.size();
    for (int b = 0; b < 8; ++b) out += static_cast<char>((n >> (8 * b)) & 0xFF);
    return out + h + data;
}

float half_to_float(std::uint16_t h) {
    const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000) << 16;
    const std::uint32_t exp = (h >> 10) & 0x1F;
    std::uint32_t mant = h & 0x3FF;
    std::uint32_t bits;
    if (exp == 0) {
        if (mant == 0) {
            bits = sign;
        } else {
            int e = -1;
            do {
                ++e;
                mant <<= 1;
            } while ((mant & 0x400) == 0);
            bits = sign | (static_cast<std::uint32_t>(127 - 15 - e) << 23) | ((mant & 0x3FF) << 13);
        }
    } else if (exp == 0x1F) {
        bits = sign | 0x7F800000u | (mant << 13);
    } else {
        bits = sign | ((exp + 127 - 15) << 23) | (mant << 13);
    }
    return std::bit_cast<float>(bits);
}

std::uint16_t float_to_half(float f) {
    const auto bits = std::bit_cast<std::uint32_t>(f);
    const std::uint16_t sign = static_cast<std::uint16_t>((bits >> 16) & 0x8000);
    const std::uint32_t abs = bits & 0x7FFFFFFFu;
    if (abs >= 0x7F800000u) return sign | 0x7C00 | (abs > 0x7F800000u ? 0x200 : 0);
    if (abs >= 0x477FF000u) return sign | 0x7C00;  // overflow to inf
    if (abs < 0x38800000u) {
        // subnormal half (or zero): round to nearest even
        const float scaled = std::bit_cast<float>(abs) * 16777216.0f;  // 2^24
        return sign | static_cast<std::uint16_t>(std::nearbyint(scaled));
    }
    std::uint32_t v = abs - 0x38000000u;  // rebias exponent 127 -> 15
    const std::uint32_t rem = v & 0x1FFF;
    v >>= 13;
    if (rem > 0x1000 || (rem == 0x1000 && (v & 1))) ++v;
    return sign | static_cast<std::uint16_t>(v);
}

}  // namespace tracelm
