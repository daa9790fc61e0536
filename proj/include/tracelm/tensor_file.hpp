#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tracelm {

/// Tensor container: 8-byte little-endian header length N, N bytes of JSON
/// header (name -> {dtype, shape, data_offsets}), then raw little-endian
/// data with offsets relative to the end of the header. This is the
/// safetensors layout.
class TensorFile {
public:
    struct Entry {
        std::string dtype;
        std::vector<std::size_t> shape;
        std::size_t begin = 0;
        std::size_t end = 0;

        std::size_t element_count() const;
    };

    /// Validates the header and offsets. `name` is used in error messages.
    static TensorFile parse(std::string bytes, std::string name = "<memory>");
    static TensorFile read(const std::filesystem::path& path);

    const std::string& name() const noexcept { return name_; }
    const std::map<std::string, Entry>& entries() const noexcept { return entries_; }
    const std::map<std::string, std::string>& metadata() const noexcept { return metadata_; }
    bool contains(const std::string& tensor) const { return entries_.count(tensor) != 0; }

    /// Tensor data widened to 32-bit floats. Supports F32 and F16; any other
    /// dtype raises LoadError naming the tensor.
    std::vector<float> to_f32(const std::string& tensor) const;

private:
    std::string name_;
    std::string bytes_;
    std::size_t data_start_ = 0;
    std::map<std::string, Entry> entries_;
    std::map<std::string, std::string> metadata_;
};

struct TensorData {
    std::vector<std::size_t> shape;
    std::vector<float> values;
    std::string dtype = "F32";  // "F32" or "F16"
};

/// Serializes tensors (sorted by name, contiguous, in that order) into the container format.
std::string write_tensor_file(const std::map<std::string, TensorData>& tensors,
                              const std::map<std::string, std::string>& metadata = {});

float half_to_float(std::uint16_t h);
std::uint16_t float_to_half(float f);

}  // namespace tracelm
