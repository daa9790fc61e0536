#pragma once

#include <filesystem>

namespace tracelm::testing {

inline std::filesystem::path source_dir() { return TRACELM_SOURCE_DIR; }
inline std::filesystem::path data_dir() { return source_dir() / "tests" / "data"; }
inline std::filesystem::path gpt2_tokenizer_dir() { return source_dir() / "assets" / "gpt2"; }

}  // namespace tracelm::testing
