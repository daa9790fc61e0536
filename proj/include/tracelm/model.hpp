#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tracelm/tensor_file.hpp"
#include "tracelm/tokenizer.hpp"

namespace tracelm {

struct ModelConfig {
    std::size_t n_layer = 12;
    std::size_t n_head = 12;
    std::size_t d_model = 768;
    std::size_t n_ctx = 1024;
    std::size_t vocab_size = 50257;
    float layer_norm_eps = 1e-5f;

    std::size_t head_dim() const { return d_model / n_head; }

    /// Throws ParameterError when an invariant does not hold.
    void validate() const;

    /// Reads a Hugging Face style GPT-2 config.json (n_layer, n_head, n_embd,
    /// n_positions or n_ctx, vocab_size, layer_norm_epsilon).
    static ModelConfig from_json(std::string_view json_text);
    static ModelConfig read(const std::filesystem::path& path);
    std::string to_json() const;

    bool operator==(const ModelConfig&) const = default;
};

/// Dense row-major matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

    std::span<float> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const float> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
    float& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    float operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

/// Projection matrices are stored [in x out] so that y = x * W + b.
struct LayerWeights {
    std::vector<float> ln1_gain, ln1_bias;
    Matrix qkv_weight;  // [d, 3d], columns ordered q | k | v, heads contiguous
    std::vector<float> qkv_bias;
    Matrix attn_out_weight;  // [d, d]
    std::vector<float> attn_out_bias;
    std::vector<float> ln2_gain, ln2_bias;
    Matrix fc_weight;  // [d, 4d]
    std::vector<float> fc_bias;
    Matrix fc_out_weight;  // [4d, d]
    std::vector<float> fc_out_bias;
};

/// Immutable GPT-2 parameter set. The output head is tied to token_embedding.
struct ModelWeights {
    ModelConfig config;
    Matrix token_embedding;     // [vocab, d]
    Matrix position_embedding;  // [n_ctx, d]
    std::vector<LayerWeights> layers;
    std::vector<float> final_ln_gain, final_ln_bias;
};

/// Orientation of the projection matrices inside a container. GPT-2
/// checkpoints use Conv1D modules, which already store [in, out]; containers
/// exported from nn.Linear modules store [out, in] and are transposed on load.
/// Selected by the `weight_layout` metadata key ("conv1d" when absent).
enum class WeightLayout { conv1d, linear };

/// Builds ModelWeights from a container using GPT-2 tensor names
/// (wte.weight, h.{i}.attn.c_attn.weight, ...; an optional "transformer."
/// prefix is accepted). Throws LoadError naming the tensor on a missing
/// tensor, shape mismatch, non-finite value or unsupported dtype.
ModelWeights load_model(const TensorFile& container, const ModelConfig& config);

/// Inverse of load_model, used to produce containers for tests and demos.
std::map<std::string, TensorData> export_tensors(const ModelWeights& weights,
                                                 WeightLayout layout = WeightLayout::conv1d);

enum class CaptureLevel { none, simple, detailed };
enum class AttentionReduction { head_mean, per_head };

struct CaptureSpec {
    CaptureLevel level = CaptureLevel::simple;
    std::size_t preview_dims = 8;
    AttentionReduction attention_reduction = AttentionReduction::head_mean;
    /// Also keep every query row of the attention maps (training traces).
    bool full_attention = false;
};

std::string_view to_string(CaptureLevel level);
std::string_view to_string(AttentionReduction reduction);
CaptureLevel parse_capture_level(std::string_view s);
AttentionReduction parse_attention_reduction(std::string_view s);

/// Internals of one layer, recorded at capture level "detailed".
/// Attention rows hold one entry per head, or a single head-mean entry.
struct LayerCapture {
    std::vector<std::vector<float>> last_query_attention;             // [heads][seq]
    std::vector<std::vector<std::vector<float>>> attention;            // [heads][query][0..query], full_attention only
    std::vector<std::vector<float>> hidden_preview;                   // [seq][preview_dims]
    std::vector<float> hidden_norm;                                   // [seq]
};

struct ForwardRecord {
    Matrix logits;  // [rows, vocab]; rows == seq_len, or 1 for LogitRows::last
    std::vector<std::vector<float>> embedding_preview;  // [seq][preview_dims], detailed only
    std::vector<LayerCapture> layers;                   // detailed only
};

enum class LogitRows { all, last };

/// Pre-LN GPT-2 forward pass. Throws ContextOverflowError when
/// ids.size() > n_ctx, and ParameterError for an empty sequence or an
/// out-of-range id.
ForwardRecord forward(const ModelWeights& weights, std::span<const TokenId> ids, const CaptureSpec& capture = {},
                      LogitRows rows = LogitRows::all);

std::vector<float> layer_norm(std::span<const float> x, std::span<const float> gain, std::span<const float> bias,
                              float eps);

float gelu(float z);

std::vector<float> mlp(std::span<const float> x, const LayerWeights& layer);

struct AttentionResult {
    Matrix output;                // [seq, d] after the output projection
    std::vector<Matrix> weights;  // per head [seq, seq]; masked entries are exactly 0
};

AttentionResult causal_self_attention(const Matrix& x, const LayerWeights& layer, const ModelConfig& config);

/// Temperature softmax. Temperature 0 yields the one-hot argmax (lowest index
/// on ties). Throws ParameterError for a negative temperature.
std::vector<double> softmax(std::span<const float> logits, double temperature = 1.0);

}  // namespace tracelm
