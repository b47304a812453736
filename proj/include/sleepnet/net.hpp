#pragma once

// The CNN-Transformer sleep stager: four strided convolutions, one pre-norm
// transformer block, and a dense softmax classifier over the flattened
// feature map.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sleepnet/epochs.hpp"
#include "sleepnet/kernels.hpp"
#include "sleepnet/tensor.hpp"

namespace sleepnet {

struct ConvSpec {
    std::size_t kernel = 1;
    std::size_t stride = 1;
    std::size_t channels = 1;

    bool operator==(const ConvSpec&) const = default;
};

struct ArchConfig {
    std::size_t input_length = kEpochSamples;
    std::vector<ConvSpec> convs;
    std::size_t d_model = 0;
    std::size_t heads = 1;
    std::size_t ffn_dim = 0;
    std::size_t n_classes = kNumStages;
    double width_multiplier = 1.0;

    /// Channel count after applying the width multiplier; unchanged at 1.0,
    /// otherwise rounded to a positive multiple of `heads`.
    std::size_t scaled(std::size_t channels) const;
    std::size_t conv_channels(std::size_t layer) const { return scaled(convs.at(layer).channels); }
    std::size_t model_width() const { return scaled(d_model); }
    std::size_t ffn_width() const { return scaled(ffn_dim); }

    /// Output length of every convolution, in order.
    std::vector<std::size_t> length_chain() const;
    std::size_t sequence_length() const { return length_chain().back(); }
    std::size_t flattened_width() const { return sequence_length() * model_width(); }

    /// Throws InvalidArgument when the chain or the widths are inconsistent.
    void validate() const;

    bool operator==(const ArchConfig&) const = default;
};

/// Conv table (50,6,32) (8,4,64) (8,3,128) (3,2,128), d_model 128, 4 heads, ffn 256.
ArchConfig default_arch(double width_multiplier = 1.0);

struct ParamSpec {
    std::string name;
    Shape shape;
    std::size_t fan_in = 0;
    std::size_t fan_out = 0;
    enum class Kind { Weight, Bias, NormGain, NormShift } kind = Kind::Weight;
};

/// Every tensor of the architecture, in storage order.
std::vector<ParamSpec> param_specs(const ArchConfig& arch);

/// Positions of the fixed tensors within ModelParams::tensors.
struct ParamIndex {
    std::size_t n_conv = 0;

    std::size_t conv_weight(std::size_t layer) const { return 2 * layer; }
    std::size_t conv_bias(std::size_t layer) const { return 2 * layer + 1; }
    std::size_t base() const { return 2 * n_conv; }
    std::size_t ln1_gain() const { return base() + 0; }
    std::size_t ln1_shift() const { return base() + 1; }
    std::size_t wq() const { return base() + 2; }
    std::size_t bq() const { return base() + 3; }
    std::size_t wk() const { return base() + 4; }
    std::size_t bk() const { return base() + 5; }
    std::size_t wv() const { return base() + 6; }
    std::size_t bv() const { return base() + 7; }
    std::size_t wo() const { return base() + 8; }
    std::size_t bo() const { return base() + 9; }
    std::size_t ln2_gain() const { return base() + 10; }
    std::size_t ln2_shift() const { return base() + 11; }
    std::size_t ffn1_weight() const { return base() + 12; }
    std::size_t ffn1_bias() const { return base() + 13; }
    std::size_t ffn2_weight() const { return base() + 14; }
    std::size_t ffn2_bias() const { return base() + 15; }
    std::size_t classifier_weight() const { return base() + 16; }
    std::size_t classifier_bias() const { return base() + 17; }
    std::size_t count() const { return base() + 18; }
};

template <typename T>
struct ModelParams {
    ArchConfig arch;
    std::vector<Tensor<T>> tensors;

    ParamIndex index() const { return ParamIndex{arch.convs.size()}; }
    Tensor<T>& operator[](std::size_t i) { return tensors[i]; }
    const Tensor<T>& operator[](std::size_t i) const { return tensors[i]; }

    template <typename U>
    ModelParams<U> cast() const {
        ModelParams<U> out{arch, {}};
        out.tensors.reserve(tensors.size());
        for (const auto& t : tensors) out.tensors.push_back(t.template cast<U>());
        return out;
    }

    bool operator==(const ModelParams&) const = default;
};

/// Parameters shaped like `arch` with every element zero (gradient buffers).
template <typename T>
ModelParams<T> zeros_like(const ArchConfig& arch);

/// Glorot-uniform weights, zero biases, unit norm gains; deterministic in `seed`.
ModelParams<float> init_params(const ArchConfig& arch, std::uint64_t seed);

template <typename T>
std::size_t param_count(const ModelParams<T>& params) {
    std::size_t n = 0;
    for (const auto& t : params.tensors) n += t.size();
    return n;
}

std::size_t param_count(const ArchConfig& arch);

/// Activations retained by a training-mode forward pass.
template <typename T>
struct ForwardCache {
    Tensor<T> input;                      // [L, 1]
    std::vector<Tensor<T>> conv_outputs;  // post-ReLU, one per conv layer
    LayerNormCache<T> norm1;
    AttentionCache<T> attention;
    Tensor<T> residual1;                  // conv features + attention
    LayerNormCache<T> norm2;
    Tensor<T> norm2_output;
    Tensor<T> ffn_hidden;                 // post-ReLU
    Tensor<T> features;                   // residual1 + ffn, flattened
    std::vector<T> probs;
};

/// Class probabilities for one standardized epoch. Passing a cache selects
/// training mode and fills it for backpropagation.
template <typename T>
std::vector<T> forward(const ModelParams<T>& params, std::span<const float> epoch,
                       ForwardCache<T>* cache = nullptr);

/// Standardized copy of an epoch's samples, ready for forward().
std::vector<float> model_input(const LabeledEpoch& epoch);

std::size_t argmax(std::span<const float> probs);
std::size_t argmax(std::span<const double> probs);

/// Stored tensor in an SLPM file.
struct TensorRecord {
    enum class DType : std::uint8_t { Float32 = 0, Int8 = 1 };

    std::string name;
    Shape shape;
    DType dtype = DType::Float32;
    std::vector<float> f32;
    std::vector<std::int8_t> i8;
    float scale = 1.0f;  // int8 only
};

/// In-memory form of the SLPM model container.
struct ModelFile {
    static constexpr std::uint16_t kQuantizedFlag = 1;

    ArchConfig arch;
    std::uint16_t flags = 0;
    std::vector<TensorRecord> tensors;

    bool quantized() const { return (flags & kQuantizedFlag) != 0; }
};

void write_model_file(const ModelFile& file, const std::filesystem::path& path);
std::string encode_model_file(const ModelFile& file);
/// Parses and validates magic, version, directory bounds and every tensor
/// shape against the embedded architecture.
ModelFile read_model_file(const std::filesystem::path& path);
ModelFile decode_model_file(const std::string& bytes);

void save_model(const ModelParams<float>& params, const std::filesystem::path& path);
/// Loads a 32-bit model; quantized files are rejected (see load_quant_model).
ModelParams<float> load_model(const std::filesystem::path& path);

}  // namespace sleepnet
