#pragma once

// Post-training symmetric per-tensor int8 weight quantization. Storage is
// int8; inference dequantizes and computes in 32-bit float.

#include <cstdint>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

#include "sleepnet/epochs.hpp"
#include "sleepnet/net.hpp"

namespace sleepnet {

struct QuantTensor {
    Shape shape;
    std::vector<std::int8_t> values;
    float scale = 1.0f;
    std::int32_t zero_point = 0;

    /// scale * (q - zero_point), in float.
    Tensor<float> dequantize() const;
};

/// scale = max|t| / 127, q = clamp(round_half_even(t / scale), -127, 127).
/// An all-zero tensor gets scale 1.
QuantTensor quantize_tensor(const Tensor<float>& t);

struct QuantModel {
    ArchConfig arch;
    /// One entry per parameter slot: weights as int8, biases and norm
    /// parameters kept in float.
    std::vector<std::variant<QuantTensor, Tensor<float>>> tensors;
};

/// Quantizes every weight matrix/kernel. The calibration set must be
/// non-empty; it is reserved for activation statistics.
QuantModel quantize_model(const ModelParams<float>& params, const Dataset& calibration);

ModelParams<float> dequantize_model(const QuantModel& model);

/// Class probabilities with weights dequantized on the fly.
std::vector<float> quant_forward(const QuantModel& model, std::span<const float> epoch);

/// Fraction of epochs where float and quantized inference pick the same class.
double argmax_agreement(const ModelParams<float>& params, const QuantModel& model, const Dataset& data);

ModelFile to_model_file(const QuantModel& model);
QuantModel from_model_file(const ModelFile& file);
void save_quant_model(const QuantModel& model, const std::filesystem::path& path);
QuantModel load_quant_model(const std::filesystem::path& path);

}  // namespace sleepnet
