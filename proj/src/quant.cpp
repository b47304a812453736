#include "sleepnet/quant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sleepnet {

Tensor<float> QuantTensor::dequantize() const {
    Tensor<float> t(shape);
    for (std::size_t i = 0; i < values.size(); ++i) {
        t[i] = scale * static_cast<float>(static_cast<std::int32_t>(values[i]) - zero_point);
    }
    return t;
}

QuantTensor quantize_tensor(const Tensor<float>& t) {
    require_finite(t, "quantize_tensor input");
    QuantTensor q;
    q.shape = t.shape();
    q.values.assign(t.size(), 0);

    float peak = 0.0f;
    for (float v : t.values()) peak = std::max(peak, std::abs(v));
    if (peak == 0.0f) {
        q.scale = 1.0f;
        return q;
    }
    // float division keeps requantization of a dequantized tensor a fixed point
    q.scale = peak / 127.0f;
    if (!(q.scale > 0.0f)) q.scale = std::numeric_limits<float>::denorm_min();
    const double s = q.scale;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double r = std::nearbyint(static_cast<double>(t[i]) / s);  // ties to even
        q.values[i] = static_cast<std::int8_t>(std::clamp(r, -127.0, 127.0));
    }
    return q;
}

QuantModel quantize_model(const ModelParams<float>& params, const Dataset& calibration) {
    if (calibration.empty()) throw Error(ErrorCode::EmptyCalibration, "quantization needs calibration epochs");
    const auto specs = param_specs(params.arch);
    QuantModel m;
    m.arch = params.arch;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (specs[i].kind == ParamSpec::Kind::Weight) {
            m.tensors.emplace_back(quantize_tensor(params.tensors[i]));
        } else {
            m.tensors.emplace_back(params.tensors[i]);
        }
    }
    return m;
}

ModelParams<float> dequantize_model(const QuantModel& model) {
    ModelParams<float> p{model.arch, {}};
    p.tensors.reserve(model.tensors.size());
    for (const auto& slot : model.tensors) {
        if (const auto* q = std::get_if<QuantTensor>(&slot)) {
            p.tensors.push_back(q->dequantize());
        } else {
            p.tensors.push_back(std::get<Tensor<float>>(slot));
        }
    }
    return p;
}

std::vector<float> quant_forward(const QuantModel& model, std::span<const float> epoch) {
    return forward(dequantize_model(model), epoch);
}

double argmax_agreement(const ModelParams<float>& params, const QuantModel& model, const Dataset& data) {
    if (data.empty()) throw Error(ErrorCode::EmptyDataset, "agreement over an empty set");
    const auto dequantized = dequantize_model(model);
    std::size_t same = 0;
    for (const auto& e : data) {
        const auto input = model_input(e);
        if (argmax(std::span<const float>(forward(params, input))) ==
            argmax(std::span<const float>(forward(dequantized, input)))) {
            ++same;
        }
    }
    return static_cast<double>(same) / static_cast<double>(data.size());
}

ModelFile to_model_file(const QuantModel& model) {
    const auto specs = param_specs(model.arch);
    if (specs.size() != model.tensors.size()) throw Error(ErrorCode::ShapeMismatch, "incomplete quantized model");
    ModelFile file;
    file.arch = model.arch;
    file.flags = ModelFile::kQuantizedFlag;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        TensorRecord t;
        t.name = specs[i].name;
        t.shape = specs[i].shape;
        if (const auto* q = std::get_if<QuantTensor>(&model.tensors[i])) {
            t.dtype = TensorRecord::DType::Int8;
            t.i8 = q->values;
            t.scale = q->scale;
        } else {
            const auto& f = std::get<Tensor<float>>(model.tensors[i]);
            t.f32.assign(f.values().begin(), f.values().end());
        }
        file.tensors.push_back(std::move(t));
    }
    return file;
}

QuantModel from_model_file(const ModelFile& file) {
    QuantModel m;
    m.arch = file.arch;
    for (const auto& t : file.tensors) {
        if (t.dtype == TensorRecord::DType::Int8) {
            QuantTensor q;
            q.shape = t.shape;
            q.values = t.i8;
            q.scale = t.scale;
            m.tensors.emplace_back(std::move(q));
        } else {
            m.tensors.emplace_back(Tensor<float>(t.shape, t.f32));
        }
    }
    return m;
}

void save_quant_model(const QuantModel& model, const std::filesystem::path& path) {
    write_model_file(to_model_file(model), path);
}

QuantModel load_quant_model(const std::filesystem::path& path) {
    ModelFile file = read_model_file(path);
    if (!file.quantized()) throw Error(ErrorCode::InvalidArgument, path.string() + " is not a quantized model");
    return from_model_file(file);
}

}  // namespace sleepnet
