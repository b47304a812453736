#include "sleepnet/net.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "binary_io.hpp"

namespace sleepnet {

std::size_t ArchConfig::scaled(std::size_t channels) const {
    if (width_multiplier == 1.0) return channels;
    const double raw = static_cast<double>(channels) * width_multiplier / static_cast<double>(heads);
    const auto groups = std::max<long long>(1, std::llround(raw));
    return static_cast<std::size_t>(groups) * heads;
}

std::vector<std::size_t> ArchConfig::length_chain() const {
    std::vector<std::size_t> chain;
    std::size_t length = input_length;
    for (const auto& c : convs) {
        if (c.kernel == 0 || c.stride == 0 || length < c.kernel) {
            throw Error(ErrorCode::InvalidArgument,
                        "conv chain collapses: length " + std::to_string(length) + " with kernel " +
                            std::to_string(c.kernel));
        }
        length = conv_output_length(length, c.kernel, c.stride);
        chain.push_back(length);
    }
    return chain;
}

void ArchConfig::validate() const {
    if (convs.empty()) throw Error(ErrorCode::InvalidArgument, "architecture needs at least one convolution");
    if (heads == 0 || d_model == 0 || ffn_dim == 0 || n_classes < 2 || input_length == 0) {
        throw Error(ErrorCode::InvalidArgument, "architecture widths must be positive");
    }
    if (!(width_multiplier > 0.0) || !std::isfinite(width_multiplier)) {
        throw Error(ErrorCode::InvalidArgument, "width multiplier must be positive");
    }
    if (convs.back().channels != d_model) {
        throw Error(ErrorCode::InvalidArgument, "last convolution must produce d_model channels");
    }
    if (d_model % heads != 0 || model_width() % heads != 0) {
        throw Error(ErrorCode::InvalidArgument, "d_model not divisible by the head count");
    }
    (void)length_chain();
}

ArchConfig default_arch(double width_multiplier) {
    ArchConfig a;
    a.input_length = kEpochSamples;
    a.convs = {{50, 6, 32}, {8, 4, 64}, {8, 3, 128}, {3, 2, 128}};
    a.d_model = 128;
    a.heads = 4;
    a.ffn_dim = 256;
    a.n_classes = kNumStages;
    a.width_multiplier = width_multiplier;
    return a;
}

std::vector<ParamSpec> param_specs(const ArchConfig& arch) {
    arch.validate();
    using K = ParamSpec::Kind;
    std::vector<ParamSpec> specs;
    std::size_t cin = 1;
    for (std::size_t i = 0; i < arch.convs.size(); ++i) {
        const std::size_t k = arch.convs[i].kernel, cout = arch.conv_channels(i);
        const std::string name = "conv" + std::to_string(i + 1);
        specs.push_back({name + ".weight", {k, cin, cout}, k * cin, k * cout, K::Weight});
        specs.push_back({name + ".bias", {cout}, 0, 0, K::Bias});
        cin = cout;
    }
    const std::size_t d = arch.model_width(), f = arch.ffn_width();
    auto square = [&](const std::string& w, const std::string& b) {
        specs.push_back({w, {d, d}, d, d, K::Weight});
        specs.push_back({b, {d}, 0, 0, K::Bias});
    };
    specs.push_back({"norm1.gain", {d}, 0, 0, K::NormGain});
    specs.push_back({"norm1.shift", {d}, 0, 0, K::NormShift});
    square("attention.wq", "attention.bq");
    square("attention.wk", "attention.bk");
    square("attention.wv", "attention.bv");
    square("attention.wo", "attention.bo");
    specs.push_back({"norm2.gain", {d}, 0, 0, K::NormGain});
    specs.push_back({"norm2.shift", {d}, 0, 0, K::NormShift});
    specs.push_back({"ffn1.weight", {d, f}, d, f, K::Weight});
    specs.push_back({"ffn1.bias", {f}, 0, 0, K::Bias});
    specs.push_back({"ffn2.weight", {f, d}, f, d, K::Weight});
    specs.push_back({"ffn2.bias", {d}, 0, 0, K::Bias});
    const std::size_t flat = arch.flattened_width();
    specs.push_back({"classifier.weight", {flat, arch.n_classes}, flat, arch.n_classes, K::Weight});
    specs.push_back({"classifier.bias", {arch.n_classes}, 0, 0, K::Bias});
    return specs;
}

std::size_t param_count(const ArchConfig& arch) {
    std::size_t n = 0;
    for (const auto& s : param_specs(arch)) n += shape_size(s.shape);
    return n;
}

template <typename T>
ModelParams<T> zeros_like(const ArchConfig& arch) {
    ModelParams<T> p{arch, {}};
    for (const auto& s : param_specs(arch)) p.tensors.emplace_back(s.shape);
    return p;
}

ModelParams<float> init_params(const ArchConfig& arch, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ModelParams<float> p{arch, {}};
    for (const auto& s : param_specs(arch)) {
        Tensor<float> t(s.shape);
        if (s.kind == ParamSpec::Kind::Weight) {
            const double bound = std::sqrt(6.0 / static_cast<double>(s.fan_in + s.fan_out));
            for (auto& v : t.values()) {
                const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;  // [0, 1)
                v = static_cast<float>((2.0 * u - 1.0) * bound);
            }
        } else if (s.kind == ParamSpec::Kind::NormGain) {
            t.fill(1.0f);
        }
        p.tensors.push_back(std::move(t));
    }
    return p;
}

template <typename T>
std::vector<T> forward(const ModelParams<T>& p, std::span<const float> epoch, ForwardCache<T>* cache) {
    const ArchConfig& arch = p.arch;
    const ParamIndex idx = p.index();
    if (epoch.size() != arch.input_length) {
        throw Error(ErrorCode::ShapeMismatch, "model input must hold " + std::to_string(arch.input_length) +
                                                  " samples, got " + std::to_string(epoch.size()));
    }
    if (p.tensors.size() != idx.count()) throw Error(ErrorCode::ShapeMismatch, "incomplete parameter set");

    Tensor<T> x({epoch.size(), 1});
    std::copy(epoch.begin(), epoch.end(), x.data());
    if (cache) {
        cache->input = x;
        cache->conv_outputs.clear();
    }

    const auto chain = arch.length_chain();
    for (std::size_t i = 0; i < arch.convs.size(); ++i) {
        x = relu(conv1d(x, p[idx.conv_weight(i)], p[idx.conv_bias(i)], arch.convs[i].stride));
        const Shape expected{chain[i], arch.conv_channels(i)};
        if (x.shape() != expected) {
            throw Error(ErrorCode::ShapeMismatch, "conv" + std::to_string(i + 1) + " produced " +
                                                      shape_string(x.shape()) + ", expected " +
                                                      shape_string(expected));
        }
        require_finite(x, "convolution");
        if (cache) cache->conv_outputs.push_back(x);
    }

    const AttentionParams<T> attn{p[idx.wq()], p[idx.bq()], p[idx.wk()], p[idx.bk()],
                                  p[idx.wv()], p[idx.bv()], p[idx.wo()], p[idx.bo()]};
    Tensor<T> normed = layer_norm(x, p[idx.ln1_gain()], p[idx.ln1_shift()], cache ? &cache->norm1 : nullptr);
    Tensor<T> h = multi_head_attention(normed, attn, arch.heads, cache ? &cache->attention : nullptr);
    for (std::size_t i = 0; i < h.size(); ++i) h[i] += x[i];
    require_finite(h, "attention");
    if (cache) cache->residual1 = h;

    normed = layer_norm(h, p[idx.ln2_gain()], p[idx.ln2_shift()], cache ? &cache->norm2 : nullptr);
    Tensor<T> hidden = relu(dense(normed, p[idx.ffn1_weight()], p[idx.ffn1_bias()]));
    Tensor<T> out = dense(hidden, p[idx.ffn2_weight()], p[idx.ffn2_bias()]);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += h[i];
    require_finite(out, "feed-forward");
    if (cache) {
        cache->norm2_output = std::move(normed);
        cache->ffn_hidden = std::move(hidden);
    }

    Tensor<T> features = out.reshaped({out.size()});
    Tensor<T> logits = dense(features, p[idx.classifier_weight()], p[idx.classifier_bias()]);
    require_finite(logits, "classifier");
    auto probs = softmax<T>(logits.values());
    if (cache) {
        cache->features = std::move(features);
        cache->probs = probs;
    }
    return probs;
}

std::vector<float> model_input(const LabeledEpoch& epoch) { return standardize(epoch.samples); }

std::size_t argmax(std::span<const float> probs) {
    return static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

std::size_t argmax(std::span<const double> probs) {
    return static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

template ModelParams<float> zeros_like<float>(const ArchConfig&);
template ModelParams<double> zeros_like<double>(const ArchConfig&);
template std::vector<float> forward<float>(const ModelParams<float>&, std::span<const float>, ForwardCache<float>*);
template std::vector<double> forward<double>(const ModelParams<double>&, std::span<const float>,
                                             ForwardCache<double>*);

// ---------------------------------------------------------------------------
// SLPM container

namespace {

constexpr char kModelMagic[4] = {'S', 'L', 'P', 'M'};
constexpr std::uint16_t kModelVersion = 1;

std::size_t dtype_bytes(TensorRecord::DType d) { return d == TensorRecord::DType::Int8 ? 1 : 4; }

void put_arch(std::ostream& out, const ArchConfig& a) {
    using detail::put;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.input_length));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.convs.size()));
    for (const auto& c : a.convs) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(c.kernel));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(c.stride));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(c.channels));
    }
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.d_model));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.heads));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.ffn_dim));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.n_classes));
    put<float>(out, static_cast<float>(a.width_multiplier));
}

ArchConfig get_arch(std::istream& in) {
    auto u32 = [&](const char* what) {
        return static_cast<std::size_t>(detail::get<std::uint32_t>(in, ErrorCode::ModelTruncated, what));
    };
    ArchConfig a;
    a.input_length = u32("input length");
    const std::size_t n = u32("conv count");
    if (n == 0 || n > 64) throw Error(ErrorCode::ModelShapeMismatch, "implausible conv layer count");
    for (std::size_t i = 0; i < n; ++i) {
        ConvSpec c;
        c.kernel = u32("conv kernel");
        c.stride = u32("conv stride");
        c.channels = u32("conv channels");
        a.convs.push_back(c);
    }
    a.d_model = u32("d_model");
    a.heads = u32("heads");
    a.ffn_dim = u32("ffn width");
    a.n_classes = u32("class count");
    a.width_multiplier = detail::get<float>(in, ErrorCode::ModelTruncated, "width multiplier");
    try {
        a.validate();
    } catch (const Error& e) {
        throw Error(ErrorCode::ModelShapeMismatch, std::string("embedded architecture is invalid: ") + e.what());
    }
    return a;
}

}  // namespace

std::string encode_model_file(const ModelFile& file) {
    std::ostringstream head(std::ios::binary);
    head.write(kModelMagic, 4);
    detail::put<std::uint16_t>(head, kModelVersion);
    detail::put<std::uint16_t>(head, file.flags);
    put_arch(head, file.arch);
    detail::put<std::uint32_t>(head, static_cast<std::uint32_t>(file.tensors.size()));

    std::size_t dir_bytes = 0;
    for (const auto& t : file.tensors) {
        dir_bytes += 1 + t.name.size() + 1 + 4 * t.shape.size() + 1 + 8 + 8;
        if (t.dtype == TensorRecord::DType::Int8) dir_bytes += 4;
    }
    std::uint64_t offset = static_cast<std::uint64_t>(head.str().size() + dir_bytes);

    for (const auto& t : file.tensors) {
        if (t.name.size() > 255) throw Error(ErrorCode::InvalidArgument, "tensor name too long");
        const std::uint64_t length = shape_size(t.shape) * dtype_bytes(t.dtype);
        const std::size_t stored = t.dtype == TensorRecord::DType::Int8 ? t.i8.size() : t.f32.size();
        if (stored != shape_size(t.shape)) {
            throw Error(ErrorCode::ShapeMismatch, "tensor '" + t.name + "' payload does not match its shape");
        }
        detail::put<std::uint8_t>(head, static_cast<std::uint8_t>(t.name.size()));
        head.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        detail::put<std::uint8_t>(head, static_cast<std::uint8_t>(t.shape.size()));
        for (auto d : t.shape) detail::put<std::uint32_t>(head, static_cast<std::uint32_t>(d));
        detail::put<std::uint8_t>(head, static_cast<std::uint8_t>(t.dtype));
        detail::put<std::uint64_t>(head, offset);
        detail::put<std::uint64_t>(head, length);
        if (t.dtype == TensorRecord::DType::Int8) detail::put<float>(head, t.scale);
        offset += length;
    }
    for (const auto& t : file.tensors) {
        if (t.dtype == TensorRecord::DType::Int8) {
            head.write(reinterpret_cast<const char*>(t.i8.data()), static_cast<std::streamsize>(t.i8.size()));
        } else {
            head.write(reinterpret_cast<const char*>(t.f32.data()),
                       static_cast<std::streamsize>(t.f32.size() * sizeof(float)));
        }
    }
    return head.str();
}

void write_model_file(const ModelFile& file, const std::filesystem::path& path) {
    const std::string bytes = encode_model_file(file);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

ModelFile decode_model_file(const std::string& bytes) {
    std::istringstream in(bytes, std::ios::binary);
    char magic[4];
    detail::get_bytes(in, magic, 4, ErrorCode::ModelTruncated, "model magic");
    if (!std::equal(magic, magic + 4, kModelMagic)) {
        throw Error(ErrorCode::ModelBadMagic, "not a model file (bad magic)");
    }
    const auto version = detail::get<std::uint16_t>(in, ErrorCode::ModelTruncated, "model version");
    if (version != kModelVersion) {
        throw Error(ErrorCode::ModelVersion, "unsupported model version " + std::to_string(version));
    }
    ModelFile file;
    file.flags = detail::get<std::uint16_t>(in, ErrorCode::ModelTruncated, "model flags");
    file.arch = get_arch(in);
    const auto count = detail::get<std::uint32_t>(in, ErrorCode::ModelTruncated, "tensor count");

    const auto specs = param_specs(file.arch);
    if (count != specs.size()) {
        throw Error(ErrorCode::ModelShapeMismatch, "model holds " + std::to_string(count) + " tensors; the " +
                                                       "architecture needs " + std::to_string(specs.size()));
    }

    struct Span {
        std::uint64_t offset, length;
    };
    std::vector<Span> spans;
    for (std::uint32_t i = 0; i < count; ++i) {
        TensorRecord t;
        const auto name_len = detail::get<std::uint8_t>(in, ErrorCode::ModelTruncated, "tensor name length");
        t.name.resize(name_len);
        detail::get_bytes(in, t.name.data(), name_len, ErrorCode::ModelTruncated, "tensor name");
        const auto rank = detail::get<std::uint8_t>(in, ErrorCode::ModelTruncated, "tensor rank");
        for (std::uint8_t r = 0; r < rank; ++r) {
            t.shape.push_back(detail::get<std::uint32_t>(in, ErrorCode::ModelTruncated, "tensor dims"));
        }
        const auto dtype = detail::get<std::uint8_t>(in, ErrorCode::ModelTruncated, "tensor dtype");
        if (dtype > 1) throw Error(ErrorCode::ModelShapeMismatch, "unknown dtype for tensor '" + t.name + "'");
        t.dtype = static_cast<TensorRecord::DType>(dtype);
        Span s{};
        s.offset = detail::get<std::uint64_t>(in, ErrorCode::ModelTruncated, "tensor offset");
        s.length = detail::get<std::uint64_t>(in, ErrorCode::ModelTruncated, "tensor length");
        if (t.dtype == TensorRecord::DType::Int8) {
            t.scale = detail::get<float>(in, ErrorCode::ModelTruncated, "tensor scale");
            if (!(t.scale > 0.0f) || !std::isfinite(t.scale)) {
                throw Error(ErrorCode::ModelShapeMismatch, "non-positive scale for tensor '" + t.name + "'");
            }
        }

        const auto& spec = specs[i];
        if (t.name != spec.name || t.shape != spec.shape) {
            throw Error(ErrorCode::ModelShapeMismatch, "tensor '" + t.name + "' " + shape_string(t.shape) +
                                                           " does not match expected '" + spec.name + "' " +
                                                           shape_string(spec.shape));
        }
        if (s.length != shape_size(t.shape) * dtype_bytes(t.dtype)) {
            throw Error(ErrorCode::ModelShapeMismatch, "payload length of '" + t.name + "' disagrees with its shape");
        }
        if (s.offset > bytes.size() || s.length > bytes.size() - s.offset) {
            throw Error(ErrorCode::ModelTruncated, "payload of '" + t.name + "' lies past the end of the file");
        }
        file.tensors.push_back(std::move(t));
        spans.push_back(s);
    }

    for (std::size_t i = 0; i < file.tensors.size(); ++i) {
        auto& t = file.tensors[i];
        const char* src = bytes.data() + spans[i].offset;
        if (t.dtype == TensorRecord::DType::Int8) {
            t.i8.resize(spans[i].length);
            std::memcpy(t.i8.data(), src, spans[i].length);
        } else {
            t.f32.resize(spans[i].length / 4);
            std::memcpy(t.f32.data(), src, spans[i].length);
            for (float v : t.f32) {
                if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "non-finite weight in '" + t.name + "'");
            }
        }
    }
    return file;
}

ModelFile read_model_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return decode_model_file(buf.str());
}

void save_model(const ModelParams<float>& params, const std::filesystem::path& path) {
    const auto specs = param_specs(params.arch);
    if (specs.size() != params.tensors.size()) throw Error(ErrorCode::ShapeMismatch, "incomplete parameter set");
    ModelFile file;
    file.arch = params.arch;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (params.tensors[i].shape() != specs[i].shape) {
            throw Error(ErrorCode::ShapeMismatch, "tensor '" + specs[i].name + "' has the wrong shape");
        }
        TensorRecord t;
        t.name = specs[i].name;
        t.shape = specs[i].shape;
        t.f32.assign(params.tensors[i].values().begin(), params.tensors[i].values().end());
        file.tensors.push_back(std::move(t));
    }
    write_model_file(file, path);
}

ModelParams<float> load_model(const std::filesystem::path& path) {
    ModelFile file = read_model_file(path);
    if (file.quantized()) {
        throw Error(ErrorCode::InvalidArgument, path.string() + " is a quantized model; load it as one");
    }
    ModelParams<float> p{file.arch, {}};
    for (auto& t : file.tensors) {
        if (t.dtype != TensorRecord::DType::Float32) {
            throw Error(ErrorCode::ModelShapeMismatch, "int8 tensor in a 32-bit model");
        }
        p.tensors.emplace_back(t.shape, std::move(t.f32));
    }
    return p;
}

}  // namespace sleepnet
