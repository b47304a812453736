#include "sleepnet/epochs.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>

#include "binary_io.hpp"
#include "sleepnet/error.hpp"

namespace sleepnet {

namespace {

constexpr char kStoreMagic[4] = {'S', 'L', 'P', 'E'};
constexpr std::uint16_t kStoreVersion = 1;
constexpr std::size_t kStoreHeaderBytes = 16;
constexpr std::size_t kStoreRecordBytes = 2 + 1 + 1 + 4 + 4 * kEpochSamples;

/// Number of whole epochs in `seconds`, or -1 when it is not a multiple of 30 s.
long whole_epochs(double seconds) {
    const double n = seconds / kEpochSeconds;
    const double r = std::round(n);
    if (std::abs(n - r) > 1e-6) return -1;
    return static_cast<long>(r);
}

}  // namespace

const char* stage_name(SleepStage stage) {
    switch (stage) {
        case SleepStage::Wake: return "Wake";
        case SleepStage::N1: return "N1";
        case SleepStage::N2: return "N2";
        case SleepStage::N3: return "N3";
        case SleepStage::REM: return "REM";
    }
    return "?";
}

SleepStage stage_from_index(std::size_t index) {
    if (index >= kNumStages) throw Error(ErrorCode::InvalidArgument, "stage index out of range");
    return static_cast<SleepStage>(index);
}

std::optional<SleepStage> map_label(std::string_view text) {
    static const std::map<std::string_view, std::optional<SleepStage>> table = {
        {"Sleep stage W", SleepStage::Wake}, {"Sleep stage 1", SleepStage::N1},
        {"Sleep stage 2", SleepStage::N2},   {"Sleep stage 3", SleepStage::N3},
        {"Sleep stage 4", SleepStage::N3},   {"Sleep stage R", SleepStage::REM},
        {"Movement time", std::nullopt},     {"Sleep stage ?", std::nullopt},
    };
    auto it = table.find(text);
    if (it == table.end()) {
        throw Error(ErrorCode::UnrecognizedLabel, "unrecognized stage label '" + std::string(text) + "'");
    }
    return it->second;
}

SubjectNight segment_epochs(std::span<const double> samples,
                            const std::vector<RawAnnotation>& annotations,
                            std::uint16_t subject_id, std::uint8_t night) {
    const std::size_t available = samples.size() / kEpochSamples;
    std::map<std::uint32_t, std::optional<SleepStage>> windows;

    for (const auto& a : annotations) {
        const long start = whole_epochs(a.onset);
        const long count = whole_epochs(a.duration);
        if (start < 0 || count < 0) {
            throw Error(ErrorCode::AnnotationMisaligned,
                        "annotation '" + a.text + "' at " + std::to_string(a.onset) + " s lasting " +
                            std::to_string(a.duration) + " s is not aligned to 30 s epochs");
        }
        if (static_cast<std::size_t>(start + count) > available) {
            throw Error(ErrorCode::AnnotationPastEnd,
                        "annotation '" + a.text + "' ends past the signal (" +
                            std::to_string(samples.size()) + " samples)");
        }
        const auto stage = map_label(a.text);
        for (long i = 0; i < count; ++i) {
            const auto index = static_cast<std::uint32_t>(start + i);
            if (windows.contains(index)) {
                throw Error(ErrorCode::AnnotationMisaligned,
                            "overlapping annotations at epoch " + std::to_string(index));
            }
            windows.emplace(index, stage);  // discarded windows still claim their slot
        }
    }

    SubjectNight out{subject_id, night, {}};
    out.epochs.reserve(windows.size());
    for (const auto& [index, stage] : windows) {
        if (!stage) continue;
        LabeledEpoch e;
        e.stage = *stage;
        e.subject_id = subject_id;
        e.night = night;
        e.epoch_index = index;
        e.samples.resize(kEpochSamples);
        const auto first = samples.begin() + static_cast<std::ptrdiff_t>(index) * kEpochSamples;
        for (std::size_t i = 0; i < kEpochSamples; ++i) {
            const double v = first[static_cast<std::ptrdiff_t>(i)];
            if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "non-finite sample in recording");
            e.samples[i] = static_cast<float>(v);
        }
        out.epochs.push_back(std::move(e));
    }
    return out;
}

std::vector<RawAnnotation> clip_annotations(const std::vector<RawAnnotation>& annotations,
                                            double signal_seconds) {
    const double limit = std::floor(signal_seconds / kEpochSeconds) * kEpochSeconds;
    std::vector<RawAnnotation> out;
    for (auto a : annotations) {
        if (a.onset >= limit) continue;
        if (a.onset + a.duration > limit) a.duration = limit - a.onset;
        out.push_back(std::move(a));
    }
    return out;
}

SubjectNight trim_wake(const SubjectNight& night) {
    const auto& e = night.epochs;
    auto is_sleep = [](const LabeledEpoch& x) { return x.stage != SleepStage::Wake; };
    SubjectNight out{night.subject_id, night.night, {}};

    auto first = std::find_if(e.begin(), e.end(), is_sleep);
    if (first == e.end()) {
        const auto keep = std::min(e.size(), kWakeMarginEpochs);
        out.epochs.assign(e.begin(), e.begin() + static_cast<std::ptrdiff_t>(keep));
        return out;
    }
    const auto a = static_cast<std::size_t>(first - e.begin());
    const auto b = static_cast<std::size_t>(e.rend() - std::find_if(e.rbegin(), e.rend(), is_sleep)) - 1;
    const std::size_t lo = a > kWakeMarginEpochs ? a - kWakeMarginEpochs : 0;
    const std::size_t hi = std::min(e.size(), b + 1 + kWakeMarginEpochs);
    out.epochs.assign(e.begin() + static_cast<std::ptrdiff_t>(lo), e.begin() + static_cast<std::ptrdiff_t>(hi));
    return out;
}

void standardize_into(std::span<const float> samples, std::span<float> out) {
    if (out.size() != samples.size()) throw Error(ErrorCode::ShapeMismatch, "standardize: size mismatch");
    if (samples.empty()) throw Error(ErrorCode::DegenerateEpoch, "standardize: empty epoch");
    double mean = 0.0;
    for (float v : samples) mean += v;
    mean /= static_cast<double>(samples.size());
    double var = 0.0;
    for (float v : samples) var += (v - mean) * (v - mean);
    var /= static_cast<double>(samples.size());
    const double sd = std::sqrt(var);
    if (!(sd > 0.0) || !std::isfinite(sd)) {
        throw Error(ErrorCode::DegenerateEpoch, "epoch has zero variance (flat signal)");
    }
    for (std::size_t i = 0; i < samples.size(); ++i) {
        out[i] = static_cast<float>((samples[i] - mean) / sd);
    }
}

std::vector<float> standardize(std::span<const float> samples) {
    std::vector<float> out(samples.size());
    standardize_into(samples, out);
    return out;
}

ClassDistribution class_distribution(const Dataset& dataset) {
    if (dataset.empty()) throw Error(ErrorCode::EmptyDataset, "class distribution of an empty store");
    ClassDistribution d;
    for (const auto& e : dataset) ++d.counts[stage_index(e.stage)];
    d.total = dataset.size();
    for (std::size_t c = 0; c < kNumStages; ++c) {
        d.fractions[c] = static_cast<double>(d.counts[c]) / static_cast<double>(d.total);
    }
    return d;
}

std::vector<RawAnnotation> parse_hypnogram_csv(std::string_view text) {
    std::vector<RawAnnotation> out;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty() || line.front() == '#') continue;

        const auto c1 = line.find(',');
        const auto c2 = c1 == std::string_view::npos ? c1 : line.find(',', c1 + 1);
        if (c2 == std::string_view::npos) {
            throw Error(ErrorCode::InvalidArgument,
                        "hypnogram line " + std::to_string(line_no) + ": expected onset,duration,label");
        }
        auto number = [&](std::string_view s) {
            double v = 0.0;
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) {
                throw Error(ErrorCode::InvalidArgument,
                            "hypnogram line " + std::to_string(line_no) + ": bad number '" + std::string(s) + "'");
            }
            return v;
        };
        RawAnnotation a;
        a.onset = number(line.substr(0, c1));
        a.duration = number(line.substr(c1 + 1, c2 - c1 - 1));
        a.text = std::string(line.substr(c2 + 1));
        out.push_back(std::move(a));
    }
    return out;
}

namespace {

void write_records(std::ostream& out, const Dataset& dataset) {
    for (const auto& e : dataset) {
        if (e.samples.size() != kEpochSamples) {
            throw Error(ErrorCode::ShapeMismatch, "epoch does not hold 3000 samples");
        }
        detail::put<std::uint16_t>(out, e.subject_id);
        detail::put<std::uint8_t>(out, e.night);
        detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(e.stage));
        detail::put<std::uint32_t>(out, e.epoch_index);
        out.write(reinterpret_cast<const char*>(e.samples.data()),
                  static_cast<std::streamsize>(kEpochSamples * sizeof(float)));
    }
}

void write_header(std::ostream& out, std::uint32_t count) {
    out.write(kStoreMagic, 4);
    detail::put<std::uint16_t>(out, kStoreVersion);
    detail::put<std::uint16_t>(out, static_cast<std::uint16_t>(kSampleRateHz));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(kEpochSamples));
    detail::put<std::uint32_t>(out, count);
}

std::uint32_t read_header(std::istream& in) {
    char magic[4];
    detail::get_bytes(in, magic, 4, ErrorCode::StoreTruncated, "store magic");
    if (!std::equal(magic, magic + 4, kStoreMagic)) {
        throw Error(ErrorCode::StoreBadMagic, "not an epoch store (bad magic)");
    }
    const auto version = detail::get<std::uint16_t>(in, ErrorCode::StoreTruncated, "store version");
    if (version != kStoreVersion) {
        throw Error(ErrorCode::StoreVersion, "unsupported epoch store version " + std::to_string(version));
    }
    const auto rate = detail::get<std::uint16_t>(in, ErrorCode::StoreTruncated, "sample rate");
    const auto len = detail::get<std::uint32_t>(in, ErrorCode::StoreTruncated, "epoch length");
    if (rate != kSampleRateHz || len != kEpochSamples) {
        throw Error(ErrorCode::StoreVersion, "store holds " + std::to_string(len) + "-sample epochs at " +
                                                 std::to_string(rate) + " Hz; expected 3000 at 100 Hz");
    }
    return detail::get<std::uint32_t>(in, ErrorCode::StoreTruncated, "epoch count");
}

}  // namespace

void write_store(const Dataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    write_header(out, static_cast<std::uint32_t>(dataset.size()));
    write_records(out, dataset);
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

void append_store(const Dataset& dataset, const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        write_store(dataset, path);
        return;
    }
    std::uint32_t count = 0;
    {
        std::ifstream in(path, std::ios::binary);
        count = read_header(in);
    }
    const auto expected = kStoreHeaderBytes + static_cast<std::uintmax_t>(count) * kStoreRecordBytes;
    if (std::filesystem::file_size(path) != expected) {
        throw Error(ErrorCode::StoreTruncated, "store size does not match its epoch count");
    }
    std::fstream io(path, std::ios::binary | std::ios::in | std::ios::out);
    io.seekp(12);
    detail::put<std::uint32_t>(io, count + static_cast<std::uint32_t>(dataset.size()));
    io.seekp(0, std::ios::end);
    write_records(io, dataset);
    if (!io) throw Error(ErrorCode::IoError, "append failed for " + path.string());
}

Dataset read_store(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    const auto count = read_header(in);

    Dataset out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        LabeledEpoch e;
        e.subject_id = detail::get<std::uint16_t>(in, ErrorCode::StoreTruncated, "epoch subject");
        e.night = detail::get<std::uint8_t>(in, ErrorCode::StoreTruncated, "epoch night");
        const auto stage = detail::get<std::uint8_t>(in, ErrorCode::StoreTruncated, "epoch stage");
        if (stage >= kNumStages) throw Error(ErrorCode::StoreBadMagic, "invalid stage byte in store");
        e.stage = static_cast<SleepStage>(stage);
        e.epoch_index = detail::get<std::uint32_t>(in, ErrorCode::StoreTruncated, "epoch index");
        e.samples.resize(kEpochSamples);
        detail::get_bytes(in, reinterpret_cast<char*>(e.samples.data()), kEpochSamples * sizeof(float),
                          ErrorCode::StoreTruncated, "epoch samples");
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace sleepnet
