#include "sleepnet/edf.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sleepnet/error.hpp"

namespace sleepnet {

namespace {

constexpr std::size_t kFixedHeader = 256;
constexpr std::size_t kPerSignalHeader = 256;
constexpr char kTalSeparator = 0x14;
constexpr char kTalDuration = 0x15;

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\0')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\0')) s.remove_suffix(1);
    return s;
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    if (text.empty()) return false;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc() && ptr == text.data() + text.size();
}

template <typename T>
T numeric_field(std::string_view raw, const char* name) {
    T value{};
    if (!parse_number(trim(raw), value)) {
        throw Error(ErrorCode::EdfBadField,
                    std::string("non-numeric EDF header field ") + name + ": '" +
                        std::string(trim(raw)) + "'");
    }
    return value;
}

/// Consumes `count` consecutive fixed-width fields of `width` bytes each.
std::vector<std::string_view> fields(std::string_view block, std::size_t& pos, int count,
                                     std::size_t width) {
    std::vector<std::string_view> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        out.push_back(block.substr(pos, width));
        pos += width;
    }
    return out;
}

double parse_tal_number(std::string_view text, const char* what) {
    double value = 0.0;
    if (!parse_number(text, value) || !std::isfinite(value)) {
        throw Error(ErrorCode::TalBadNumber,
                    std::string("unparseable TAL ") + what + ": '" + std::string(text) + "'");
    }
    return value;
}

}  // namespace

std::size_t EdfHeader::record_samples() const {
    std::size_t total = 0;
    for (const auto& s : signals) total += static_cast<std::size_t>(s.samples_per_record);
    return total;
}

std::size_t EdfHeader::signal_index(std::string_view label) const {
    std::size_t found = signals.size();
    for (std::size_t i = 0; i < signals.size(); ++i) {
        if (signals[i].label != label) continue;
        if (found != signals.size()) {
            throw Error(ErrorCode::EdfDuplicateChannel,
                        "channel label '" + std::string(label) + "' appears more than once");
        }
        found = i;
    }
    if (found == signals.size()) {
        throw Error(ErrorCode::EdfUnknownChannel, "no channel labelled '" + std::string(label) + "'");
    }
    return found;
}

EdfHeader parse_edf_header(std::istream& in) {
    std::string fixed(kFixedHeader, '\0');
    if (!in.read(fixed.data(), kFixedHeader)) {
        throw Error(ErrorCode::EdfTruncatedHeader, "stream shorter than the 256-byte EDF header");
    }

    EdfHeader h;
    std::string_view v(fixed);
    h.version = std::string(v.substr(0, 8));
    h.patient = std::string(trim(v.substr(8, 80)));
    h.recording = std::string(trim(v.substr(88, 80)));
    h.start_date = std::string(trim(v.substr(168, 8)));
    h.start_time = std::string(trim(v.substr(176, 8)));
    h.header_bytes = numeric_field<int>(v.substr(184, 8), "header bytes");
    h.reserved = std::string(trim(v.substr(192, 44)));
    h.n_records = numeric_field<long>(v.substr(236, 8), "number of records");
    h.record_duration = numeric_field<double>(v.substr(244, 8), "record duration");
    h.signal_count = numeric_field<int>(v.substr(252, 4), "signal count");

    if (trim(h.version) != "0") {
        throw Error(ErrorCode::EdfUnsupported, "unsupported EDF version field '" + h.version + "'");
    }
    if (h.signal_count < 1) {
        throw Error(ErrorCode::EdfBadField, "EDF signal count must be positive");
    }
    if (h.reserved.rfind("EDF+D", 0) == 0) {
        throw Error(ErrorCode::EdfUnsupported, "discontinuous EDF+D recordings are not supported");
    }
    if (!(h.record_duration >= 0.0) || !std::isfinite(h.record_duration)) {
        throw Error(ErrorCode::EdfBadField, "record duration must be non-negative");
    }

    const std::size_t ns = static_cast<std::size_t>(h.signal_count);
    std::string block(kPerSignalHeader * ns, '\0');
    if (!in.read(block.data(), static_cast<std::streamsize>(block.size()))) {
        throw Error(ErrorCode::EdfTruncatedHeader,
                    "stream ends inside the per-signal header block (" + std::to_string(ns) +
                        " signals declared)");
    }

    if (h.header_bytes != static_cast<int>(kFixedHeader + kPerSignalHeader * h.signal_count)) {
        throw Error(ErrorCode::EdfBadField,
                    "header byte count " + std::to_string(h.header_bytes) +
                        " does not match 256 + 256 x " + std::to_string(h.signal_count));
    }

    std::size_t pos = 0;
    const int n = h.signal_count;
    auto labels = fields(block, pos, n, 16);
    auto transducers = fields(block, pos, n, 80);
    auto dims = fields(block, pos, n, 8);
    auto pmin = fields(block, pos, n, 8);
    auto pmax = fields(block, pos, n, 8);
    auto dmin = fields(block, pos, n, 8);
    auto dmax = fields(block, pos, n, 8);
    auto prefilter = fields(block, pos, n, 80);
    auto samples = fields(block, pos, n, 8);

    h.signals.resize(ns);
    for (std::size_t i = 0; i < ns; ++i) {
        auto& s = h.signals[i];
        s.label = std::string(trim(labels[i]));
        s.transducer = std::string(trim(transducers[i]));
        s.physical_dimension = std::string(trim(dims[i]));
        s.physical_min = numeric_field<double>(pmin[i], "physical minimum");
        s.physical_max = numeric_field<double>(pmax[i], "physical maximum");
        s.digital_min = numeric_field<int>(dmin[i], "digital minimum");
        s.digital_max = numeric_field<int>(dmax[i], "digital maximum");
        s.prefiltering = std::string(trim(prefilter[i]));
        s.samples_per_record = numeric_field<int>(samples[i], "samples per record");
        if (s.digital_min >= s.digital_max) {
            throw Error(ErrorCode::EdfBadField, "signal '" + s.label + "': digital min >= digital max");
        }
        if (s.digital_min < -32768 || s.digital_max > 32767) {
            throw Error(ErrorCode::EdfBadField, "signal '" + s.label + "': digital range exceeds 16 bits");
        }
        if (s.samples_per_record < 1) {
            throw Error(ErrorCode::EdfBadField, "signal '" + s.label + "': samples per record < 1");
        }
        // zero-length records are only allowed in annotation-only files
        if (h.record_duration == 0.0 && !s.is_annotation()) {
            throw Error(ErrorCode::EdfBadField, "record duration must be positive for signal '" + s.label + "'");
        }
    }
    return h;
}

EdfReader::EdfReader(std::unique_ptr<std::istream> stream) : stream_(std::move(stream)) {
    if (!stream_ || !*stream_) throw Error(ErrorCode::IoError, "unreadable EDF stream");
    header_ = parse_edf_header(*stream_);
    data_offset_ = header_.header_bytes;

    stream_->seekg(0, std::ios::end);
    const std::streamoff total = stream_->tellg();
    if (total < 0) throw Error(ErrorCode::IoError, "EDF stream is not seekable");
    const std::streamoff record_bytes = static_cast<std::streamoff>(header_.record_samples()) * 2;
    const std::streamoff data_bytes = total - data_offset_;

    if (header_.n_records == -1) {
        if (data_bytes % record_bytes != 0) {
            throw Error(ErrorCode::EdfSizeMismatch, "data section is not a whole number of records");
        }
        header_.n_records = static_cast<long>(data_bytes / record_bytes);
    } else if (header_.n_records < 0 || data_bytes != header_.n_records * record_bytes) {
        throw Error(ErrorCode::EdfSizeMismatch,
                    "header declares " + std::to_string(header_.n_records) + " records of " +
                        std::to_string(record_bytes) + " bytes but the data section holds " +
                        std::to_string(data_bytes) + " bytes");
    }
}

EdfReader EdfReader::open(const std::filesystem::path& path) {
    auto file = std::make_unique<std::ifstream>(path, std::ios::binary);
    if (!*file) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    return EdfReader(std::move(file));
}

EdfReader EdfReader::from_bytes(std::string bytes) {
    return EdfReader(std::make_unique<std::istringstream>(std::move(bytes), std::ios::binary));
}

std::vector<std::int16_t> EdfReader::read_record(long record) {
    if (record < 0 || record >= header_.n_records) {
        throw Error(ErrorCode::InvalidArgument, "record index out of range");
    }
    const std::size_t n = header_.record_samples();
    std::vector<std::int16_t> out(n);
    stream_->clear();
    stream_->seekg(data_offset_ + static_cast<std::streamoff>(record) * static_cast<std::streamoff>(n) * 2);
    std::string raw(n * 2, '\0');
    if (!stream_->read(raw.data(), static_cast<std::streamsize>(raw.size()))) {
        throw Error(ErrorCode::EdfSizeMismatch, "stream ended inside data record " + std::to_string(record));
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto lo = static_cast<std::uint8_t>(raw[2 * i]);
        const auto hi = static_cast<std::uint8_t>(raw[2 * i + 1]);
        out[i] = static_cast<std::int16_t>(static_cast<std::uint16_t>(lo | (hi << 8)));
    }
    return out;
}

std::vector<std::int16_t> EdfReader::read_digital(std::size_t signal) {
    if (signal >= header_.signals.size()) throw Error(ErrorCode::InvalidArgument, "signal index out of range");
    std::size_t offset = 0;
    for (std::size_t i = 0; i < signal; ++i) offset += header_.signals[i].samples_per_record;
    const auto spr = static_cast<std::size_t>(header_.signals[signal].samples_per_record);

    std::vector<std::int16_t> out;
    out.reserve(spr * static_cast<std::size_t>(header_.n_records));
    for (long r = 0; r < header_.n_records; ++r) {
        auto record = read_record(r);
        out.insert(out.end(), record.begin() + offset, record.begin() + offset + spr);
    }
    return out;
}

std::vector<double> EdfReader::read_signal(std::string_view label) {
    const std::size_t idx = header_.signal_index(label);
    const auto& info = header_.signals[idx];
    auto digital = read_digital(idx);
    std::vector<double> out(digital.size());
    std::transform(digital.begin(), digital.end(), out.begin(),
                   [&](std::int16_t d) { return info.to_physical(d); });
    return out;
}

std::vector<RawAnnotation> EdfReader::read_annotations() {
    std::vector<RawAnnotation> out;
    for (long r = 0; r < header_.n_records; ++r) {
        auto record = read_record(r);
        std::size_t offset = 0;
        for (const auto& s : header_.signals) {
            const auto spr = static_cast<std::size_t>(s.samples_per_record);
            if (s.is_annotation()) {
                std::string bytes(spr * 2, '\0');
                std::memcpy(bytes.data(), record.data() + offset, bytes.size());
                auto tal = parse_tal(bytes);
                out.insert(out.end(), tal.begin(), tal.end());
            }
            offset += spr;
        }
    }
    return out;
}

std::vector<RawAnnotation> parse_tal(std::string_view bytes) {
    std::vector<RawAnnotation> out;
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        if (bytes[pos] == '\0') {  // padding between / after TALs
            ++pos;
            continue;
        }
        const std::size_t end = bytes.find('\0', pos);
        if (end == std::string_view::npos) {
            throw Error(ErrorCode::TalMissingTerminator, "TAL is not terminated by a 0x00 byte");
        }
        std::string_view tal = bytes.substr(pos, end - pos);
        pos = end + 1;

        std::vector<std::string_view> parts;
        std::size_t start = 0;
        for (std::size_t i = 0; i <= tal.size(); ++i) {
            if (i == tal.size() || tal[i] == kTalSeparator) {
                parts.push_back(tal.substr(start, i - start));
                start = i + 1;
            }
        }

        std::string_view head = parts.front();
        if (head.empty() || (head.front() != '+' && head.front() != '-')) {
            throw Error(ErrorCode::TalBadNumber, "TAL onset must start with '+' or '-'");
        }
        std::string_view onset_text = head;
        std::string_view duration_text;
        if (auto d = head.find(kTalDuration); d != std::string_view::npos) {
            onset_text = head.substr(0, d);
            duration_text = head.substr(d + 1);
        }

        std::vector<std::string_view> texts;
        for (std::size_t i = 1; i < parts.size(); ++i) {
            if (!parts[i].empty()) texts.push_back(parts[i]);
        }
        // Some converters write the duration as its own 0x14 field instead of
        // after 0x15; accept it when it is numeric and a label follows.
        if (duration_text.empty() && texts.size() >= 2) {
            double probe = 0.0;
            if (parse_number(texts.front(), probe)) {
                duration_text = texts.front();
                texts.erase(texts.begin());
            }
        }

        const double onset = parse_tal_number(onset_text, "onset");
        const double duration = duration_text.empty() ? 0.0 : parse_tal_number(duration_text, "duration");
        if (texts.empty()) continue;  // time-keeping TAL
        if (onset < 0.0) {
            throw Error(ErrorCode::TalBadNumber, "negative onset outside the time-keeping TAL");
        }
        if (duration < 0.0) {
            throw Error(ErrorCode::TalBadNumber, "negative annotation duration");
        }
        for (auto text : texts) out.push_back({onset, duration, std::string(text)});
    }
    return out;
}

namespace {

void put_field(std::string& out, std::string_view value, std::size_t width) {
    std::string f(value.substr(0, width));
    f.resize(width, ' ');
    out += f;
}

std::string format_number(double v) {
    std::ostringstream os;
    os.precision(8);
    os << v;
    return os.str();
}

}  // namespace

std::string write_edf_fixture(const std::vector<EdfFixtureSignal>& signals, long n_records,
                              double record_duration, std::string_view reserved) {
    const std::size_t ns = signals.size();
    std::string out;
    put_field(out, "0", 8);
    put_field(out, "X X X X", 80);
    put_field(out, "Startdate X X X X", 80);
    put_field(out, "01.01.89", 8);
    put_field(out, "00.00.00", 8);
    put_field(out, std::to_string(256 + 256 * ns), 8);
    put_field(out, reserved, 44);
    put_field(out, std::to_string(n_records), 8);
    put_field(out, format_number(record_duration), 8);
    put_field(out, std::to_string(ns), 4);

    for (const auto& s : signals) put_field(out, s.label, 16);
    for (std::size_t i = 0; i < ns; ++i) put_field(out, "", 80);
    for (const auto& s : signals) put_field(out, s.label == "EDF Annotations" ? "" : "uV", 8);
    for (const auto& s : signals) put_field(out, format_number(s.physical_min), 8);
    for (const auto& s : signals) put_field(out, format_number(s.physical_max), 8);
    for (const auto& s : signals) put_field(out, std::to_string(s.digital_min), 8);
    for (const auto& s : signals) put_field(out, std::to_string(s.digital_max), 8);
    for (std::size_t i = 0; i < ns; ++i) put_field(out, "", 80);
    for (const auto& s : signals) put_field(out, std::to_string(s.samples_per_record), 8);
    for (std::size_t i = 0; i < ns; ++i) put_field(out, "", 32);

    for (long r = 0; r < n_records; ++r) {
        for (const auto& s : signals) {
            const auto spr = static_cast<std::size_t>(s.samples_per_record);
            if (s.label == "EDF Annotations") {
                std::string bytes = r < static_cast<long>(s.annotation_records.size())
                                        ? s.annotation_records[static_cast<std::size_t>(r)]
                                        : std::string();
                bytes.resize(spr * 2, '\0');
                out += bytes;
            } else {
                for (std::size_t i = 0; i < spr; ++i) {
                    const auto d = static_cast<std::uint16_t>(s.digital.at(static_cast<std::size_t>(r) * spr + i));
                    out.push_back(static_cast<char>(d & 0xff));
                    out.push_back(static_cast<char>(d >> 8));
                }
            }
        }
    }
    return out;
}

}  // namespace sleepnet
