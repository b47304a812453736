#pragma once

// Reader for the EDF/EDF+ subset used by overnight polysomnography archives:
// 16-bit samples, ASCII headers, continuous (EDF+C) recordings.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace sleepnet {

struct EdfSignalInfo {
    std::string label;
    std::string transducer;
    std::string physical_dimension;
    double physical_min = 0.0;
    double physical_max = 0.0;
    int digital_min = 0;
    int digital_max = 0;
    std::string prefiltering;
    int samples_per_record = 0;

    bool is_annotation() const { return label == "EDF Annotations"; }

    /// Affine digital -> physical conversion.
    double to_physical(int digital) const {
        return (static_cast<double>(digital) - digital_min) * (physical_max - physical_min) /
                   static_cast<double>(digital_max - digital_min) +
               physical_min;
    }
};

struct EdfHeader {
    std::string version;
    std::string patient;
    std::string recording;
    std::string start_date;
    std::string start_time;
    int header_bytes = 0;
    std::string reserved;
    long n_records = 0;
    double record_duration = 0.0;
    int signal_count = 0;
    std::vector<EdfSignalInfo> signals;

    bool is_edf_plus() const { return reserved.rfind("EDF+", 0) == 0; }
    /// Sum over signals of samples_per_record, i.e. samples in one data record.
    std::size_t record_samples() const;
    /// Index of the signal whose trimmed label equals `label`; throws when absent or ambiguous.
    std::size_t signal_index(std::string_view label) const;
    double sample_rate(std::size_t signal) const {
        return signals.at(signal).samples_per_record / record_duration;
    }
};

/// Time-stamped annotation decoded from an EDF+ annotation list.
struct RawAnnotation {
    double onset = 0.0;
    double duration = 0.0;
    std::string text;

    bool operator==(const RawAnnotation&) const = default;
};

/// Parses the 256-byte fixed header plus the per-signal block. The stream is
/// left positioned at the first data record.
EdfHeader parse_edf_header(std::istream& in);

/// A parsed EDF file. Data records are read on demand one at a time, so memory
/// use is bounded by a single record no matter how long the recording is.
class EdfReader {
public:
    explicit EdfReader(std::unique_ptr<std::istream> stream);

    static EdfReader open(const std::filesystem::path& path);
    static EdfReader from_bytes(std::string bytes);

    const EdfHeader& header() const { return header_; }

    /// Raw little-endian digital samples of one record, all signals concatenated
    /// in header order.
    std::vector<std::int16_t> read_record(long record);

    /// Digital samples of one signal across all records.
    std::vector<std::int16_t> read_digital(std::size_t signal);

    /// Physical-unit samples for the signal with the given (trimmed) label.
    std::vector<double> read_signal(std::string_view label);

    /// All annotations from every "EDF Annotations" signal, in file order.
    std::vector<RawAnnotation> read_annotations();

private:
    std::unique_ptr<std::istream> stream_;
    EdfHeader header_;
    std::streamoff data_offset_ = 0;
};

/// Decodes the annotation-signal bytes of one data record (one or more TALs
/// followed by zero padding).
std::vector<RawAnnotation> parse_tal(std::string_view bytes);

/// Minimal EDF writer for building test fixtures and synthetic recordings.
struct EdfFixtureSignal {
    std::string label;
    double physical_min = -200.0;
    double physical_max = 200.0;
    int digital_min = -2048;
    int digital_max = 2047;
    int samples_per_record = 0;
    /// Either digital samples (n_records * samples_per_record) or raw annotation
    /// bytes (2 * samples_per_record per record) for "EDF Annotations".
    std::vector<std::int16_t> digital;
    std::vector<std::string> annotation_records;
};

std::string write_edf_fixture(const std::vector<EdfFixtureSignal>& signals, long n_records,
                              double record_duration, std::string_view reserved = "");

}  // namespace sleepnet
