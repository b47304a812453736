#pragma once

// Epoch extraction and the labeled-epoch store.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sleepnet/edf.hpp"

namespace sleepnet {

inline constexpr std::size_t kEpochSamples = 3000;
inline constexpr int kSampleRateHz = 100;
inline constexpr double kEpochSeconds = 30.0;
inline constexpr std::size_t kNumStages = 5;
/// Wake epochs (30 minutes) kept on either side of the sleep period.
inline constexpr std::size_t kWakeMarginEpochs = 60;

enum class SleepStage : std::uint8_t { Wake = 0, N1 = 1, N2 = 2, N3 = 3, REM = 4 };

const char* stage_name(SleepStage stage);
inline std::size_t stage_index(SleepStage s) { return static_cast<std::size_t>(s); }
SleepStage stage_from_index(std::size_t index);

struct LabeledEpoch {
    std::vector<float> samples;  // kEpochSamples values, microvolts
    SleepStage stage = SleepStage::Wake;
    std::uint16_t subject_id = 0;
    std::uint8_t night = 0;
    std::uint32_t epoch_index = 0;
};

struct SubjectNight {
    std::uint16_t subject_id = 0;
    std::uint8_t night = 0;
    std::vector<LabeledEpoch> epochs;
};

using Dataset = std::vector<LabeledEpoch>;

/// Hypnogram text to stage; std::nullopt means the epoch is discarded
/// (movement / unknown). Throws on any string outside the known vocabulary.
std::optional<SleepStage> map_label(std::string_view text);

/// Cuts a 100 Hz recording into labeled 30 s epochs following its hypnogram.
SubjectNight segment_epochs(std::span<const double> samples,
                            const std::vector<RawAnnotation>& annotations,
                            std::uint16_t subject_id = 0, std::uint8_t night = 0);

/// Drops stage annotations reaching beyond `signal_seconds`, truncating the
/// last overlapping one to whole epochs. Used on archives whose hypnograms
/// extend past the end of the recording.
std::vector<RawAnnotation> clip_annotations(const std::vector<RawAnnotation>& annotations,
                                            double signal_seconds);

/// Keeps at most 30 minutes of Wake before the first and after the last sleep
/// epoch. Wake inside the sleep period is never touched.
SubjectNight trim_wake(const SubjectNight& night);

/// Zero-mean, unit-variance (population) scaling of one epoch.
std::vector<float> standardize(std::span<const float> samples);
/// Same, written into `out` (which may alias nothing in `samples`).
void standardize_into(std::span<const float> samples, std::span<float> out);

struct ClassDistribution {
    std::array<std::size_t, kNumStages> counts{};
    std::array<double, kNumStages> fractions{};
    std::size_t total = 0;
};

ClassDistribution class_distribution(const Dataset& dataset);

/// "onset_sec,duration_sec,label" per line; blank lines and '#' comments ignored.
std::vector<RawAnnotation> parse_hypnogram_csv(std::string_view text);

void write_store(const Dataset& dataset, const std::filesystem::path& path);
Dataset read_store(const std::filesystem::path& path);
/// Appends epochs to an existing store, creating it if missing.
void append_store(const Dataset& dataset, const std::filesystem::path& path);

}  // namespace sleepnet
