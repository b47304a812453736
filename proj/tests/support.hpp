#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>

#include "sleepnet/epochs.hpp"
#include "sleepnet/error.hpp"

namespace testing {

inline constexpr double kPi = 3.14159265358979323846;

/// Epochs whose class is carried by the frequency of a noisy sinusoid.
inline sleepnet::Dataset separable_dataset(std::size_t n, std::uint64_t seed, std::uint16_t subject = 0,
                                           double noise = 0.3) {
    static constexpr double kFreq[sleepnet::kNumStages] = {1.0, 3.0, 6.0, 10.0, 15.0};
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
    std::uniform_real_distribution<double> amp(20.0, 80.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    sleepnet::Dataset data;
    data.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        sleepnet::LabeledEpoch e;
        const std::size_t c = i % sleepnet::kNumStages;
        e.stage = sleepnet::stage_from_index(c);
        e.subject_id = subject;
        e.night = 1;
        e.epoch_index = static_cast<std::uint32_t>(i);
        e.samples.resize(sleepnet::kEpochSamples);
        const double ph = phase(rng), a = amp(rng);
        for (std::size_t t = 0; t < sleepnet::kEpochSamples; ++t) {
            const double s = std::sin(2.0 * kPi * kFreq[c] * static_cast<double>(t) / sleepnet::kSampleRateHz + ph);
            e.samples[t] = static_cast<float>(a * (s + noise * gauss(rng)));
        }
        data.push_back(std::move(e));
    }
    return data;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("sleepnet_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

/// Code of the sleepnet::Error thrown by `fn`; std::nullopt when nothing is thrown.
inline std::optional<sleepnet::ErrorCode> code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const sleepnet::Error& e) {
        return e.code();
    }
    return std::nullopt;
}

}  // namespace testing
