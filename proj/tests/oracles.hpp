#pragma once

// Straightforward reference implementations used to check the library.

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sleepnet/edf.hpp"
#include "sleepnet/epochs.hpp"
#include "sleepnet/metrics.hpp"

namespace oracle {

struct Window {
    int stage;  // 0..4
    std::uint32_t index;
};

inline const std::vector<std::string>& vocabulary() {
    static const std::vector<std::string> v = {"Sleep stage W", "Sleep stage 1", "Sleep stage 2", "Sleep stage 3",
                                               "Sleep stage 4", "Sleep stage R", "Movement time", "Sleep stage ?"};
    return v;
}

// -1 for discard.
inline int label_code(const std::string& text) {
    if (text == "Sleep stage W") return 0;
    if (text == "Sleep stage 1") return 1;
    if (text == "Sleep stage 2") return 2;
    if (text == "Sleep stage 3" || text == "Sleep stage 4") return 3;
    if (text == "Sleep stage R") return 4;
    return -1;
}

/// Expand to one label per 30 s window, drop discards, then keep sleep plus
/// up to 60 Wake windows on either side; a night with no sleep keeps its
/// first 60 windows.
inline std::vector<Window> preprocess(const std::vector<sleepnet::RawAnnotation>& annotations) {
    std::vector<std::pair<std::uint32_t, int>> per_window;
    for (const auto& a : annotations) {
        const auto first = static_cast<std::uint32_t>(a.onset / 30.0);
        const auto n = static_cast<std::uint32_t>(a.duration / 30.0);
        for (std::uint32_t k = 0; k < n; ++k) per_window.push_back({first + k, label_code(a.text)});
    }
    std::vector<Window> kept;
    for (const auto& [index, code] : per_window) {
        if (code >= 0) kept.push_back({code, index});
    }
    // windows arrive in time order because the generator tiles forward
    int first_sleep = -1, last_sleep = -1;
    for (int i = 0; i < static_cast<int>(kept.size()); ++i) {
        if (kept[static_cast<std::size_t>(i)].stage != 0) {
            if (first_sleep < 0) first_sleep = i;
            last_sleep = i;
        }
    }
    std::vector<Window> out;
    for (int i = 0; i < static_cast<int>(kept.size()); ++i) {
        bool keep;
        if (first_sleep < 0) {
            keep = i < 60;
        } else {
            keep = i >= first_sleep - 60 && i <= last_sleep + 60;
        }
        if (keep) out.push_back(kept[static_cast<std::size_t>(i)]);
    }
    return out;
}

/// Random tiling of a night: runs of labels with 30 s multiples, long wake
/// stretches likely at both ends.
inline std::vector<sleepnet::RawAnnotation> random_night(std::mt19937_64& rng, std::size_t& total_windows) {
    std::vector<sleepnet::RawAnnotation> out;
    double onset = 0.0;
    const auto& vocab = vocabulary();
    auto add = [&](const std::string& text, std::uint32_t windows) {
        if (windows == 0) return;
        out.push_back({onset, 30.0 * windows, text});
        onset += 30.0 * windows;
    };
    add("Sleep stage W", static_cast<std::uint32_t>(rng() % 150));
    const int runs = static_cast<int>(rng() % 25);
    for (int r = 0; r < runs; ++r) {
        const auto& text = vocab[rng() % vocab.size()];
        add(text, 1 + static_cast<std::uint32_t>(rng() % 12));
    }
    add("Sleep stage W", static_cast<std::uint32_t>(rng() % 150));
    if (out.empty()) add("Sleep stage W", 1);
    total_windows = static_cast<std::size_t>(onset / 30.0);
    return out;
}

struct Counts {
    std::uint64_t tp = 0, fp = 0, fn = 0;
};

inline Counts recount(const sleepnet::ConfusionMatrix& cm, std::size_t c) {
    Counts k;
    for (std::size_t a = 0; a < sleepnet::kNumStages; ++a) {
        for (std::size_t p = 0; p < sleepnet::kNumStages; ++p) {
            const auto n = cm.counts[a][p];
            if (a == c && p == c) k.tp += n;
            if (a != c && p == c) k.fp += n;
            if (a == c && p != c) k.fn += n;
        }
    }
    return k;
}

/// Textbook valid cross-correlation, stride s, weights [K][Cin][Cout].
inline std::vector<double> conv1d(const std::vector<double>& in, std::size_t length, std::size_t cin,
                                  const std::vector<double>& w, std::size_t k, std::size_t cout,
                                  const std::vector<double>& bias, std::size_t stride) {
    const std::size_t lout = (length - k) / stride + 1;
    std::vector<double> out(lout * cout);
    for (std::size_t t = 0; t < lout; ++t) {
        for (std::size_t o = 0; o < cout; ++o) {
            double acc = bias[o];
            for (std::size_t j = 0; j < k; ++j) {
                for (std::size_t i = 0; i < cin; ++i) acc += in[(t * stride + j) * cin + i] * w[(j * cin + i) * cout + o];
            }
            out[t * cout + o] = acc;
        }
    }
    return out;
}

}  // namespace oracle
