#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sleepnet/epochs.hpp"

namespace sleepnet {

/// Rows are the actual stage, columns the predicted stage.
struct ConfusionMatrix {
    std::array<std::array<std::uint64_t, kNumStages>, kNumStages> counts{};

    std::uint64_t total() const;
    std::uint64_t row_sum(std::size_t actual) const;
    std::uint64_t column_sum(std::size_t predicted) const;
    ConfusionMatrix& operator+=(const ConfusionMatrix& other);
    bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion(std::span<const SleepStage> predictions, std::span<const SleepStage> labels);

struct MetricsReport {
    std::array<double, kNumStages> precision{};
    std::array<double, kNumStages> recall{};
    std::array<double, kNumStages> f1{};
    double accuracy = 0.0;
    /// Row-normalized confusion matrix (each non-empty row sums to 1).
    std::array<std::array<double, kNumStages>, kNumStages> normalized{};
    /// Classes where some metric had a zero denominator and was reported as 0.
    std::array<bool, kNumStages> undefined{};
    std::uint64_t total = 0;
};

/// PR = TP/(TP+FP), RE = TP/(TP+FN), F1 = 2TP/(2TP+FN+FP) per class and
/// accuracy = trace/total.
MetricsReport class_metrics(const ConfusionMatrix& cm);

/// Aligned plain-text confusion table (2-decimal row-normalized cells) and
/// per-class metric table with an accuracy footer.
std::string render_report_text(const MetricsReport& report);

/// Full-precision CSV: the metric rows, the accuracy row and the normalized
/// confusion rows.
std::string render_report_csv(const MetricsReport& report);

/// Inverse of render_report_csv for the metric and confusion values.
MetricsReport parse_report_csv(std::string_view csv);

/// One row per named report with per-class F1 and accuracy.
std::string render_comparison(const std::vector<std::pair<std::string, MetricsReport>>& rows);

}  // namespace sleepnet
