#include "sleepnet/metrics.hpp"

#include <charconv>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "sleepnet/error.hpp"

namespace sleepnet {

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t n = 0;
    for (const auto& row : counts) {
        for (auto v : row) n += v;
    }
    return n;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t actual) const {
    std::uint64_t n = 0;
    for (auto v : counts[actual]) n += v;
    return n;
}

std::uint64_t ConfusionMatrix::column_sum(std::size_t predicted) const {
    std::uint64_t n = 0;
    for (const auto& row : counts) n += row[predicted];
    return n;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
    for (std::size_t a = 0; a < kNumStages; ++a) {
        for (std::size_t p = 0; p < kNumStages; ++p) counts[a][p] += other.counts[a][p];
    }
    return *this;
}

ConfusionMatrix confusion(std::span<const SleepStage> predictions, std::span<const SleepStage> labels) {
    if (predictions.size() != labels.size()) {
        throw Error(ErrorCode::LengthMismatch, "confusion: " + std::to_string(predictions.size()) +
                                                   " predictions for " + std::to_string(labels.size()) + " labels");
    }
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < labels.size(); ++i) ++cm.counts[stage_index(labels[i])][stage_index(predictions[i])];
    return cm;
}

MetricsReport class_metrics(const ConfusionMatrix& cm) {
    MetricsReport r;
    r.total = cm.total();
    if (r.total == 0) throw Error(ErrorCode::EmptyMatrix, "metrics of an empty confusion matrix");

    std::uint64_t trace = 0;
    for (std::size_t c = 0; c < kNumStages; ++c) {
        const double tp = static_cast<double>(cm.counts[c][c]);
        const double fp = static_cast<double>(cm.column_sum(c)) - tp;
        const double fn = static_cast<double>(cm.row_sum(c)) - tp;
        trace += cm.counts[c][c];

        auto ratio = [&](double num, double den) {
            if (den == 0.0) {
                r.undefined[c] = true;
                return 0.0;
            }
            return num / den;
        };
        r.precision[c] = ratio(tp, tp + fp);
        r.recall[c] = ratio(tp, tp + fn);
        r.f1[c] = ratio(2.0 * tp, 2.0 * tp + fn + fp);

        const double row = static_cast<double>(cm.row_sum(c));
        for (std::size_t p = 0; p < kNumStages; ++p) {
            r.normalized[c][p] = row > 0.0 ? static_cast<double>(cm.counts[c][p]) / row : 0.0;
        }
    }
    r.accuracy = static_cast<double>(trace) / static_cast<double>(r.total);
    return r;
}

std::string render_report_text(const MetricsReport& r) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << "Confusion matrix (row-normalized)\n";
    os << std::left << std::setw(15) << "Actual/Predict";
    for (std::size_t c = 0; c < kNumStages; ++c) os << std::right << std::setw(7) << stage_name(stage_from_index(c));
    os << '\n';
    for (std::size_t a = 0; a < kNumStages; ++a) {
        os << std::left << std::setw(15) << stage_name(stage_from_index(a));
        for (std::size_t p = 0; p < kNumStages; ++p) os << std::right << std::setw(7) << r.normalized[a][p];
        os << '\n';
    }

    os << "\nPer-class performance\n";
    os << std::left << std::setw(15) << "";
    for (std::size_t c = 0; c < kNumStages; ++c) os << std::right << std::setw(7) << stage_name(stage_from_index(c));
    os << '\n';
    auto row = [&](const char* name, const std::array<double, kNumStages>& v) {
        os << std::left << std::setw(15) << name;
        for (double x : v) os << std::right << std::setw(7) << x;
        os << '\n';
    };
    row("Precision", r.precision);
    row("Recall", r.recall);
    row("F1-Score", r.f1);
    os << std::left << std::setw(15) << "Accuracy" << std::setprecision(3) << r.accuracy << '\n';

    bool any = false;
    for (std::size_t c = 0; c < kNumStages; ++c) {
        if (!r.undefined[c]) continue;
        os << (any ? ", " : "note: zero denominator reported as 0 for ") << stage_name(stage_from_index(c));
        any = true;
    }
    if (any) os << '\n';
    return os.str();
}

std::string render_report_csv(const MetricsReport& r) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "metric";
    for (std::size_t c = 0; c < kNumStages; ++c) os << ',' << stage_name(stage_from_index(c));
    os << '\n';
    auto row = [&](const std::string& name, const std::array<double, kNumStages>& v) {
        os << name;
        for (double x : v) os << ',' << x;
        os << '\n';
    };
    row("precision", r.precision);
    row("recall", r.recall);
    row("f1", r.f1);
    os << "accuracy," << r.accuracy << '\n';
    for (std::size_t a = 0; a < kNumStages; ++a) {
        row(std::string("confusion_") + stage_name(stage_from_index(a)), r.normalized[a]);
    }
    return os.str();
}

MetricsReport parse_report_csv(std::string_view csv) {
    MetricsReport r;
    std::istringstream in{std::string(csv)};
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        auto num = [&](std::size_t i) {
            if (i >= cells.size()) throw Error(ErrorCode::InvalidArgument, "metrics CSV row too short: " + line);
            double v = 0.0;
            const auto& s = cells[i];
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc() || p != s.data() + s.size()) {
                throw Error(ErrorCode::InvalidArgument, "bad number in metrics CSV: '" + s + "'");
            }
            return v;
        };
        auto fill = [&](std::array<double, kNumStages>& dst) {
            for (std::size_t c = 0; c < kNumStages; ++c) dst[c] = num(c + 1);
        };
        const std::string& key = cells.at(0);
        if (key == "precision") {
            fill(r.precision);
        } else if (key == "recall") {
            fill(r.recall);
        } else if (key == "f1") {
            fill(r.f1);
        } else if (key == "accuracy") {
            r.accuracy = num(1);
        } else if (key.rfind("confusion_", 0) == 0) {
            bool matched = false;
            for (std::size_t a = 0; a < kNumStages; ++a) {
                if (key == std::string("confusion_") + stage_name(stage_from_index(a))) {
                    fill(r.normalized[a]);
                    matched = true;
                }
            }
            if (!matched) throw Error(ErrorCode::InvalidArgument, "unknown confusion row '" + key + "'");
        } else {
            throw Error(ErrorCode::InvalidArgument, "unknown metrics CSV row '" + key + "'");
        }
    }
    return r;
}

std::string render_comparison(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
    std::size_t width = 10;
    for (const auto& [name, _] : rows) width = std::max(width, name.size() + 2);
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << std::left << std::setw(static_cast<int>(width)) << "Model";
    for (std::size_t c = 0; c < kNumStages; ++c) os << std::right << std::setw(7) << stage_name(stage_from_index(c));
    os << std::right << std::setw(10) << "Accuracy" << '\n';
    for (const auto& [name, r] : rows) {
        os << std::left << std::setw(static_cast<int>(width)) << name;
        for (double x : r.f1) os << std::right << std::setw(7) << x;
        os << std::right << std::setw(10) << r.accuracy << '\n';
    }
    return os.str();
}

}  // namespace sleepnet
