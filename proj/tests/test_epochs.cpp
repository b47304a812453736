#include <doctest.h>

#include <cmath>
#include <fstream>
#include <functional>
#include <random>

#include "oracles.hpp"
#include "sleepnet/epochs.hpp"
#include "sleepnet/error.hpp"
#include "support.hpp"

using namespace sleepnet;
using testing::code_of;

namespace {

std::vector<double> ramp(std::size_t windows) {
    std::vector<double> s(windows * kEpochSamples);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = std::sin(0.01 * static_cast<double>(i)) * 40.0 + double(i % 7);
    return s;
}

SubjectNight night_of(std::initializer_list<std::pair<SleepStage, std::size_t>> runs) {
    SubjectNight n;
    std::uint32_t idx = 0;
    for (const auto& [stage, count] : runs) {
        for (std::size_t i = 0; i < count; ++i) {
            LabeledEpoch e;
            e.stage = stage;
            e.epoch_index = idx++;
            n.epochs.push_back(e);
        }
    }
    return n;
}

}  // namespace

TEST_CASE("label mapping") {
    CHECK(map_label("Sleep stage W") == SleepStage::Wake);
    CHECK(map_label("Sleep stage 1") == SleepStage::N1);
    CHECK(map_label("Sleep stage 2") == SleepStage::N2);
    CHECK(map_label("Sleep stage 3") == SleepStage::N3);
    CHECK(map_label("Sleep stage 4") == SleepStage::N3);
    CHECK(map_label("Sleep stage R") == SleepStage::REM);
    CHECK_FALSE(map_label("Movement time").has_value());
    CHECK_FALSE(map_label("Sleep stage ?").has_value());
    CHECK(code_of([] { map_label("Sleep stage X"); }) == ErrorCode::UnrecognizedLabel);
}

TEST_CASE("uniform annotation tiles consecutive epochs") {
    const auto s = ramp(3);
    const auto n = segment_epochs(s, {{0, 90, "Sleep stage 2"}}, 4, 2);
    REQUIRE(n.epochs.size() == 3);
    for (std::uint32_t i = 0; i < 3; ++i) {
        CHECK(n.epochs[i].stage == SleepStage::N2);
        CHECK(n.epochs[i].epoch_index == i);
        CHECK(n.epochs[i].subject_id == 4);
        CHECK(n.epochs[i].night == 2);
        CHECK(n.epochs[i].samples.size() == kEpochSamples);
        CHECK(n.epochs[i].samples[5] == static_cast<float>(s[i * kEpochSamples + 5]));
    }
}

TEST_CASE("movement windows are dropped") {
    const auto n = segment_epochs(ramp(2), {{0, 30, "Sleep stage W"}, {30, 30, "Movement time"}});
    REQUIRE(n.epochs.size() == 1);
    CHECK(n.epochs[0].stage == SleepStage::Wake);
}

TEST_CASE("segmentation errors") {
    CHECK(code_of([] { segment_epochs(ramp(3), {{0, 45, "Sleep stage W"}}); }) == ErrorCode::AnnotationMisaligned);
    CHECK(code_of([] { segment_epochs(ramp(3), {{15, 30, "Sleep stage W"}}); }) == ErrorCode::AnnotationMisaligned);
    CHECK(code_of([] { segment_epochs(ramp(2), {{0, 90, "Sleep stage W"}}); }) == ErrorCode::AnnotationPastEnd);
    CHECK(code_of([] { segment_epochs(ramp(2), {{0, 60, "Sleep stage W"}, {30, 30, "Sleep stage 1"}}); }) ==
          ErrorCode::AnnotationMisaligned);
    CHECK(code_of([] { segment_epochs(ramp(1), {{0, 30, "Lights off"}}); }) == ErrorCode::UnrecognizedLabel);
    auto bad = ramp(1);
    bad[10] = std::nan("");
    CHECK(code_of([&] { segment_epochs(bad, {{0, 30, "Sleep stage W"}}); }) == ErrorCode::NonFinite);
}

TEST_CASE("clipping hypnograms that run past the signal") {
    const auto clipped = clip_annotations({{0, 60, "Sleep stage W"}, {60, 120, "Sleep stage 2"}, {180, 300, "Sleep stage W"}},
                                          100.0);
    REQUIRE(clipped.size() == 2);
    CHECK(clipped[1].duration == 30.0);
    CHECK(segment_epochs(ramp(3), clipped).epochs.size() == 3);
}

TEST_CASE("wake trimming") {
    using S = SleepStage;
    CHECK(trim_wake(night_of({{S::Wake, 200}, {S::N2, 100}, {S::Wake, 200}})).epochs.size() == 220);
    CHECK(trim_wake(night_of({{S::Wake, 10}, {S::N2, 50}, {S::Wake, 10}})).epochs.size() == 70);
    const auto pure = trim_wake(night_of({{S::Wake, 100}}));
    REQUIRE(pure.epochs.size() == 60);
    CHECK(pure.epochs.front().epoch_index == 0);
    CHECK(pure.epochs.back().epoch_index == 59);

    const auto t = trim_wake(night_of({{S::Wake, 100}, {S::N1, 5}, {S::Wake, 300}, {S::REM, 5}, {S::Wake, 70}}));
    CHECK(t.epochs.size() == 60 + 5 + 300 + 5 + 60);
    CHECK(t.epochs.front().epoch_index == 40);
    CHECK(trim_wake(SubjectNight{}).epochs.empty());
}

TEST_CASE("trim keeps every sleep epoch and intra-sleep wake") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        SubjectNight n;
        const std::size_t len = rng() % 400;
        for (std::uint32_t i = 0; i < len; ++i) {
            LabeledEpoch e;
            e.stage = rng() % 3 == 0 ? stage_from_index(rng() % 5) : SleepStage::Wake;
            e.epoch_index = i;
            n.epochs.push_back(e);
        }
        const auto t = trim_wake(n);
        std::size_t sleep_in = 0, sleep_out = 0;
        for (const auto& e : n.epochs) sleep_in += e.stage != SleepStage::Wake;
        for (const auto& e : t.epochs) sleep_out += e.stage != SleepStage::Wake;
        CHECK(sleep_in == sleep_out);
        for (std::size_t i = 1; i < t.epochs.size(); ++i) {
            CHECK(t.epochs[i].epoch_index == t.epochs[i - 1].epoch_index + 1);
        }
    }
}

TEST_CASE("pipeline matches the brute-force filter") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t windows = 0;
        const auto ann = oracle::random_night(rng, windows);
        std::vector<double> signal(windows * kEpochSamples);
        for (std::size_t i = 0; i < signal.size(); ++i) signal[i] = static_cast<double>(i % 1000);
        const auto got = trim_wake(segment_epochs(signal, ann, 1, 1));
        const auto want = oracle::preprocess(ann);
        REQUIRE(got.epochs.size() == want.size());
        for (std::size_t i = 0; i < want.size(); ++i) {
            CHECK(stage_index(got.epochs[i].stage) == static_cast<std::size_t>(want[i].stage));
            CHECK(got.epochs[i].epoch_index == want[i].index);
            CHECK(got.epochs[i].samples[0] == static_cast<float>((want[i].index * kEpochSamples) % 1000));
        }
    }
}

TEST_CASE("standardize toy vector") {
    const std::vector<float> x = {1.0f, 2.0f, 3.0f};
    const auto z = standardize(x);
    const double s = std::sqrt(2.0 / 3.0);
    CHECK(z[0] == doctest::Approx(-1.0 / s).epsilon(1e-6));
    CHECK(z[1] == doctest::Approx(0.0));
    CHECK(z[2] == doctest::Approx(1.224745).epsilon(1e-6));
}

TEST_CASE("standardize moments on random epochs") {
    std::mt19937_64 rng(9);
    std::normal_distribution<float> g(0.0f, 1.0f);
    std::uniform_real_distribution<float> shift(-500.0f, 500.0f), scale(0.01f, 200.0f);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<float> x(kEpochSamples);
        const float m = shift(rng), s = scale(rng);
        for (auto& v : x) v = m + s * g(rng);
        const auto z = standardize(x);
        double mean = 0.0, var = 0.0;
        for (float v : z) mean += v;
        mean /= z.size();
        for (float v : z) var += (v - mean) * (v - mean);
        var /= z.size();
        CHECK(std::abs(mean) <= 1e-6);
        CHECK(std::abs(std::sqrt(var) - 1.0) <= 1e-5);
        const auto z2 = standardize(z);
        for (std::size_t i = 0; i < z.size(); i += 97) CHECK(z2[i] == doctest::Approx(z[i]).epsilon(1e-5));
    }
    CHECK(code_of([] { standardize(std::vector<float>(kEpochSamples, 5.0f)); }) == ErrorCode::DegenerateEpoch);
}

TEST_CASE("class distribution") {
    Dataset d(10);
    auto a = class_distribution(d);
    CHECK(a.counts[0] == 10);
    CHECK(a.fractions[0] == 1.0);
    Dataset m(4);
    m[0].stage = m[1].stage = m[2].stage = SleepStage::N1;
    m[3].stage = SleepStage::REM;
    auto b = class_distribution(m);
    CHECK(b.fractions[1] == 0.75);
    CHECK(b.fractions[4] == 0.25);
    CHECK(b.total == 4);
    CHECK(code_of([] { class_distribution({}); }) == ErrorCode::EmptyDataset);
}

TEST_CASE("hypnogram CSV sidecar") {
    const auto a = parse_hypnogram_csv("# onset,duration,label\n0,60,Sleep stage W\n\n60,30,Sleep stage 2\r\n");
    REQUIRE(a.size() == 2);
    CHECK(a[0] == RawAnnotation{0, 60, "Sleep stage W"});
    CHECK(a[1] == RawAnnotation{60, 30, "Sleep stage 2"});
    CHECK_THROWS_AS(parse_hypnogram_csv("zero,30,Sleep stage W\n"), Error);
}

TEST_CASE("store round-trip and corruption") {
    const auto dir = testing::scratch_dir("store");
    auto data = testing::separable_dataset(5, 77, 12);
    data[3].night = 2;
    data[4].epoch_index = 123456;
    write_store(data, dir / "a.slpe");
    const auto back = read_store(dir / "a.slpe");
    REQUIRE(back.size() == data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        CHECK(back[i].samples == data[i].samples);
        CHECK(back[i].stage == data[i].stage);
        CHECK(back[i].subject_id == 12);
        CHECK(back[i].night == data[i].night);
        CHECK(back[i].epoch_index == data[i].epoch_index);
    }
    append_store(data, dir / "a.slpe");
    CHECK(read_store(dir / "a.slpe").size() == 10);

    std::string bytes;
    {
        std::ifstream in(dir / "a.slpe", std::ios::binary);
        bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    auto dump = [&](const std::string& b) {
        std::ofstream out(dir / "b.slpe", std::ios::binary);
        out << b;
    };
    std::string bad = bytes;
    bad.replace(0, 4, "XXXX");
    dump(bad);
    CHECK(code_of([&] { read_store(dir / "b.slpe"); }) == ErrorCode::StoreBadMagic);
    dump(bytes.substr(0, bytes.size() - 100));
    CHECK(code_of([&] { read_store(dir / "b.slpe"); }) == ErrorCode::StoreTruncated);
    bad = bytes;
    bad[4] = 9;
    dump(bad);
    CHECK(code_of([&] { read_store(dir / "b.slpe"); }) == ErrorCode::StoreVersion);
}
