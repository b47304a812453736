#include <doctest.h>

#include <random>
#include <sstream>

#include "sleepnet/edf.hpp"
#include "sleepnet/error.hpp"
#include "support.hpp"

using namespace sleepnet;
using testing::code_of;

namespace {

std::string tal(std::initializer_list<std::string> parts) {
    std::string s;
    for (const auto& p : parts) s += p;
    return s;
}

const std::string kSep = "\x14";
const std::string kDur = "\x15";
const std::string kEnd = std::string(1, '\0');

EdfFixtureSignal eeg_signal(int spr, long n_records, std::uint64_t seed) {
    EdfFixtureSignal s;
    s.label = "EEG Fpz-Cz";
    s.samples_per_record = spr;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> d(s.digital_min, s.digital_max);
    for (long i = 0; i < spr * n_records; ++i) s.digital.push_back(static_cast<std::int16_t>(d(rng)));
    return s;
}

// Independent splitter: every TAL ends in 0x14 0x00; inside, the first field
// is the time stamp and every further non-empty 0x14-delimited field is text.
std::size_t count_text_fields(const std::string& bytes) {
    std::size_t n = 0;
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        if (bytes[pos] == '\0') {
            ++pos;
            continue;
        }
        const auto end = bytes.find('\0', pos);
        const std::string one = bytes.substr(pos, end - pos);
        std::vector<std::string> fields;
        std::string cur;
        for (char ch : one) {
            if (ch == '\x14') {
                fields.push_back(cur);
                cur.clear();
            } else {
                cur += ch;
            }
        }
        for (std::size_t i = 1; i < fields.size(); ++i) n += fields[i].empty() ? 0 : 1;
        pos = end + 1;
    }
    return n;
}

}  // namespace

TEST_CASE("one signal, two records of ten samples round-trips") {
    auto sig = eeg_signal(10, 2, 7);
    const auto bytes = write_edf_fixture({sig}, 2, 1.0);
    auto reader = EdfReader::from_bytes(bytes);
    CHECK(reader.header().signals.size() == 1);
    CHECK(reader.header().n_records == 2);
    CHECK(reader.read_digital(0) == sig.digital);
}

TEST_CASE("version field '0' padded with spaces is accepted") {
    auto sig = eeg_signal(4, 1, 1);
    const auto bytes = write_edf_fixture({sig}, 1, 1.0);
    CHECK(bytes.substr(0, 8) == "0       ");
    CHECK_NOTHROW(EdfReader::from_bytes(bytes));

    std::string bad = bytes;
    bad[0] = '1';
    CHECK(code_of([&] { EdfReader::from_bytes(bad); }) == ErrorCode::EdfUnsupported);
}

TEST_CASE("header declaring two signals with one signal block is truncated") {
    auto sig = eeg_signal(4, 1, 1);
    std::string bytes = write_edf_fixture({sig}, 1, 1.0).substr(0, 512);
    bytes.replace(252, 4, "2   ");
    CHECK(code_of([&] { EdfReader::from_bytes(bytes); }) == ErrorCode::EdfTruncatedHeader);
    CHECK(code_of([&] { EdfReader::from_bytes(bytes.substr(0, 100)); }) == ErrorCode::EdfTruncatedHeader);
}

TEST_CASE("non-numeric header field and size mismatch are rejected") {
    auto sig = eeg_signal(4, 2, 1);
    const auto bytes = write_edf_fixture({sig}, 2, 1.0);
    std::string bad = bytes;
    bad.replace(236, 8, "two     ");
    CHECK(code_of([&] { EdfReader::from_bytes(bad); }) == ErrorCode::EdfBadField);
    CHECK(code_of([&] { EdfReader::from_bytes(bytes.substr(0, bytes.size() - 3)); }) == ErrorCode::EdfSizeMismatch);
}

TEST_CASE("discontinuous EDF+D is rejected") {
    auto sig = eeg_signal(4, 1, 1);
    CHECK_NOTHROW(EdfReader::from_bytes(write_edf_fixture({sig}, 1, 1.0, "EDF+C")));
    CHECK(code_of([&] { EdfReader::from_bytes(write_edf_fixture({sig}, 1, 1.0, "EDF+D")); }) ==
          ErrorCode::EdfUnsupported);
}

TEST_CASE("physical mapping endpoints and midpoint") {
    EdfFixtureSignal s;
    s.label = "EEG Fpz-Cz";
    s.samples_per_record = 3;
    s.digital = {-2048, 0, 2047};
    auto reader = EdfReader::from_bytes(write_edf_fixture({s}, 1, 1.0));
    const auto phys = reader.read_signal("EEG Fpz-Cz");
    REQUIRE(phys.size() == 3);
    CHECK(phys[0] == doctest::Approx(-200.0).epsilon(1e-12));
    const double oracle = (0.0 + 2048.0) * 400.0 / 4095.0 - 200.0;
    CHECK(phys[1] == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(phys[1] == doctest::Approx(0.04884).epsilon(1e-4));
    CHECK(phys[2] == doctest::Approx(200.0).epsilon(1e-12));
}

TEST_CASE("physical mapping preserves ordering") {
    auto sig = eeg_signal(200, 3, 11);
    auto reader = EdfReader::from_bytes(write_edf_fixture({sig}, 3, 2.0));
    const auto phys = reader.read_signal("EEG Fpz-Cz");
    for (std::size_t i = 0; i < phys.size(); ++i) {
        for (std::size_t j = i + 1; j < std::min(phys.size(), i + 20); ++j) {
            if (sig.digital[i] < sig.digital[j]) CHECK(phys[i] < phys[j]);
        }
    }
}

TEST_CASE("channel lookup is exact and detects duplicates") {
    auto a = eeg_signal(4, 1, 1);
    auto b = eeg_signal(4, 1, 2);
    b.label = "EEG Pz-Oz";
    auto reader = EdfReader::from_bytes(write_edf_fixture({a}, 1, 1.0));
    CHECK(code_of([&] { reader.read_signal("EEG Pz-Oz"); }) == ErrorCode::EdfUnknownChannel);
    CHECK(code_of([&] { reader.read_signal("eeg fpz-cz"); }) == ErrorCode::EdfUnknownChannel);

    auto two = EdfReader::from_bytes(write_edf_fixture({a, b}, 1, 1.0));
    CHECK(two.read_signal("EEG Pz-Oz").size() == 4);
    auto dup = EdfReader::from_bytes(write_edf_fixture({a, a}, 1, 1.0));
    CHECK(code_of([&] { dup.read_signal("EEG Fpz-Cz"); }) == ErrorCode::EdfDuplicateChannel);
}

TEST_CASE("multi-signal round-trip with interleaved records") {
    auto a = eeg_signal(100, 5, 3);
    auto b = eeg_signal(1, 5, 4);
    b.label = "Event marker";
    auto reader = EdfReader::from_bytes(write_edf_fixture({a, b}, 5, 1.0));
    CHECK(reader.read_digital(0) == a.digital);
    CHECK(reader.read_digital(1) == b.digital);
    const auto rec = reader.read_record(2);
    REQUIRE(rec.size() == 101);
    CHECK(rec[0] == a.digital[200]);
    CHECK(rec[100] == b.digital[2]);
}

TEST_CASE("TAL with onset, duration and text") {
    const auto out = parse_tal(tal({"+0", kDur, "30", kSep, "Sleep stage W", kSep, kEnd}));
    REQUIRE(out.size() == 1);
    CHECK(out[0] == RawAnnotation{0.0, 30.0, "Sleep stage W"});
}

TEST_CASE("TAL duration written as a 0x14 field") {
    const auto out = parse_tal(tal({"+0", kSep, "30", kSep, "Sleep stage W", kSep, kEnd}));
    REQUIRE(out.size() == 1);
    CHECK(out[0] == RawAnnotation{0.0, 30.0, "Sleep stage W"});
}

TEST_CASE("TAL without duration") {
    const auto out = parse_tal(tal({"+120", kSep, "Sleep stage 2", kSep, kEnd}));
    REQUIRE(out.size() == 1);
    CHECK(out[0] == RawAnnotation{120.0, 0.0, "Sleep stage 2"});
}

TEST_CASE("TAL errors") {
    CHECK(code_of([] { parse_tal(tal({"+0", kSep, "Sleep stage W", kSep})); }) == ErrorCode::TalMissingTerminator);
    CHECK(code_of([] { parse_tal(tal({"+abc", kSep, "Sleep stage W", kSep, kEnd})); }) == ErrorCode::TalBadNumber);
    CHECK(code_of([] { parse_tal(tal({"-5", kSep, "Sleep stage W", kSep, kEnd})); }) == ErrorCode::TalBadNumber);
}

TEST_CASE("time-keeping TAL, several texts and padding") {
    const std::string bytes = tal({"+0", kSep, kSep, kEnd, "+30", kDur, "60", kSep, "Sleep stage 1", kSep,
                                   "Sleep stage 2", kSep, kEnd, kEnd, kEnd});
    const auto out = parse_tal(bytes);
    REQUIRE(out.size() == 2);
    CHECK(out[0] == RawAnnotation{30.0, 60.0, "Sleep stage 1"});
    CHECK(out[1] == RawAnnotation{30.0, 60.0, "Sleep stage 2"});
    CHECK(out.size() == count_text_fields(bytes));
}

TEST_CASE("random TAL lists agree with a brute-force splitter") {
    std::mt19937_64 rng(42);
    const char* labels[] = {"Sleep stage W", "Sleep stage 1", "Sleep stage 2", "Sleep stage 3",
                            "Sleep stage 4", "Sleep stage R", "Movement time", "Sleep stage ?"};
    for (int trial = 0; trial < 200; ++trial) {
        std::string bytes = tal({"+0", kSep, kSep, kEnd});
        std::vector<RawAnnotation> expected;
        const int n = static_cast<int>(rng() % 6);
        double onset = 0.0;
        for (int i = 0; i < n; ++i) {
            const double dur = 30.0 * static_cast<double>(1 + rng() % 10);
            const int texts = 1 + static_cast<int>(rng() % 2);
            const bool with_duration = rng() % 3 != 0;
            bytes += "+" + std::to_string(static_cast<long>(onset));
            if (with_duration) bytes += kDur + std::to_string(static_cast<long>(dur));
            bytes += kSep;
            for (int t = 0; t < texts; ++t) {
                const std::string label = labels[rng() % 8];
                bytes += label + kSep;
                expected.push_back({onset, with_duration ? dur : 0.0, label});
            }
            bytes += kEnd;
            onset += dur;
        }
        bytes.append(rng() % 5, '\0');
        const auto out = parse_tal(bytes);
        CHECK(out.size() == count_text_fields(bytes));
        CHECK(out == expected);
    }
}

TEST_CASE("annotations read from an EDF+ annotation signal") {
    EdfFixtureSignal ann;
    ann.label = "EDF Annotations";
    ann.samples_per_record = 40;
    ann.annotation_records = {
        tal({"+0", kSep, kSep, kEnd, "+0", kDur, "30", kSep, "Sleep stage W", kSep, kEnd}),
        tal({"+30", kSep, kSep, kEnd, "+30", kDur, "60", kSep, "Sleep stage 2", kSep, kEnd}),
    };
    auto reader = EdfReader::from_bytes(write_edf_fixture({ann}, 2, 30.0, "EDF+C"));
    const auto out = reader.read_annotations();
    REQUIRE(out.size() == 2);
    CHECK(out[0] == RawAnnotation{0.0, 30.0, "Sleep stage W"});
    CHECK(out[1] == RawAnnotation{30.0, 60.0, "Sleep stage 2"});
}

TEST_CASE("random fixtures round-trip bit-exactly") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const int spr = 1 + static_cast<int>(rng() % 300);
        const long n = 1 + static_cast<long>(rng() % 8);
        auto sig = eeg_signal(spr, n, rng());
        sig.digital_min = -32768;
        sig.digital_max = 32767;
        std::uniform_int_distribution<int> d(-32768, 32767);
        for (auto& v : sig.digital) v = static_cast<std::int16_t>(d(rng));
        auto reader = EdfReader::from_bytes(write_edf_fixture({sig}, n, 1.0));
        CHECK(reader.read_digital(0) == sig.digital);
    }
}

TEST_CASE("zero record duration only for annotation-only files") {
    EdfFixtureSignal ann;
    ann.label = "EDF Annotations";
    ann.samples_per_record = 20;
    ann.annotation_records = {tal({"+0", kSep, kSep, kEnd, "+0", kDur, "30", kSep, "Sleep stage W", kSep, kEnd})};
    auto reader = EdfReader::from_bytes(write_edf_fixture({ann}, 1, 0.0, "EDF+C"));
    CHECK(reader.read_annotations() == std::vector<RawAnnotation>{{0.0, 30.0, "Sleep stage W"}});
    const auto sig = eeg_signal(10, 1, 3);
    CHECK(code_of([&] { EdfReader::from_bytes(write_edf_fixture({sig}, 1, 0.0)); }) == ErrorCode::EdfBadField);
    CHECK(code_of([&] { EdfReader::from_bytes(write_edf_fixture({ann, sig}, 1, 0.0, "EDF+C")); }) ==
          ErrorCode::EdfBadField);
}
