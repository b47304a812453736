#include "sleepnet/stream.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <istream>
#include <thread>

#include "sleepnet/error.hpp"

namespace sleepnet {

EpochClassifier::EpochClassifier(ModelParams<float> params) : params_(std::move(params)) {
    params_.arch.validate();
}

EpochClassifier::EpochClassifier(const QuantModel& model) : params_(dequantize_model(model)), quantized_(true) {}

StageDecision EpochClassifier::classify(std::span<const float> raw_epoch, std::uint64_t epoch_index) const {
    const auto start = std::chrono::steady_clock::now();
    StageDecision d;
    d.epoch_index = epoch_index;
    try {
        const auto input = standardize(raw_epoch);
        const auto probs = forward(params_, input);
        std::copy(probs.begin(), probs.end(), d.probs.begin());
        d.stage = stage_from_index(argmax(std::span<const float>(probs)));
    } catch (const Error& e) {
        if (e.code() != ErrorCode::DegenerateEpoch) throw;
        d.probs.fill(1.0f / kNumStages);
    }
    d.latency_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return d;
}

std::vector<StageDecision> classify_batch(const EpochClassifier& classifier, const Dataset& epochs) {
    std::vector<StageDecision> out;
    out.reserve(epochs.size());
    for (std::size_t i = 0; i < epochs.size(); ++i) out.push_back(classifier.classify(epochs[i].samples, i));
    return out;
}

StreamClassifier::StreamClassifier(const EpochClassifier& classifier, std::uint64_t first_counter)
    : classifier_(classifier), buffer_(classifier.arch().input_length), expected_counter_(first_counter) {}

std::optional<StageDecision> StreamClassifier::push(const StreamFrame& frame) {
    if (frame.counter != expected_counter_) {
        throw Error(ErrorCode::StreamGap, "sample counter jumped from " + std::to_string(expected_counter_) + " to " +
                                              std::to_string(frame.counter));
    }
    ++expected_counter_;
    buffer_[fill_++] = frame.value;
    if (fill_ < buffer_.size()) return std::nullopt;
    fill_ = 0;
    return classifier_.classify(buffer_, next_epoch_++);
}

namespace {

// Reads one sample; false on clean end of input, throws on a partial sample.
bool read_sample(std::istream& in, const SampleFormat& fmt, float& out) {
    const std::size_t width = fmt.int16 ? 2 : 4;
    char raw[4];
    in.read(raw, static_cast<std::streamsize>(width));
    const auto got = static_cast<std::size_t>(in.gcount());
    if (got == 0) return false;
    if (got != width) throw Error(ErrorCode::IoError, "input ended inside a sample");
    if (fmt.int16) {
        std::int16_t d;
        std::memcpy(&d, raw, 2);
        const double gain = (fmt.physical_max - fmt.physical_min) / double(fmt.digital_max - fmt.digital_min);
        out = static_cast<float>(fmt.physical_min + (double(d) - fmt.digital_min) * gain);
    } else {
        std::memcpy(&out, raw, 4);
    }
    return true;
}

}  // namespace

std::uint64_t run_stream(std::istream& in, const EpochClassifier& classifier, const DecisionSink& sink,
                         const StreamOptions& options) {
    if (options.queue_epochs == 0) throw Error(ErrorCode::InvalidArgument, "stream queue bound must be positive");
    if (options.format.int16 && options.format.digital_max <= options.format.digital_min) {
        throw Error(ErrorCode::InvalidArgument, "digital max must exceed digital min");
    }
    const std::size_t n = classifier.arch().input_length;
    BoundedQueue<std::vector<float>> queue(options.queue_epochs);
    std::exception_ptr producer_error;

    std::thread producer([&] {
        try {
            std::vector<float> window(n);
            std::size_t fill = 0;
            float v = 0.0f;
            while (read_sample(in, options.format, v)) {
                window[fill++] = v;
                if (fill < n) continue;
                if (options.block_when_full) {
                    queue.push_blocking(window);
                } else {
                    queue.push_or_throw(window);
                }
                fill = 0;
            }
        } catch (...) {
            producer_error = std::current_exception();
        }
        queue.close();
    });

    std::uint64_t emitted = 0;
    std::exception_ptr consumer_error;
    try {
        while (auto window = queue.pop()) {
            sink(classifier.classify(*window, emitted++));
        }
    } catch (...) {
        consumer_error = std::current_exception();
        queue.close();
    }
    producer.join();
    if (consumer_error) std::rethrow_exception(consumer_error);
    if (producer_error) std::rethrow_exception(producer_error);
    return emitted;
}

std::string format_decision(const StageDecision& d) {
    std::string line = std::to_string(d.epoch_index);
    line += '\t';
    line += d.stage ? stage_name(*d.stage) : "unscorable";
    char buf[32];
    for (float p : d.probs) {
        std::snprintf(buf, sizeof buf, "\t%.6f", static_cast<double>(p));
        line += buf;
    }
    return line;
}

}  // namespace sleepnet
