#pragma once

// Real-time classification of a 100 Hz sample feed in non-overlapping 30 s
// epochs.

#include <array>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "sleepnet/epochs.hpp"
#include "sleepnet/net.hpp"
#include "sleepnet/quant.hpp"

namespace sleepnet {

struct StreamFrame {
    std::uint64_t counter = 0;
    float value = 0.0f;
};

struct StageDecision {
    std::uint64_t epoch_index = 0;
    std::optional<SleepStage> stage;  // empty when the epoch was unscorable (flat)
    std::array<float, kNumStages> probs{};
    double latency_s = 0.0;

    bool scorable() const { return stage.has_value(); }
};

/// Standardizes a raw epoch and runs either a 32-bit or a quantized model.
class EpochClassifier {
public:
    explicit EpochClassifier(ModelParams<float> params);
    explicit EpochClassifier(const QuantModel& model);

    const ArchConfig& arch() const { return params_.arch; }
    bool quantized() const { return quantized_; }

    /// Decision for one raw (unstandardized) epoch.
    StageDecision classify(std::span<const float> raw_epoch, std::uint64_t epoch_index) const;

private:
    ModelParams<float> params_;
    bool quantized_ = false;
};

/// Batch path: one decision per stored epoch, in order.
std::vector<StageDecision> classify_batch(const EpochClassifier& classifier, const Dataset& epochs);

class StreamClassifier {
public:
    explicit StreamClassifier(const EpochClassifier& classifier, std::uint64_t first_counter = 0);

    /// Buffers one sample; returns a decision when it completes an epoch.
    /// Throws StreamGap if the counter skips or repeats.
    std::optional<StageDecision> push(const StreamFrame& frame);

    std::size_t buffered() const { return fill_; }
    std::uint64_t epochs_emitted() const { return next_epoch_; }

private:
    const EpochClassifier& classifier_;
    std::vector<float> buffer_;
    std::size_t fill_ = 0;
    std::uint64_t expected_counter_;
    std::uint64_t next_epoch_ = 0;
};

/// Single-producer single-consumer FIFO with a hard capacity.
template <typename T>
class BoundedQueue {
public:
    explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

    /// Fails loudly (StreamOverflow) when full instead of dropping.
    void push_or_throw(T value) {
        std::lock_guard lock(mutex_);
        if (items_.size() >= capacity_) {
            throw Error(ErrorCode::StreamOverflow, "stream buffer exceeded its bound of " +
                                                       std::to_string(capacity_) + " epochs; sink is stalled");
        }
        items_.push_back(std::move(value));
        ready_.notify_one();
    }

    /// Waits for room instead of failing (used for replays of recorded data).
    void push_blocking(T value) {
        std::unique_lock lock(mutex_);
        room_.wait(lock, [&] { return items_.size() < capacity_ || closed_; });
        items_.push_back(std::move(value));
        ready_.notify_one();
    }

    /// Blocks until an item or close(); empty optional means closed and drained.
    std::optional<T> pop() {
        std::unique_lock lock(mutex_);
        ready_.wait(lock, [&] { return !items_.empty() || closed_; });
        if (items_.empty()) return std::nullopt;
        T v = std::move(items_.front());
        items_.pop_front();
        room_.notify_one();
        return v;
    }

    void close() {
        std::lock_guard lock(mutex_);
        closed_ = true;
        ready_.notify_all();
        room_.notify_all();
    }

    std::size_t size() const {
        std::lock_guard lock(mutex_);
        return items_.size();
    }

private:
    std::size_t capacity_;
    mutable std::mutex mutex_;
    std::condition_variable ready_;
    std::condition_variable room_;
    std::deque<T> items_;
    bool closed_ = false;
};

struct SampleFormat {
    bool int16 = false;  // raw digital samples instead of float32
    int digital_min = -32768;
    int digital_max = 32767;
    double physical_min = -32768.0;
    double physical_max = 32767.0;
};

struct StreamOptions {
    SampleFormat format;
    std::size_t queue_epochs = 1024;
    /// Producer waits for the consumer instead of failing on overflow.
    bool block_when_full = false;
};

using DecisionSink = std::function<void(const StageDecision&)>;

/// Reads little-endian samples from `in` on an ingestion thread, classifies
/// completed epochs on the calling thread and hands decisions to `sink` in
/// epoch order. Returns the number of decisions emitted.
std::uint64_t run_stream(std::istream& in, const EpochClassifier& classifier, const DecisionSink& sink,
                         const StreamOptions& options = {});

/// "epoch_index<TAB>stage<TAB>p0 ... p4" with six decimals.
std::string format_decision(const StageDecision& decision);

}  // namespace sleepnet
