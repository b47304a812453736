#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "sleepnet/epochs.hpp"
#include "sleepnet/net.hpp"

namespace sleepnet {

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t batch_size = 64;
    std::size_t max_epochs = 20;
    std::uint64_t seed = 0;
    double validation_fraction = 0.10;
    /// fit() stops once validation accuracy reaches this (0 disables).
    double target_accuracy = 0.0;

    void validate() const;
};

struct AdamState {
    ModelParams<double> m;
    ModelParams<double> v;
    std::uint64_t step = 0;

    explicit AdamState(const ArchConfig& arch)
        : m(zeros_like<double>(arch)), v(zeros_like<double>(arch)) {}
};

/// -log p[label], with p floored at 1e-12.
double cross_entropy(std::span<const double> probs, SleepStage label);

/// Adds d(cross_entropy)/d(params) for one cached forward pass into `grads`.
void accumulate_gradients(const ModelParams<double>& params, const ForwardCache<double>* cache,
                          SleepStage label, ModelParams<double>& grads);

/// Gradient of the cross-entropy for one cached forward pass.
ModelParams<double> backprop(const ModelParams<double>& params, const ForwardCache<double>* cache,
                             SleepStage label);

struct Example {
    std::span<const float> input;  // standardized
    SleepStage label;
};

/// Mean loss and mean gradient over a mini-batch.
double batch_gradient(const ModelParams<double>& params, std::span<const Example> batch,
                      ModelParams<double>& grads);

/// One bias-corrected Adam update. Tensors whose `trainable` flag is false
/// (when a mask is given) are left untouched, moments included.
void adam_step(ModelParams<double>& params, const ModelParams<double>& grads, AdamState& state,
               const TrainConfig& config, const std::vector<bool>* trainable = nullptr);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
};

struct TrainResult {
    ModelParams<float> params;
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    std::size_t train_size = 0;
    std::size_t validation_size = 0;
};

using ProgressFn = std::function<void(const EpochRecord&)>;

/// Mini-batch Adam over `train`, keeping the parameters of the epoch with the
/// best validation accuracy (the last epoch when `validation` is empty).
TrainResult fit(const ModelParams<float>& initial, const Dataset& data, std::span<const std::size_t> train,
                std::span<const std::size_t> validation, const TrainConfig& config,
                const ProgressFn& progress = {});

/// Runs `epochs` passes of mini-batch Adam in place (no model selection).
void train_epochs(ModelParams<double>& params, const Dataset& data, std::span<const std::size_t> indices,
                  const TrainConfig& config, std::size_t epochs, const std::vector<bool>* trainable = nullptr);

struct EvalStats {
    double loss = 0.0;
    double accuracy = 0.0;
};

template <typename T>
EvalStats evaluate(const ModelParams<T>& params, const Dataset& data, std::span<const std::size_t> indices);

struct FoldPlan {
    std::vector<std::vector<std::uint16_t>> folds;
};

/// Seeded shuffle of the subjects, then contiguous folds of ceil(n/k)
/// subjects with the remainder in the last fold (77 -> 16,16,16,16,13).
/// Falls back to sizes differing by at most one when that would leave a
/// fold empty.
FoldPlan make_folds(std::vector<std::uint16_t> subject_ids, std::size_t k, std::uint64_t seed);

std::vector<std::uint16_t> subjects_of(const Dataset& data);

void write_fold_plan(const FoldPlan& plan, const std::filesystem::path& path);
FoldPlan read_fold_plan(const std::filesystem::path& path);

struct FoldSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
};

/// Test epochs are those of the fold's subjects; the rest is shuffled and
/// round(validation_fraction * n) epochs go to validation.
FoldSplit split_fold(const Dataset& data, const FoldPlan& plan, std::size_t fold, const TrainConfig& config);

TrainResult train_fold(const Dataset& data, const FoldPlan& plan, std::size_t fold, const TrainConfig& config,
                       const ModelParams<float>& initial, const ProgressFn& progress = {});

void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path);

}  // namespace sleepnet
