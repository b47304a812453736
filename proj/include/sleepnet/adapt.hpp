#pragma once

// Subject-specific adaptation: fine-tune a trained model on a small slice of
// one subject's recording and evaluate on the rest.

#include <cstdint>
#include <vector>

#include "sleepnet/epochs.hpp"
#include "sleepnet/net.hpp"
#include "sleepnet/train.hpp"

namespace sleepnet {

struct AdaptSplit {
    std::vector<std::size_t> adapt;    // indices into the input, ascending
    std::vector<std::size_t> holdout;  // the complement, ascending
};

/// Draws round(fraction * n) epochs uniformly, or, when `stratified`,
/// round(fraction * n_c) per class (at least one when fraction * n_c >= 1).
AdaptSplit split_adapt(const Dataset& subject_epochs, double fraction, bool stratified, std::uint64_t seed);

enum class AdaptScope { All, ClassifierOnly };

/// Default adaptation schedule: the training defaults with 20 epochs.
TrainConfig default_adapt_config();

ModelParams<float> fine_tune(const ModelParams<float>& params, const Dataset& data,
                             const std::vector<std::size_t>& adapt_set, const TrainConfig& config, AdaptScope scope);

/// Per-tensor trainable mask for a scope.
std::vector<bool> trainable_mask(const ArchConfig& arch, AdaptScope scope);

}  // namespace sleepnet
