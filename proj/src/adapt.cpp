#include "sleepnet/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace sleepnet {

AdaptSplit split_adapt(const Dataset& subject_epochs, double fraction, bool stratified, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "adaptation fraction must lie in (0, 1)");
    }
    if (subject_epochs.empty()) throw Error(ErrorCode::EmptyAdaptSet, "subject has no epochs");

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> chosen;
    if (!stratified) {
        std::vector<std::size_t> order(subject_epochs.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        const auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(order.size())));
        chosen.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n));
    } else {
        for (std::size_t c = 0; c < kNumStages; ++c) {
            std::vector<std::size_t> members;
            for (std::size_t i = 0; i < subject_epochs.size(); ++i) {
                if (stage_index(subject_epochs[i].stage) == c) members.push_back(i);
            }
            if (members.empty()) continue;
            const double want = fraction * static_cast<double>(members.size());
            auto n = static_cast<std::size_t>(std::llround(want));
            if (want >= 1.0) n = std::max<std::size_t>(n, 1);
            std::shuffle(members.begin(), members.end(), rng);
            chosen.insert(chosen.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n));
        }
    }
    if (chosen.empty()) {
        throw Error(ErrorCode::EmptyAdaptSet, "fraction " + std::to_string(fraction) + " of " +
                                                  std::to_string(subject_epochs.size()) +
                                                  " epochs selects nothing");
    }

    std::sort(chosen.begin(), chosen.end());
    AdaptSplit split;
    split.adapt = chosen;
    std::size_t next = 0;
    for (std::size_t i = 0; i < subject_epochs.size(); ++i) {
        if (next < chosen.size() && chosen[next] == i) {
            ++next;
        } else {
            split.holdout.push_back(i);
        }
    }
    return split;
}

TrainConfig default_adapt_config() {
    TrainConfig c;
    c.max_epochs = 20;
    return c;
}

std::vector<bool> trainable_mask(const ArchConfig& arch, AdaptScope scope) {
    const ParamIndex idx{arch.convs.size()};
    std::vector<bool> mask(idx.count(), scope == AdaptScope::All);
    mask[idx.classifier_weight()] = true;
    mask[idx.classifier_bias()] = true;
    return mask;
}

ModelParams<float> fine_tune(const ModelParams<float>& params, const Dataset& data,
                             const std::vector<std::size_t>& adapt_set, const TrainConfig& config, AdaptScope scope) {
    if (adapt_set.empty()) throw Error(ErrorCode::EmptyAdaptSet, "nothing to adapt on");
    if (config.max_epochs == 0) return params;
    auto work = params.cast<double>();
    const auto mask = trainable_mask(params.arch, scope);
    train_epochs(work, data, adapt_set, config, config.max_epochs, &mask);

    ModelParams<float> out = work.cast<float>();
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) out.tensors[i] = params.tensors[i];
    }
    return out;
}

}  // namespace sleepnet
