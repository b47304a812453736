#include "sleepnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace sleepnet {

void TrainConfig::validate() const {
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "Adam betas must lie in (0, 1)");
    }
    if (batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch size must be at least 1");
    if (!(learning_rate > 0.0) || !(epsilon > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "learning rate and epsilon must be positive");
    }
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "validation fraction must lie in [0, 1)");
    }
}

double cross_entropy(std::span<const double> probs, SleepStage label) {
    const double p = std::max(probs[stage_index(label)], 1e-12);
    return -std::log(p);
}

void accumulate_gradients(const ModelParams<double>& p, const ForwardCache<double>* cache, SleepStage label,
                          ModelParams<double>& g) {
    if (cache == nullptr || cache->probs.empty()) {
        throw Error(ErrorCode::MissingCache, "backprop needs the cache of a training-mode forward pass");
    }
    const ArchConfig& arch = p.arch;
    const ParamIndex idx = p.index();

    Tensor<double> dlogits({cache->probs.size()}, std::vector<double>(cache->probs));
    dlogits[stage_index(label)] -= 1.0;

    Tensor<double> dfeatures;
    dense_backward(cache->features, p[idx.classifier_weight()], dlogits, &dfeatures, g[idx.classifier_weight()],
                   g[idx.classifier_bias()]);
    const Tensor<double> dout = dfeatures.reshaped(cache->residual1.shape());

    Tensor<double> dhidden;
    dense_backward(cache->ffn_hidden, p[idx.ffn2_weight()], dout, &dhidden, g[idx.ffn2_weight()],
                   g[idx.ffn2_bias()]);
    const Tensor<double> dpre = relu_backward(cache->ffn_hidden, dhidden);
    Tensor<double> dnorm2;
    dense_backward(cache->norm2_output, p[idx.ffn1_weight()], dpre, &dnorm2, g[idx.ffn1_weight()],
                   g[idx.ffn1_bias()]);
    Tensor<double> dres1;
    layer_norm_backward(cache->norm2, p[idx.ln2_gain()], dnorm2, dres1, g[idx.ln2_gain()], g[idx.ln2_shift()]);
    for (std::size_t i = 0; i < dres1.size(); ++i) dres1[i] += dout[i];

    const AttentionParams<double> attn{p[idx.wq()], p[idx.bq()], p[idx.wk()], p[idx.bk()],
                                       p[idx.wv()], p[idx.bv()], p[idx.wo()], p[idx.bo()]};
    const AttentionGrads<double> attn_grads{g[idx.wq()], g[idx.bq()], g[idx.wk()], g[idx.bk()],
                                            g[idx.wv()], g[idx.bv()], g[idx.wo()], g[idx.bo()]};
    Tensor<double> dnorm1;
    multi_head_attention_backward(cache->attention, attn, arch.heads, dres1, dnorm1, attn_grads);
    Tensor<double> dx;
    layer_norm_backward(cache->norm1, p[idx.ln1_gain()], dnorm1, dx, g[idx.ln1_gain()], g[idx.ln1_shift()]);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dres1[i];

    for (std::size_t layer = arch.convs.size(); layer-- > 0;) {
        const Tensor<double> dz = relu_backward(cache->conv_outputs[layer], dx);
        const Tensor<double>& in = layer == 0 ? cache->input : cache->conv_outputs[layer - 1];
        conv1d_backward(in, p[idx.conv_weight(layer)], arch.convs[layer].stride, dz, layer > 0 ? &dx : nullptr,
                        g[idx.conv_weight(layer)], g[idx.conv_bias(layer)]);
    }
}

ModelParams<double> backprop(const ModelParams<double>& params, const ForwardCache<double>* cache,
                             SleepStage label) {
    auto grads = zeros_like<double>(params.arch);
    accumulate_gradients(params, cache, label, grads);
    return grads;
}

double batch_gradient(const ModelParams<double>& params, std::span<const Example> batch,
                      ModelParams<double>& grads) {
    if (batch.empty()) throw Error(ErrorCode::EmptyTrainingSet, "empty mini-batch");
    for (auto& t : grads.tensors) t.fill(0.0);
    double loss = 0.0;
    ForwardCache<double> cache;
    for (const auto& ex : batch) {
        const auto probs = forward(params, ex.input, &cache);
        loss += cross_entropy(probs, ex.label);
        accumulate_gradients(params, &cache, ex.label, grads);
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (auto& t : grads.tensors) {
        for (auto& v : t.values()) v *= inv;
    }
    return loss * inv;
}

void adam_step(ModelParams<double>& params, const ModelParams<double>& grads, AdamState& state,
               const TrainConfig& config, const std::vector<bool>* trainable) {
    if (grads.tensors.size() != params.tensors.size() || state.m.tensors.size() != params.tensors.size()) {
        throw Error(ErrorCode::ShapeMismatch, "adam_step: gradient/state layout differs from parameters");
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t i = 0; i < params.tensors.size(); ++i) {
        if (trainable && !(*trainable)[i]) continue;
        auto& w = params.tensors[i];
        const auto& g = grads.tensors[i];
        auto& m = state.m.tensors[i];
        auto& v = state.v.tensors[i];
        if (g.shape() != w.shape()) throw Error(ErrorCode::ShapeMismatch, "adam_step: gradient shape mismatch");
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
            v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
            const double mhat = m[j] / c1;
            const double vhat = v[j] / c2;
            w[j] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.epsilon);
        }
    }
}

namespace {

/// One shuffled pass of mini-batch Adam; returns the mean pre-update loss.
double run_epoch(ModelParams<double>& params, AdamState& state, ModelParams<double>& grads, const Dataset& data,
                 std::vector<std::size_t>& order, const TrainConfig& config, std::mt19937_64& rng,
                 const std::vector<bool>* trainable) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<float>> inputs;
    std::vector<Example> batch;
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t end = std::min(order.size(), start + config.batch_size);
        inputs.clear();
        batch.clear();
        for (std::size_t i = start; i < end; ++i) inputs.push_back(model_input(data[order[i]]));
        for (std::size_t i = start; i < end; ++i) batch.push_back({inputs[i - start], data[order[i]].stage});
        total += batch_gradient(params, batch, grads) * static_cast<double>(batch.size());
        adam_step(params, grads, state, config, trainable);
    }
    return total / static_cast<double>(order.size());
}

}  // namespace

template <typename T>
EvalStats evaluate(const ModelParams<T>& params, const Dataset& data, std::span<const std::size_t> indices) {
    EvalStats s;
    if (indices.empty()) return s;
    std::size_t correct = 0;
    for (auto i : indices) {
        const auto input = model_input(data[i]);
        const auto probs = forward(params, input);
        std::vector<double> p(probs.begin(), probs.end());
        s.loss += cross_entropy(p, data[i].stage);
        if (argmax(std::span<const T>(probs)) == stage_index(data[i].stage)) ++correct;
    }
    s.loss /= static_cast<double>(indices.size());
    s.accuracy = static_cast<double>(correct) / static_cast<double>(indices.size());
    return s;
}

template EvalStats evaluate<float>(const ModelParams<float>&, const Dataset&, std::span<const std::size_t>);
template EvalStats evaluate<double>(const ModelParams<double>&, const Dataset&, std::span<const std::size_t>);

void train_epochs(ModelParams<double>& params, const Dataset& data, std::span<const std::size_t> indices,
                  const TrainConfig& config, std::size_t epochs, const std::vector<bool>* trainable) {
    config.validate();
    if (epochs == 0) return;
    if (indices.empty()) throw Error(ErrorCode::EmptyTrainingSet, "no training epochs");
    std::mt19937_64 rng(config.seed);
    AdamState state(params.arch);
    auto grads = zeros_like<double>(params.arch);
    std::vector<std::size_t> order(indices.begin(), indices.end());
    for (std::size_t e = 0; e < epochs; ++e) run_epoch(params, state, grads, data, order, config, rng, trainable);
}

TrainResult fit(const ModelParams<float>& initial, const Dataset& data, std::span<const std::size_t> train,
                std::span<const std::size_t> validation, const TrainConfig& config, const ProgressFn& progress) {
    config.validate();
    if (train.empty()) throw Error(ErrorCode::EmptyTrainingSet, "no training epochs");

    TrainResult result;
    result.train_size = train.size();
    result.validation_size = validation.size();
    result.params = initial;

    auto params = initial.cast<double>();
    AdamState state(params.arch);
    auto grads = zeros_like<double>(params.arch);
    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(train.begin(), train.end());

    double best = -1.0;
    for (std::size_t e = 0; e < config.max_epochs; ++e) {
        EpochRecord rec;
        rec.epoch = e + 1;
        rec.train_loss = run_epoch(params, state, grads, data, order, config, rng, nullptr);
        if (!validation.empty()) {
            const auto s = evaluate(params, data, validation);
            rec.val_loss = s.loss;
            rec.val_acc = s.accuracy;
        } else {
            rec.val_loss = std::nan("");
            rec.val_acc = std::nan("");
        }
        result.history.push_back(rec);
        const bool improved = validation.empty() || rec.val_acc > best;
        if (improved) {
            best = validation.empty() ? best : rec.val_acc;
            result.params = params.cast<float>();
            result.best_epoch = rec.epoch;
        }
        if (progress) progress(rec);
        if (config.target_accuracy > 0.0 && !validation.empty() && rec.val_acc >= config.target_accuracy) break;
    }
    return result;
}

FoldPlan make_folds(std::vector<std::uint16_t> subject_ids, std::size_t k, std::uint64_t seed) {
    std::sort(subject_ids.begin(), subject_ids.end());
    if (std::adjacent_find(subject_ids.begin(), subject_ids.end()) != subject_ids.end()) {
        throw Error(ErrorCode::InvalidArgument, "duplicate subject ids");
    }
    const std::size_t n = subject_ids.size();
    if (k == 0 || k > n) {
        throw Error(ErrorCode::FoldCount, "cannot split " + std::to_string(n) + " subjects into " +
                                              std::to_string(k) + " folds");
    }
    std::mt19937_64 rng(seed);
    std::shuffle(subject_ids.begin(), subject_ids.end(), rng);

    std::vector<std::size_t> sizes(k);
    const std::size_t chunk = (n + k - 1) / k;
    if (chunk * (k - 1) < n) {
        std::fill(sizes.begin(), sizes.end() - 1, chunk);
        sizes.back() = n - chunk * (k - 1);
    } else {
        for (std::size_t i = 0; i < k; ++i) sizes[i] = n / k + (i < n % k ? 1 : 0);
    }

    FoldPlan plan;
    auto it = subject_ids.begin();
    for (auto s : sizes) {
        plan.folds.emplace_back(it, it + static_cast<std::ptrdiff_t>(s));
        it += static_cast<std::ptrdiff_t>(s);
    }
    return plan;
}

std::vector<std::uint16_t> subjects_of(const Dataset& data) {
    std::set<std::uint16_t> s;
    for (const auto& e : data) s.insert(e.subject_id);
    return {s.begin(), s.end()};
}

void write_fold_plan(const FoldPlan& plan, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    for (const auto& fold : plan.folds) {
        for (std::size_t i = 0; i < fold.size(); ++i) out << (i ? " " : "") << fold[i];
        out << '\n';
    }
}

FoldPlan read_fold_plan(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    FoldPlan plan;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::vector<std::uint16_t> fold;
        unsigned v = 0;
        while (ls >> v) fold.push_back(static_cast<std::uint16_t>(v));
        if (!fold.empty()) plan.folds.push_back(std::move(fold));
    }
    return plan;
}

FoldSplit split_fold(const Dataset& data, const FoldPlan& plan, std::size_t fold, const TrainConfig& config) {
    if (fold >= plan.folds.size()) throw Error(ErrorCode::FoldCount, "fold index out of range");
    const std::set<std::uint16_t> test_subjects(plan.folds[fold].begin(), plan.folds[fold].end());
    FoldSplit split;
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < data.size(); ++i) {
        (test_subjects.contains(data[i].subject_id) ? split.test : rest).push_back(i);
    }
    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    std::shuffle(rest.begin(), rest.end(), rng);
    const auto n_val = static_cast<std::size_t>(std::llround(config.validation_fraction * static_cast<double>(rest.size())));
    split.validation.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n_val));
    split.train.assign(rest.begin() + static_cast<std::ptrdiff_t>(n_val), rest.end());
    return split;
}

TrainResult train_fold(const Dataset& data, const FoldPlan& plan, std::size_t fold, const TrainConfig& config,
                       const ModelParams<float>& initial, const ProgressFn& progress) {
    const FoldSplit split = split_fold(data, plan, fold, config);
    if (split.train.empty()) throw Error(ErrorCode::EmptyTrainingSet, "fold leaves no training epochs");
    return fit(initial, data, split.train, split.validation, config, progress);
}

void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out.precision(17);
    out << "epoch,train_loss,val_loss,val_acc\n";
    for (const auto& r : history) out << r.epoch << ',' << r.train_loss << ',' << r.val_loss << ',' << r.val_acc << '\n';
}

}  // namespace sleepnet
