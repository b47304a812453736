#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "sleepnet/adapt.hpp"
#include "sleepnet/budget.hpp"
#include "sleepnet/edf.hpp"
#include "sleepnet/epochs.hpp"
#include "sleepnet/error.hpp"
#include "sleepnet/metrics.hpp"
#include "sleepnet/net.hpp"
#include "sleepnet/quant.hpp"
#include "sleepnet/stream.hpp"
#include "sleepnet/train.hpp"

namespace fs = std::filesystem;
using namespace sleepnet;

namespace {

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << text;
}

EpochClassifier load_classifier(const fs::path& path) {
    ModelFile file = read_model_file(path);
    if (file.quantized()) return EpochClassifier(from_model_file(file));
    return EpochClassifier(load_model(path));
}

std::string distribution_line(const Dataset& data) {
    const auto dist = class_distribution(data);
    std::ostringstream os;
    for (std::size_t c = 0; c < kNumStages; ++c) {
        os << (c ? " " : "") << stage_name(stage_from_index(c)) << '=' << dist.counts[c];
    }
    return os.str();
}

struct Scored {
    ConfusionMatrix cm;
    std::size_t unscorable = 0;
};

Scored score(const EpochClassifier& classifier, const Dataset& data, std::span<const std::size_t> indices) {
    std::vector<SleepStage> preds, labels;
    Scored s;
    for (auto i : indices) {
        const auto d = classifier.classify(data[i].samples, i);
        if (!d.stage) {
            ++s.unscorable;
            continue;
        }
        preds.push_back(*d.stage);
        labels.push_back(data[i].stage);
    }
    s.cm = confusion(preds, labels);
    return s;
}

std::vector<std::size_t> all_indices(const Dataset& data) {
    std::vector<std::size_t> idx(data.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return idx;
}

void emit_report(const MetricsReport& report, const std::string& prefix) {
    const std::string text = render_report_text(report);
    std::cout << text;
    if (!prefix.empty()) {
        write_text(prefix + ".txt", text);
        write_text(prefix + ".csv", render_report_csv(report));
    }
}

// convert

struct ConvertArgs {
    fs::path edf, hypnogram, out;
    std::string channel = "EEG Fpz-Cz";
    int subject = 0, night = 1;
    bool append = false, clip = false, no_trim = false;
};

int run_convert(const ConvertArgs& a) {
    auto psg = EdfReader::open(a.edf);
    const std::size_t sig = psg.header().signal_index(a.channel);
    const double rate = psg.header().sample_rate(sig);
    if (rate != kSampleRateHz) {
        throw Error(ErrorCode::EdfUnsupported, "channel '" + a.channel + "' is sampled at " + std::to_string(rate) +
                                                   " Hz; 100 Hz required");
    }
    const auto samples = psg.read_signal(a.channel);

    std::vector<RawAnnotation> annotations;
    const std::string ext = a.hypnogram.extension().string();
    if (ext == ".csv" || ext == ".CSV" || ext == ".txt") {
        annotations = parse_hypnogram_csv(slurp(a.hypnogram));
    } else {
        annotations = EdfReader::open(a.hypnogram).read_annotations();
    }
    if (a.clip) annotations = clip_annotations(annotations, static_cast<double>(samples.size()) / kSampleRateHz);

    SubjectNight night = segment_epochs(samples, annotations, static_cast<std::uint16_t>(a.subject),
                                        static_cast<std::uint8_t>(a.night));
    const std::size_t segmented = night.epochs.size();
    if (!a.no_trim) night = trim_wake(night);

    Dataset kept;
    std::size_t flat = 0;
    for (auto& e : night.epochs) {
        try {
            (void)standardize(e.samples);
        } catch (const Error& err) {
            if (err.code() != ErrorCode::DegenerateEpoch) throw;
            ++flat;
            continue;
        }
        kept.push_back(std::move(e));
    }

    if (a.append && fs::exists(a.out)) {
        append_store(kept, a.out);
    } else {
        write_store(kept, a.out);
    }
    std::cerr << "segmented " << segmented << " epochs, kept " << kept.size() << " after wake trim";
    if (flat) std::cerr << " (" << flat << " flat epochs dropped)";
    std::cerr << "\n" << distribution_line(kept) << '\n';
    return 0;
}

// train

struct TrainArgs {
    fs::path store, out_dir;
    std::size_t folds = 5;
    int fold = -1;
    double width = 1.0;
    TrainConfig config;
};

int run_train(const TrainArgs& a) {
    a.config.validate();
    const Dataset data = read_store(a.store);
    const ArchConfig arch = default_arch(a.width);
    const FoldPlan plan = make_folds(subjects_of(data), a.folds, a.config.seed);
    fs::create_directories(a.out_dir);
    write_fold_plan(plan, a.out_dir / "folds.txt");

    std::vector<std::size_t> which;
    if (a.fold >= 0) {
        if (static_cast<std::size_t>(a.fold) >= plan.folds.size()) {
            throw Error(ErrorCode::FoldCount, "fold " + std::to_string(a.fold) + " out of range");
        }
        which.push_back(static_cast<std::size_t>(a.fold));
    } else {
        for (std::size_t f = 0; f < plan.folds.size(); ++f) which.push_back(f);
    }

    ConfusionMatrix overall;
    for (auto f : which) {
        std::cerr << "fold " << f << ": " << plan.folds[f].size() << " test subjects\n";
        const auto split = split_fold(data, plan, f, a.config);
        auto progress = [&](const EpochRecord& r) {
            std::cerr << "  epoch " << r.epoch << " train_loss " << r.train_loss << " val_loss " << r.val_loss
                      << " val_acc " << r.val_acc << '\n';
        };
        TrainResult result = fit(init_params(arch, a.config.seed + f), data, split.train, split.validation,
                                 a.config, progress);
        const std::string stem = "fold" + std::to_string(f);
        save_model(result.params, a.out_dir / (stem + ".slpm"));
        write_history_csv(result.history, a.out_dir / (stem + "_history.csv"));
        if (!split.test.empty()) {
            const EpochClassifier classifier(result.params);
            const Scored s = score(classifier, data, split.test);
            if (s.cm.total() > 0) {
                const auto report = class_metrics(s.cm);
                write_text(a.out_dir / (stem + "_metrics.txt"), render_report_text(report));
                write_text(a.out_dir / (stem + "_metrics.csv"), render_report_csv(report));
                std::cerr << "  test accuracy " << std::fixed << std::setprecision(3) << report.accuracy
                          << std::defaultfloat << '\n';
                overall += s.cm;
            }
        }
    }
    if (overall.total() > 0) {
        const auto report = class_metrics(overall);
        emit_report(report, (a.out_dir / "overall_metrics").string());
    }
    return 0;
}

// eval

struct EvalArgs {
    fs::path model, store, plan;
    int fold = -1;
    int subject = -1;
    std::string prefix;
};

std::vector<std::size_t> select(const Dataset& data, const fs::path& plan_path, int fold, int subject) {
    if (subject >= 0 && fold >= 0) throw Error(ErrorCode::InvalidArgument, "--subject and --fold are exclusive");
    std::vector<std::size_t> idx;
    if (fold >= 0) {
        if (plan_path.empty()) throw Error(ErrorCode::InvalidArgument, "--fold needs --plan");
        const FoldPlan plan = read_fold_plan(plan_path);
        if (static_cast<std::size_t>(fold) >= plan.folds.size()) {
            throw Error(ErrorCode::FoldCount, "fold " + std::to_string(fold) + " out of range");
        }
        const auto& subjects = plan.folds[static_cast<std::size_t>(fold)];
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (std::find(subjects.begin(), subjects.end(), data[i].subject_id) != subjects.end()) idx.push_back(i);
        }
    } else if (subject >= 0) {
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (data[i].subject_id == subject) idx.push_back(i);
        }
    } else {
        idx = all_indices(data);
    }
    if (idx.empty()) throw Error(ErrorCode::EmptyDataset, "no epochs selected");
    return idx;
}

int run_eval(const EvalArgs& a) {
    const auto classifier = load_classifier(a.model);
    const Dataset data = read_store(a.store);
    const auto idx = select(data, a.plan, a.fold, a.subject);
    const Scored s = score(classifier, data, idx);
    if (s.unscorable) std::cerr << s.unscorable << " unscorable epochs skipped\n";
    emit_report(class_metrics(s.cm), a.prefix);
    return 0;
}

// adapt

struct AdaptArgs {
    fs::path model, store, out;
    int subject = -1;
    double fraction = 0.1;
    bool stratified = false;
    std::string scope = "all";
    TrainConfig config = default_adapt_config();
    std::string prefix;
};

int run_adapt(const AdaptArgs& a) {
    const ModelParams<float> params = load_model(a.model);
    const Dataset all = read_store(a.store);
    Dataset data;
    for (const auto& e : all) {
        if (a.subject < 0 || e.subject_id == a.subject) data.push_back(e);
    }
    if (data.empty()) throw Error(ErrorCode::EmptyAdaptSet, "no epochs for subject " + std::to_string(a.subject));
    const AdaptScope scope = a.scope == "classifier" ? AdaptScope::ClassifierOnly : AdaptScope::All;

    const AdaptSplit split = split_adapt(data, a.fraction, a.stratified, a.config.seed);
    const double n = static_cast<double>(data.size());
    std::cerr << std::fixed << std::setprecision(1) << "adapt set: " << split.adapt.size() << " epochs ("
              << 100.0 * static_cast<double>(split.adapt.size()) / n << "%), holdout: " << split.holdout.size()
              << " epochs (" << 100.0 * static_cast<double>(split.holdout.size()) / n << "%)\n"
              << std::defaultfloat;

    const Scored before = score(EpochClassifier(params), data, split.holdout);
    const ModelParams<float> tuned = fine_tune(params, data, split.adapt, a.config, scope);
    save_model(tuned, a.out);
    const Scored after = score(EpochClassifier(tuned), data, split.holdout);

    const auto rb = class_metrics(before.cm);
    const auto ra = class_metrics(after.cm);
    std::cerr << std::fixed << std::setprecision(3) << "holdout accuracy before " << rb.accuracy << ", after "
              << ra.accuracy << '\n'
              << std::defaultfloat;
    if (!a.prefix.empty()) {
        write_text(a.prefix + "_before.csv", render_report_csv(rb));
        write_text(a.prefix + "_before.txt", render_report_text(rb));
    }
    emit_report(ra, a.prefix.empty() ? "" : a.prefix + "_after");
    return 0;
}

// quantize

struct QuantizeArgs {
    fs::path model, calibration, out;
};

int run_quantize(const QuantizeArgs& a) {
    const ModelParams<float> params = load_model(a.model);
    const Dataset calib = read_store(a.calibration);
    const QuantModel q = quantize_model(params, calib);
    save_quant_model(q, a.out);
    std::cerr << "float model " << fs::file_size(a.model) << " bytes, int8 model " << fs::file_size(a.out)
              << " bytes\n";
    std::cerr << std::fixed << std::setprecision(4) << "argmax agreement on calibration set "
              << argmax_agreement(params, q, calib) << '\n';
    return 0;
}

// budget

struct BudgetArgs {
    fs::path model;
    std::string profile = "nano33ble";
    std::string profile_file;
    bool kv = false;
};

int run_budget(const BudgetArgs& a) {
    std::optional<fs::path> file;
    if (!a.profile_file.empty()) file = a.profile_file;
    const DeviceProfile profile = find_profile(a.profile, file);
    const BudgetReport report = check_fit(a.model, profile);
    std::cout << (a.kv ? render_budget_kv(report) : render_budget_text(report));
    return 0;
}

// stream

struct StreamArgs {
    fs::path model;
    double rate = 100.0;
    StreamOptions options;
};

int run_stream_cmd(const StreamArgs& a) {
    if (a.rate != kSampleRateHz) {
        throw Error(ErrorCode::InvalidArgument, "stream rate must be 100 Hz (resampling is not supported)");
    }
    const auto classifier = load_classifier(a.model);
    std::ios::sync_with_stdio(false);
    const auto n = run_stream(std::cin, classifier, [](const StageDecision& d) {
        std::cout << format_decision(d) << '\n';
        std::cout.flush();
    }, a.options);
    std::cerr << n << " decisions\n";
    return 0;
}

// report

struct ReportArgs {
    fs::path store;
    std::vector<std::string> compare;
};

int run_report(const ReportArgs& a) {
    if (!a.store.empty()) {
        const Dataset data = read_store(a.store);
        const auto dist = class_distribution(data);
        std::cout << std::left << std::setw(8) << "Stage" << std::right << std::setw(10) << "Epochs" << '\n';
        std::uint64_t total = 0;
        for (std::size_t c = 0; c < kNumStages; ++c) {
            std::cout << std::left << std::setw(8) << stage_name(stage_from_index(c)) << std::right << std::setw(10)
                      << dist.counts[c] << '\n';
            total += dist.counts[c];
        }
        std::cout << std::left << std::setw(8) << "Total" << std::right << std::setw(10) << total << '\n';
    }
    if (!a.compare.empty()) {
        std::vector<std::pair<std::string, MetricsReport>> rows;
        for (const auto& spec : a.compare) {
            const auto eq = spec.find('=');
            const std::string name = eq == std::string::npos ? fs::path(spec).stem().string() : spec.substr(0, eq);
            const std::string path = eq == std::string::npos ? spec : spec.substr(eq + 1);
            rows.emplace_back(name, parse_report_csv(slurp(path)));
        }
        std::cout << render_comparison(rows);
    }
    if (a.store.empty() && a.compare.empty()) {
        throw Error(ErrorCode::InvalidArgument, "report needs --store or --compare");
    }
    return 0;
}

void add_train_flags(CLI::App* cmd, TrainConfig& c) {
    cmd->add_option("--epochs", c.max_epochs, "Training epochs")->capture_default_str();
    cmd->add_option("--lr", c.learning_rate, "Adam learning rate")->capture_default_str();
    cmd->add_option("--batch", c.batch_size, "Mini-batch size")->capture_default_str();
    cmd->add_option("--seed", c.seed, "Random seed")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Single-channel EEG sleep staging for small devices"};
    app.require_subcommand(1);

    ConvertArgs convert;
    auto* c = app.add_subcommand("convert", "EDF recording + hypnogram -> epoch store");
    c->add_option("--edf", convert.edf, "PSG recording")->required()->check(CLI::ExistingFile);
    c->add_option("--hypnogram", convert.hypnogram, "EDF+ hypnogram or CSV (onset,duration,label)")
        ->required()
        ->check(CLI::ExistingFile);
    c->add_option("--channel", convert.channel, "Signal label")->capture_default_str();
    c->add_option("--subject", convert.subject, "Subject id")->check(CLI::Range(0, 65535));
    c->add_option("--night", convert.night, "Night number")->check(CLI::Range(0, 255))->capture_default_str();
    c->add_option("--out", convert.out, "Output store")->required();
    c->add_flag("--append", convert.append, "Append to an existing store");
    c->add_flag("--clip", convert.clip, "Drop annotations past the end of the signal");
    c->add_flag("--no-trim", convert.no_trim, "Keep all wake epochs");

    TrainArgs train;
    auto* t = app.add_subcommand("train", "Subject-wise k-fold training");
    t->add_option("--store", train.store, "Epoch store")->required()->check(CLI::ExistingFile);
    t->add_option("--out-dir", train.out_dir, "Output directory")->required();
    t->add_option("--folds", train.folds, "Number of folds")->capture_default_str();
    t->add_option("--fold", train.fold, "Train a single fold");
    t->add_option("--width", train.width, "Width multiplier")->capture_default_str();
    t->add_option("--val-fraction", train.config.validation_fraction, "Validation share of training epochs")
        ->capture_default_str();
    add_train_flags(t, train.config);

    EvalArgs eval;
    auto* e = app.add_subcommand("eval", "Score a model on a store");
    e->add_option("--model", eval.model, "Model file")->required()->check(CLI::ExistingFile);
    e->add_option("--store", eval.store, "Epoch store")->required()->check(CLI::ExistingFile);
    e->add_option("--plan", eval.plan, "folds.txt written by train");
    e->add_option("--fold", eval.fold, "Evaluate this fold's subjects");
    e->add_option("--subject", eval.subject, "Evaluate one subject");
    e->add_option("--out", eval.prefix, "Write <prefix>.txt and <prefix>.csv");

    AdaptArgs adapt;
    auto* ad = app.add_subcommand("adapt", "Subject-specific fine-tuning");
    ad->add_option("--model", adapt.model, "32-bit model file")->required()->check(CLI::ExistingFile);
    ad->add_option("--store", adapt.store, "Epoch store")->required()->check(CLI::ExistingFile);
    ad->add_option("--subject", adapt.subject, "Subject id (default: whole store)");
    ad->add_option("--fraction", adapt.fraction, "Share of epochs used for adaptation")->capture_default_str();
    ad->add_flag("--stratified", adapt.stratified, "Sample the adapt set per class");
    ad->add_option("--scope", adapt.scope, "Trainable tensors")
        ->check(CLI::IsMember({"all", "classifier"}))
        ->capture_default_str();
    ad->add_option("--out", adapt.out, "Adapted model file")->required();
    ad->add_option("--report", adapt.prefix, "Write <prefix>_before/_after reports");
    add_train_flags(ad, adapt.config);

    QuantizeArgs quant;
    auto* q = app.add_subcommand("quantize", "Int8 post-training quantization");
    q->add_option("--model", quant.model, "32-bit model file")->required()->check(CLI::ExistingFile);
    q->add_option("--calibration", quant.calibration, "Calibration store")->required()->check(CLI::ExistingFile);
    q->add_option("--out", quant.out, "Quantized model file")->required();

    BudgetArgs budget;
    auto* b = app.add_subcommand("budget", "Flash / RAM / compute check against a device");
    b->add_option("--model", budget.model, "Model file")->required()->check(CLI::ExistingFile);
    b->add_option("--profile", budget.profile, "Device profile")->capture_default_str();
    b->add_option("--profile-file", budget.profile_file, "Extra profiles (name flash sram clock per line)");
    b->add_flag("--kv", budget.kv, "key=value output");

    StreamArgs stream;
    auto* s = app.add_subcommand("stream", "Classify raw samples from standard input");
    s->add_option("--model", stream.model, "Model file")->required()->check(CLI::ExistingFile);
    s->add_option("--rate", stream.rate, "Sample rate in Hz")->capture_default_str();
    s->add_flag("--int16", stream.options.format.int16, "16-bit digital samples instead of float32");
    s->add_option("--digital-min", stream.options.format.digital_min)->capture_default_str();
    s->add_option("--digital-max", stream.options.format.digital_max)->capture_default_str();
    s->add_option("--physical-min", stream.options.format.physical_min)->capture_default_str();
    s->add_option("--physical-max", stream.options.format.physical_max)->capture_default_str();
    s->add_option("--queue", stream.options.queue_epochs, "Buffered epochs before failing")->capture_default_str();
    s->add_flag("--block", stream.options.block_when_full, "Wait for the classifier instead of failing (replays)");

    ReportArgs report;
    auto* r = app.add_subcommand("report", "Class distribution or metric comparison");
    r->add_option("--store", report.store, "Epoch store")->check(CLI::ExistingFile);
    r->add_option("--compare", report.compare, "NAME=metrics.csv entries");

    if (argc > 1 && argv[1][0] != '-') {
        bool known = false;
        for (const auto* sub : app.get_subcommands({})) known = known || sub->get_name() == argv[1];
        if (!known) {
            std::cerr << "sleepnet: usage: unknown command '" << argv[1] << "'\n";
            return 2;
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        if (err.get_exit_code() == 0) return app.exit(err);
        std::cerr << "sleepnet: usage: " << err.what() << '\n';
        return 2;
    }

    try {
        if (*c) return run_convert(convert);
        if (*t) return run_train(train);
        if (*e) return run_eval(eval);
        if (*ad) return run_adapt(adapt);
        if (*q) return run_quantize(quant);
        if (*b) return run_budget(budget);
        if (*s) return run_stream_cmd(stream);
        if (*r) return run_report(report);
    } catch (const Error& err) {
        std::cerr << "sleepnet: " << error_name(err.code()) << ": " << err.what() << '\n';
        return exit_status(err.code());
    } catch (const std::exception& err) {
        std::cerr << "sleepnet: " << err.what() << '\n';
        return 1;
    }
    return 2;
}
