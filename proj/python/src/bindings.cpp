#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <limits>
#include <optional>

#include "sleepnet/budget.hpp"
#include "sleepnet/edf.hpp"
#include "sleepnet/epochs.hpp"
#include "sleepnet/metrics.hpp"
#include "sleepnet/net.hpp"
#include "sleepnet/quant.hpp"
#include "sleepnet/stream.hpp"

namespace py = pybind11;
using namespace sleepnet;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

py::list stage_names() {
    py::list names;
    for (std::size_t c = 0; c < kNumStages; ++c) names.append(stage_name(stage_from_index(c)));
    return names;
}

std::span<const float> row_of(const FloatArray& a, py::ssize_t r) {
    return {a.data(r, 0), static_cast<std::size_t>(a.shape(1))};
}

FloatArray require_epochs(const FloatArray& epochs) {
    if (epochs.ndim() != 2 || epochs.shape(1) != static_cast<py::ssize_t>(kEpochSamples)) {
        throw Error(ErrorCode::ShapeMismatch, "expected an (n, 3000) array of epochs");
    }
    return epochs;
}

py::dict header_dict(const EdfHeader& h) {
    py::list signals;
    for (const auto& s : h.signals) {
        py::dict d;
        d["label"] = s.label;
        d["physical_dimension"] = s.physical_dimension;
        d["physical_min"] = s.physical_min;
        d["physical_max"] = s.physical_max;
        d["digital_min"] = s.digital_min;
        d["digital_max"] = s.digital_max;
        d["samples_per_record"] = s.samples_per_record;
        signals.append(d);
    }
    py::dict d;
    d["version"] = h.version;
    d["patient"] = h.patient;
    d["recording"] = h.recording;
    d["reserved"] = h.reserved;
    d["n_records"] = h.n_records;
    d["record_duration"] = h.record_duration;
    d["signals"] = signals;
    return d;
}

py::list annotation_list(const std::vector<RawAnnotation>& anns) {
    py::list out;
    for (const auto& a : anns) out.append(py::make_tuple(a.onset, a.duration, a.text));
    return out;
}

/// Float or quantized model plus the classifier built from it.
class PyModel {
public:
    explicit PyModel(ModelParams<float> params) : params_(std::move(params)), classifier_(params_) {}
    PyModel(ModelParams<float> params, QuantModel q)
        : params_(std::move(params)), quant_(std::move(q)), classifier_(*quant_) {}

    static PyModel create(double width, std::uint64_t seed) { return PyModel(init_params(default_arch(width), seed)); }

    static PyModel load(const std::filesystem::path& path) {
        if (read_model_file(path).quantized()) {
            auto q = load_quant_model(path);
            auto p = dequantize_model(q);
            return PyModel(std::move(p), std::move(q));
        }
        return PyModel(load_model(path));
    }

    void save(const std::filesystem::path& path) const {
        if (quant_) {
            save_quant_model(*quant_, path);
        } else {
            save_model(params_, path);
        }
    }

    PyModel quantize(const FloatArray& calibration) const {
        const auto cal = require_epochs(calibration);
        Dataset data;
        for (py::ssize_t r = 0; r < cal.shape(0); ++r) {
            LabeledEpoch e;
            const auto row = row_of(cal, r);
            e.samples.assign(row.begin(), row.end());
            data.push_back(std::move(e));
        }
        auto q = quantize_model(params_, data);
        auto p = dequantize_model(q);
        return PyModel(std::move(p), std::move(q));
    }

    /// (n, 5) class probabilities for raw epochs; flat epochs get NaN rows.
    py::array_t<float> predict_proba(const FloatArray& epochs) const {
        const auto in = require_epochs(epochs);
        py::array_t<float> out({in.shape(0), static_cast<py::ssize_t>(kNumStages)});
        auto o = out.mutable_unchecked<2>();
        for (py::ssize_t r = 0; r < in.shape(0); ++r) {
            const auto d = classifier_.classify(row_of(in, r), static_cast<std::uint64_t>(r));
            for (std::size_t c = 0; c < kNumStages; ++c) {
                o(r, static_cast<py::ssize_t>(c)) = d.scorable() ? d.probs[c] : std::numeric_limits<float>::quiet_NaN();
            }
        }
        return out;
    }

    /// Stage index per epoch, -1 for unscorable.
    py::array_t<int> predict(const FloatArray& epochs) const {
        const auto in = require_epochs(epochs);
        py::array_t<int> out(in.shape(0));
        auto o = out.mutable_unchecked<1>();
        for (py::ssize_t r = 0; r < in.shape(0); ++r) {
            const auto d = classifier_.classify(row_of(in, r), static_cast<std::uint64_t>(r));
            o(r) = d.scorable() ? static_cast<int>(stage_index(*d.stage)) : -1;
        }
        return out;
    }

    std::size_t parameters() const { return param_count(params_.arch); }
    double width() const { return params_.arch.width_multiplier; }
    bool quantized() const { return quant_.has_value(); }

private:
    ModelParams<float> params_;
    std::optional<QuantModel> quant_;
    EpochClassifier classifier_;
};

}  // namespace

PYBIND11_MODULE(_sleepnet, m) {
    m.doc() = "sleepnet core bindings";

    static PyObject* error_type = PyErr_NewException("sleepnet.SleepNetError", PyExc_RuntimeError, nullptr);
    m.add_object("SleepNetError", py::handle(error_type));
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            auto exc = py::reinterpret_borrow<py::object>(error_type)(std::string(error_name(e.code())) + ": " +
                                                                      e.what());
            exc.attr("code") = error_name(e.code());
            PyErr_SetObject(error_type, exc.ptr());
        }
    });

    m.attr("STAGES") = stage_names();

    m.def("read_edf_header", [](const std::filesystem::path& p) { return header_dict(EdfReader::open(p).header()); },
          py::arg("path"));
    m.def(
        "read_signal",
        [](const std::filesystem::path& p, const std::string& label) {
            auto v = EdfReader::open(p).read_signal(label);
            return py::array_t<double>(static_cast<py::ssize_t>(v.size()), v.data());
        },
        py::arg("path"), py::arg("label"), "Physical-unit samples of one signal.");
    m.def("read_annotations", [](const std::filesystem::path& p) { return annotation_list(EdfReader::open(p).read_annotations()); },
          py::arg("path"), "(onset, duration, text) triples from an EDF+ file.");
    m.def("parse_tal", [](const py::bytes& b) { return annotation_list(parse_tal(std::string(b))); }, py::arg("data"));

    m.def(
        "standardize",
        [](const FloatArray& x) {
            const auto v = standardize(std::span<const float>(x.data(), static_cast<std::size_t>(x.size())));
            return py::array_t<float>(static_cast<py::ssize_t>(v.size()), v.data());
        },
        py::arg("samples"));

    m.def(
        "read_store",
        [](const std::filesystem::path& p) {
            const auto data = read_store(p);
            const auto n = static_cast<py::ssize_t>(data.size());
            py::array_t<float> samples({n, static_cast<py::ssize_t>(kEpochSamples)});
            py::array_t<int> stages(n), subjects(n), nights(n), index(n);
            auto s = samples.mutable_unchecked<2>();
            for (py::ssize_t i = 0; i < n; ++i) {
                const auto& e = data[static_cast<std::size_t>(i)];
                for (std::size_t t = 0; t < kEpochSamples; ++t) s(i, static_cast<py::ssize_t>(t)) = e.samples[t];
                stages.mutable_at(i) = static_cast<int>(stage_index(e.stage));
                subjects.mutable_at(i) = e.subject_id;
                nights.mutable_at(i) = e.night;
                index.mutable_at(i) = static_cast<int>(e.epoch_index);
            }
            py::dict d;
            d["samples"] = samples;
            d["stage"] = stages;
            d["subject"] = subjects;
            d["night"] = nights;
            d["epoch_index"] = index;
            return d;
        },
        py::arg("path"), "Dict of numpy arrays: samples (n, 3000), stage, subject, night, epoch_index.");
    m.def(
        "write_store",
        [](const std::filesystem::path& p, const FloatArray& samples, const std::vector<int>& stages,
           const std::vector<int>& subjects, int night) {
            const auto in = require_epochs(samples);
            const auto n = static_cast<std::size_t>(in.shape(0));
            if (stages.size() != n || subjects.size() != n) {
                throw Error(ErrorCode::LengthMismatch, "samples, stages and subjects differ in length");
            }
            Dataset data(n);
            for (std::size_t i = 0; i < n; ++i) {
                const auto row = row_of(in, static_cast<py::ssize_t>(i));
                data[i].samples.assign(row.begin(), row.end());
                data[i].stage = stage_from_index(static_cast<std::size_t>(stages[i]));
                data[i].subject_id = static_cast<std::uint16_t>(subjects[i]);
                data[i].night = static_cast<std::uint8_t>(night);
                data[i].epoch_index = static_cast<std::uint32_t>(i);
            }
            write_store(data, p);
        },
        py::arg("path"), py::arg("samples"), py::arg("stages"), py::arg("subjects"), py::arg("night") = 1);

    m.def("param_count", [](double width) { return param_count(default_arch(width)); }, py::arg("width") = 1.0);

    py::class_<PyModel>(m, "Model")
        .def_static("create", &PyModel::create, py::arg("width") = 1.0, py::arg("seed") = 0,
                    "Freshly initialized model.")
        .def_static("load", &PyModel::load, py::arg("path"))
        .def("save", &PyModel::save, py::arg("path"))
        .def("quantize", &PyModel::quantize, py::arg("calibration"), "int8 copy of this model.")
        .def("predict_proba", &PyModel::predict_proba, py::arg("epochs"))
        .def("predict", &PyModel::predict, py::arg("epochs"))
        .def_property_readonly("parameters", &PyModel::parameters)
        .def_property_readonly("width", &PyModel::width)
        .def_property_readonly("quantized", &PyModel::quantized);

    m.def(
        "confusion",
        [](const std::vector<int>& predicted, const std::vector<int>& actual) {
            std::vector<SleepStage> p, a;
            for (int v : predicted) p.push_back(stage_from_index(static_cast<std::size_t>(v)));
            for (int v : actual) a.push_back(stage_from_index(static_cast<std::size_t>(v)));
            const auto cm = confusion(p, a);
            py::array_t<std::uint64_t> out({static_cast<py::ssize_t>(kNumStages), static_cast<py::ssize_t>(kNumStages)});
            auto o = out.mutable_unchecked<2>();
            for (std::size_t i = 0; i < kNumStages; ++i) {
                for (std::size_t j = 0; j < kNumStages; ++j) o(static_cast<py::ssize_t>(i), static_cast<py::ssize_t>(j)) = cm.counts[i][j];
            }
            return out;
        },
        py::arg("predicted"), py::arg("actual"), "5x5 counts, rows actual, columns predicted.");
    m.def(
        "class_metrics",
        [](const py::array_t<std::uint64_t, py::array::c_style | py::array::forcecast>& counts) {
            if (counts.ndim() != 2 || counts.shape(0) != 5 || counts.shape(1) != 5) {
                throw Error(ErrorCode::ShapeMismatch, "expected a 5x5 confusion matrix");
            }
            ConfusionMatrix cm;
            for (std::size_t i = 0; i < kNumStages; ++i) {
                for (std::size_t j = 0; j < kNumStages; ++j) cm.counts[i][j] = *counts.data(static_cast<py::ssize_t>(i), static_cast<py::ssize_t>(j));
            }
            const auto r = class_metrics(cm);
            py::dict d;
            d["precision"] = std::vector<double>(r.precision.begin(), r.precision.end());
            d["recall"] = std::vector<double>(r.recall.begin(), r.recall.end());
            d["f1"] = std::vector<double>(r.f1.begin(), r.f1.end());
            d["accuracy"] = r.accuracy;
            d["text"] = render_report_text(r);
            return d;
        },
        py::arg("counts"));

    m.def(
        "check_fit",
        [](const std::filesystem::path& model, const std::string& profile) {
            const auto r = check_fit(model, find_profile(profile));
            py::dict d;
            d["profile"] = r.profile;
            d["flash_used"] = r.flash_used;
            d["flash_available"] = r.flash_available;
            d["peak_ram"] = r.peak_ram;
            d["sram_available"] = r.sram_available;
            d["macs"] = r.macs;
            d["fits_flash"] = r.fits_flash;
            d["fits_ram"] = r.fits_ram;
            d["latency_bound_s"] = r.latency_bound_s;
            return d;
        },
        py::arg("model"), py::arg("profile") = "nano33ble");
}
