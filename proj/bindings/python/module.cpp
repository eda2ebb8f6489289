#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "qgalore/checkpoint.hpp"
#include "qgalore/data.hpp"
#include "qgalore/memory.hpp"
#include "qgalore/optimizer.hpp"
#include "qgalore/quant.hpp"
#include "qgalore/subspace.hpp"
#include "qgalore/svd.hpp"
#include "qgalore/trainer.hpp"

namespace py = pybind11;
using namespace qgalore;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const FloatArray& arr) {
    if (arr.ndim() != 2) throw std::invalid_argument("expected a 2-D array");
    Matrix m(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)));
    std::memcpy(m.data(), arr.data(), sizeof(float) * m.size());
    return m;
}

py::array_t<float> to_numpy(const Matrix& m) {
    py::array_t<float> out({m.rows(), m.cols()});
    std::memcpy(out.mutable_data(), m.data(), sizeof(float) * m.size());
    return out;
}

Rounding parse_rounding(const std::string& name) { return rounding_from_name(name); }

StoreFormat parse_format(const std::string& name) { return store_format_from_name(name); }

py::dict record_to_dict(const MetricsRecord& r) {
    py::dict d;
    d["step"] = r.step;
    d["train_loss"] = r.train_loss;
    d["val_loss"] = r.val_loss;
    d["lr"] = r.lr;
    d["svd_calls_total"] = r.svd_calls_total;
    py::list layers;
    for (const PerLayerMetric& pl : r.per_layer) {
        py::dict e;
        e["layer_id"] = pl.layer_id;
        e["interval"] = pl.interval;
        e["last_similarity"] = pl.last_similarity;
        layers.append(e);
    }
    d["per_layer"] = layers;
    d["wallclock_ms"] = r.wallclock_ms;
    d["estimated_memory_bytes"] = r.estimated_memory_bytes;
    return d;
}

} // namespace

PYBIND11_MODULE(_qgalore, m) {
    m.doc() = "Quantized low-rank gradient training core";

    py::class_<RngStream>(m, "RngStream")
        .def(py::init([](std::uint64_t seed, std::uint64_t id, std::uint64_t step) {
                 return RngStream::derive(seed, RngPurpose::Generic, id, step);
             }),
             py::arg("seed"), py::arg("id") = 0, py::arg("step") = 0)
        .def("next_uniform", &RngStream::next_uniform)
        .def("next_gaussian", &RngStream::next_gaussian);

    py::class_<QuantizedTensor>(m, "QuantizedTensor")
        .def_property_readonly("rows", &QuantizedTensor::rows)
        .def_property_readonly("cols", &QuantizedTensor::cols)
        .def_property_readonly("bits", [](const QuantizedTensor& q) { return q.spec().bits; })
        .def_property_readonly("block_size",
                               [](const QuantizedTensor& q) { return q.spec().block_size; })
        .def_property_readonly("scales", [](const QuantizedTensor& q) { return q.scales(); })
        .def_property_readonly("zeros", [](const QuantizedTensor& q) { return q.zeros(); })
        .def_property_readonly("payload", [](const QuantizedTensor& q) {
            return py::bytes(reinterpret_cast<const char*>(q.payload().data()),
                             q.payload().size());
        })
        .def("values", [](const QuantizedTensor& q) {
            std::vector<int> out;
            for (std::int8_t v : q.unpacked_values()) out.push_back(v);
            return out;
        });

    m.def(
        "quantize",
        [](const FloatArray& w, int bits, int block_size, const std::string& rounding,
           std::uint64_t seed) {
            QuantSpec spec;
            spec.bits = bits;
            spec.block_size = block_size;
            spec.rounding = parse_rounding(rounding);
            RngStream rng = RngStream::derive(seed, RngPurpose::Generic);
            return quantize(to_matrix(w), spec,
                            spec.rounding == Rounding::Stochastic ? &rng : nullptr);
        },
        py::arg("w"), py::arg("bits") = 8, py::arg("block_size") = 256,
        py::arg("rounding") = "nearest", py::arg("seed") = 0);

    m.def("dequantize", [](const QuantizedTensor& q) { return to_numpy(dequantize(q)); });

    m.def(
        "stochastic_round",
        [](double x, RngStream& rng) { return stochastic_round(x, rng); },
        py::arg("x"), py::arg("rng"));

    m.def(
        "apply_update",
        [](const QuantizedTensor& wq, const FloatArray& delta, const std::string& rounding,
           RngStream& rng) {
            return apply_update(wq, to_matrix(delta), parse_rounding(rounding), &rng);
        },
        py::arg("wq"), py::arg("delta"), py::arg("rounding") = "stochastic", py::arg("rng"));

    m.def("pack_int4", [](const std::vector<int>& values) {
        std::vector<std::int8_t> v(values.begin(), values.end());
        auto bytes = pack_int4(std::span<const std::int8_t>(v));
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    });
    m.def("unpack_int4", [](const py::bytes& data, std::size_t count) {
        std::string s = data;
        std::vector<std::uint8_t> bytes(s.begin(), s.end());
        std::vector<int> out;
        for (std::int8_t v : unpack_int4(std::span<const std::uint8_t>(bytes), count)) {
            out.push_back(v);
        }
        return out;
    });

    m.def("svd", [](const FloatArray& a) {
        SvdResult f = svd(to_matrix(a));
        return py::make_tuple(to_numpy(f.u), f.sigma, to_numpy(f.v));
    });

    m.def("cosine_similarity_flat", [](const FloatArray& a, const FloatArray& b) {
        return cosine_similarity_flat(to_matrix(a), to_matrix(b));
    });
    m.def("sign_align", [](const FloatArray& ref, const FloatArray& cand) {
        return to_numpy(sign_align(to_matrix(ref), to_matrix(cand)));
    });
    m.def("compute_projection", [](const FloatArray& g, int rank) {
        return to_numpy(compute_projection(to_matrix(g), rank));
    });

    py::class_<SubspaceOptions>(m, "SubspaceOptions")
        .def(py::init<>())
        .def_readwrite("rank", &SubspaceOptions::rank)
        .def_readwrite("base_interval", &SubspaceOptions::base_interval)
        .def_readwrite("window", &SubspaceOptions::window)
        .def_readwrite("threshold", &SubspaceOptions::threshold)
        .def_readwrite("adaptive", &SubspaceOptions::adaptive)
        .def_readwrite("max_interval", &SubspaceOptions::max_interval)
        .def_property(
            "projection_bits",
            [](const SubspaceOptions& o) { return std::string(store_format_name(o.projection_format)); },
            [](SubspaceOptions& o, const std::string& s) { o.projection_format = parse_format(s); });

    py::class_<ProjectionState>(m, "ProjectionState")
        .def(py::init([](int rows, int cols, const SubspaceOptions& opts) {
                 return ProjectionState(rows, cols, opts);
             }),
             py::arg("rows"), py::arg("cols"), py::arg("options"))
        .def("maybe_update",
             [](ProjectionState& st, const FloatArray& g, std::int64_t step) {
                 return st.maybe_update(to_matrix(g), step);
             })
        .def("project",
             [](const ProjectionState& st, const FloatArray& g) {
                 return to_numpy(st.project(to_matrix(g)));
             })
        .def("project_back",
             [](const ProjectionState& st, const FloatArray& n) {
                 return to_numpy(st.project_back(to_matrix(n)));
             })
        .def_property_readonly("interval", &ProjectionState::interval)
        .def_property_readonly("svd_count", &ProjectionState::svd_count)
        .def_property_readonly("last_similarity", &ProjectionState::last_similarity)
        .def_property_readonly("initialized", &ProjectionState::initialized);

    py::class_<AdamConfig>(m, "AdamConfig")
        .def(py::init<>())
        .def_readwrite("lr", &AdamConfig::lr)
        .def_readwrite("beta1", &AdamConfig::beta1)
        .def_readwrite("beta2", &AdamConfig::beta2)
        .def_readwrite("eps", &AdamConfig::eps)
        .def_readwrite("weight_decay", &AdamConfig::weight_decay)
        .def_readwrite("alpha", &AdamConfig::alpha);

    py::class_<LowRankAdamState>(m, "LowRankAdamState")
        .def(py::init([](const std::string& format, int block_size) {
                 return LowRankAdamState(parse_format(format), block_size);
             }),
             py::arg("format") = "int8", py::arg("block_size") = 256)
        .def("step",
             [](LowRankAdamState& st, const FloatArray& grad, const AdamConfig& cfg) {
                 return to_numpy(st.step(to_matrix(grad), cfg));
             })
        .def_property_readonly("step_count", &LowRankAdamState::step_count);

    m.def(
        "lr_schedule",
        [](std::int64_t step, std::int64_t total, double peak, double warmup_frac,
           double min_lr_ratio) {
            LrSchedule s;
            s.peak_lr = peak;
            s.warmup_frac = warmup_frac;
            s.min_lr_ratio = min_lr_ratio;
            return lr_schedule(step, total, s);
        },
        py::arg("step"), py::arg("total_steps"), py::arg("peak_lr"),
        py::arg("warmup_frac") = 0.1, py::arg("min_lr_ratio") = 0.1);

    m.def(
        "estimate_memory",
        [](const ModelConfig& model, const std::string& method, int rank, int weight_bits,
           int state_bits, int proj_bits, int block_size) {
            MemoryBits bits{weight_bits, state_bits, proj_bits};
            const auto breakdown =
                estimate_memory(layer_shapes(model, method_from_name(method), rank), bits,
                                block_size);
            py::dict d;
            d["weights"] = breakdown.weights;
            d["optimizer_states"] = breakdown.optimizer_states;
            d["projections"] = breakdown.projections;
            d["quant_metadata"] = breakdown.quant_metadata;
            d["total_without_metadata"] = breakdown.total_without_metadata();
            d["total_with_metadata"] = breakdown.total_with_metadata();
            return d;
        },
        py::arg("model"), py::arg("method") = "qgalore", py::arg("rank") = 0,
        py::arg("weight_bits") = 8, py::arg("state_bits") = 8, py::arg("proj_bits") = 4,
        py::arg("block_size") = 256);

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_property(
            "architecture",
            [](const ModelConfig& c) {
                return c.architecture == Architecture::MLPRegressor ? "mlp-regressor"
                                                                    : "tiny-char-lm";
            },
            [](ModelConfig& c, const std::string& s) {
                if (s == "mlp-regressor") {
                    c.architecture = Architecture::MLPRegressor;
                } else if (s == "tiny-char-lm") {
                    c.architecture = Architecture::TinyCharLM;
                } else {
                    throw std::invalid_argument("unknown architecture " + s);
                }
            })
        .def_readwrite("input_dim", &ModelConfig::input_dim)
        .def_readwrite("hidden_dim", &ModelConfig::hidden_dim)
        .def_readwrite("output_dim", &ModelConfig::output_dim)
        .def_readwrite("vocab_size", &ModelConfig::vocab_size)
        .def_readwrite("embed_dim", &ModelConfig::embed_dim)
        .def_readwrite("lm_hidden", &ModelConfig::lm_hidden)
        .def_readwrite("context", &ModelConfig::context)
        .def("param_count", &ModelConfig::param_count);

    py::class_<RunConfig>(m, "RunConfig")
        .def(py::init<>())
        .def_property(
            "method", [](const RunConfig& c) { return std::string(method_name(c.method)); },
            [](RunConfig& c, const std::string& s) { c.method = method_from_name(s); })
        .def_readwrite("model", &RunConfig::model)
        .def_readwrite("adam", &RunConfig::adam)
        .def_readwrite("subspace", &RunConfig::subspace)
        .def_property(
            "rounding",
            [](const RunConfig& c) {
                return c.rounding == Rounding::Stochastic ? "stochastic" : "nearest";
            },
            [](RunConfig& c, const std::string& s) { c.rounding = parse_rounding(s); })
        .def_property(
            "weight_bits",
            [](const RunConfig& c) { return std::string(store_format_name(c.weight_format)); },
            [](RunConfig& c, const std::string& s) { c.weight_format = parse_format(s); })
        .def_property(
            "state_bits",
            [](const RunConfig& c) { return std::string(store_format_name(c.state_format)); },
            [](RunConfig& c, const std::string& s) { c.state_format = parse_format(s); })
        .def_readwrite("total_steps", &RunConfig::total_steps)
        .def_readwrite("batch_size", &RunConfig::batch_size)
        .def_readwrite("eval_every", &RunConfig::eval_every)
        .def_readwrite("seed", &RunConfig::seed)
        .def_readwrite("val_examples", &RunConfig::val_examples)
        .def_readwrite("metrics_path", &RunConfig::metrics_path)
        .def_readwrite("checkpoint_path", &RunConfig::checkpoint_path)
        .def_readwrite("resume_path", &RunConfig::resume_path)
        .def_property(
            "data_path", [](const RunConfig& c) { return c.data.path; },
            [](RunConfig& c, const std::string& s) {
                c.data.kind = DataConfig::Kind::TextFile;
                c.data.path = s;
            })
        .def_property(
            "synthetic",
            [](const RunConfig& c) {
                py::dict d;
                d["n_features"] = c.data.synthetic.n_features;
                d["n_outputs"] = c.data.synthetic.n_outputs;
                d["noise"] = c.data.synthetic.noise;
                return d;
            },
            [](RunConfig& c, const py::dict& d) {
                c.data.kind = DataConfig::Kind::Synthetic;
                if (d.contains("n_features")) {
                    c.data.synthetic.n_features = d["n_features"].cast<int>();
                }
                if (d.contains("n_outputs")) {
                    c.data.synthetic.n_outputs = d["n_outputs"].cast<int>();
                }
                if (d.contains("noise")) c.data.synthetic.noise = d["noise"].cast<double>();
            });

    m.def("run_training", [](const RunConfig& cfg) {
        RunResult result = run_training(cfg);
        py::dict d;
        d["exit_code"] = result.exit_code;
        d["error_message"] = result.error_message;
        d["svd_calls_total"] = result.svd_calls_total;
        d["final_val_loss"] = result.final_val_loss;
        d["final_train_loss"] = result.final_train_loss;
        py::list records;
        for (const MetricsRecord& r : result.records) records.append(record_to_dict(r));
        d["records"] = records;
        return d;
    });

    m.def("write_synthetic_corpus", &write_synthetic_corpus, py::arg("path"),
          py::arg("min_bytes"), py::arg("seed") = 7);

    m.attr("__version__") = "0.1.0";
}
