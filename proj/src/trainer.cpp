#include "qgalore/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <optional>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "qgalore/checkpoint.hpp"

namespace qgalore {

const char* method_name(Method m) {
    switch (m) {
        case Method::FullAdam: return "full-adam";
        case Method::GaLore: return "galore";
        case Method::QGaLore: return "qgalore";
    }
    return "?";
}

Method method_from_name(const std::string& name) {
    if (name == "full-adam" || name == "fulladam" || name == "full") return Method::FullAdam;
    if (name == "galore") return Method::GaLore;
    if (name == "qgalore" || name == "q-galore") return Method::QGaLore;
    throw std::invalid_argument("unknown method: " + name);
}

StoreFormat store_format_from_name(const std::string& name) {
    if (name == "float" || name == "float32" || name == "fp32" || name == "32" || name == "16") {
        // 16 is accepted as the float passthrough alias; high precision here
        // is a 32-bit float.
        return StoreFormat::Float32;
    }
    if (name == "int8" || name == "8") return StoreFormat::Int8;
    if (name == "int4" || name == "4") return StoreFormat::Int4;
    throw std::invalid_argument("unknown storage format: " + name);
}

Rounding rounding_from_name(const std::string& name) {
    if (name == "stochastic" || name == "sr") return Rounding::Stochastic;
    if (name == "nearest" || name == "rtn") return Rounding::NearestTiesToEven;
    throw std::invalid_argument("unknown rounding mode: " + name);
}

void RunConfig::canonicalize() {
    if (method == Method::FullAdam || method == Method::GaLore) {
        // Baselines carry no quantization anywhere.
        weight_format = StoreFormat::Float32;
        state_format = StoreFormat::Float32;
        subspace.projection_format = StoreFormat::Float32;
        rounding = Rounding::NearestTiesToEven;
    }
    if (method == Method::FullAdam) subspace.adaptive = false;
    adam.validate();
    subspace.validate();
    if (model.architecture != Architecture::TinyCharLM || model.vocab_size > 0) {
        // LM vocabulary size comes from the dataset; the trainer re-validates
        // once it is known.
        model.validate();
    }
    if (total_steps < 0) throw std::invalid_argument("RunConfig: total_steps must be >= 0");
    if (stop_after < 0) throw std::invalid_argument("RunConfig: stop_after must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("RunConfig: batch_size must be >= 1");
    if (eval_every < 1) throw std::invalid_argument("RunConfig: eval_every must be >= 1");
    if (val_examples < 1) throw std::invalid_argument("RunConfig: val_examples must be >= 1");
    if (grad_clip < 0.0) throw std::invalid_argument("RunConfig: grad_clip must be >= 0");
    if (data.kind == DataConfig::Kind::TextFile && data.path.empty()) {
        throw std::invalid_argument("RunConfig: text data requires a path");
    }
    if (model.architecture == Architecture::TinyCharLM &&
        data.kind != DataConfig::Kind::TextFile) {
        throw std::invalid_argument("RunConfig: TinyCharLM requires text data");
    }
    if (model.architecture == Architecture::MLPRegressor &&
        data.kind != DataConfig::Kind::Synthetic) {
        throw std::invalid_argument("RunConfig: MLPRegressor requires synthetic data");
    }
    schedule.peak_lr = adam.lr;
}

std::string metrics_to_json(const MetricsRecord& r) {
    nlohmann::ordered_json j;
    j["step"] = r.step;
    j["train_loss"] = r.train_loss;
    j["val_loss"] = r.val_loss;
    j["lr"] = r.lr;
    j["svd_calls_total"] = r.svd_calls_total;
    nlohmann::ordered_json layers = nlohmann::ordered_json::array();
    for (const PerLayerMetric& pl : r.per_layer) {
        nlohmann::ordered_json e;
        e["layer_id"] = pl.layer_id;
        e["interval"] = pl.interval;
        e["last_similarity"] = pl.last_similarity;
        layers.push_back(std::move(e));
    }
    j["per_layer"] = std::move(layers);
    j["wallclock_ms"] = r.wallclock_ms;
    j["estimated_memory_bytes"] = r.estimated_memory_bytes;
    return j.dump();
}

std::vector<LayerShape> layer_shapes(const ModelConfig& model, Method method,
                                     int requested_rank) {
    ModelConfig resolved = model;
    resolved.validate();
    std::vector<LayerShape> shapes;
    std::vector<ParamInfo> params;
    if (resolved.architecture == Architecture::MLPRegressor) {
        if (resolved.hidden_dim > 0) {
            params = {
                {"mlp.out.weight", ParamKind::ProjectedMatrix, resolved.output_dim,
                 resolved.hidden_dim},
                {"mlp.out.bias", ParamKind::DenseAux, 1, resolved.output_dim},
                {"mlp.hidden.weight", ParamKind::ProjectedMatrix, resolved.hidden_dim,
                 resolved.input_dim},
                {"mlp.hidden.bias", ParamKind::DenseAux, 1, resolved.hidden_dim},
            };
        } else {
            params = {
                {"mlp.out.weight", ParamKind::ProjectedMatrix, resolved.output_dim,
                 resolved.input_dim},
                {"mlp.out.bias", ParamKind::DenseAux, 1, resolved.output_dim},
            };
        }
    } else {
        const int concat = resolved.context * resolved.embed_dim;
        params = {
            {"lm.head.weight", ParamKind::ProjectedMatrix, resolved.vocab_size,
             resolved.lm_hidden},
            {"lm.head.bias", ParamKind::DenseAux, 1, resolved.vocab_size},
            {"lm.block2.weight", ParamKind::ProjectedMatrix, resolved.lm_hidden,
             resolved.lm_hidden},
            {"lm.block2.bias", ParamKind::DenseAux, 1, resolved.lm_hidden},
            {"lm.block1.weight", ParamKind::ProjectedMatrix, resolved.lm_hidden, concat},
            {"lm.block1.bias", ParamKind::DenseAux, 1, resolved.lm_hidden},
            {"lm.embedding", ParamKind::DenseAux, resolved.vocab_size, resolved.embed_dim},
        };
    }
    for (const ParamInfo& p : params) {
        LayerShape s;
        s.name = p.name;
        s.rows = p.rows;
        s.cols = p.cols;
        s.projected = (p.kind == ParamKind::ProjectedMatrix) && method != Method::FullAdam;
        if (s.projected) {
            const int min_dim = std::min(p.rows, p.cols);
            s.rank = requested_rank > 0 ? std::min(requested_rank, min_dim)
                                        : default_rank(p.rows, p.cols);
        }
        shapes.push_back(std::move(s));
    }
    return shapes;
}

MemoryBits memory_bits_for(const RunConfig& cfg) {
    MemoryBits bits;
    bits.weight_bits = store_bits(cfg.weight_format);
    bits.state_bits = store_bits(cfg.state_format);
    bits.proj_bits = store_bits(cfg.subspace.projection_format);
    return bits;
}

namespace {

// u64 / f64 scalars ride through the tensor container as the raw bytes of a
// two-element f32 record, which round-trips bit-exactly.
TensorRecord record_from_u64(const std::string& name, std::uint64_t value) {
    TensorRecord r;
    r.name = name;
    r.dtype = 0;
    r.dims = {2};
    r.payload.resize(8);
    std::memcpy(r.payload.data(), &value, 8);
    return r;
}

std::uint64_t u64_from_record(const TensorRecord& r) {
    if (r.dtype != 0 || r.element_count() != 2) {
        throw CheckpointError("tensor " + r.name + " is not a packed u64");
    }
    std::uint64_t v;
    std::memcpy(&v, r.payload.data(), 8);
    return v;
}

TensorRecord record_from_f64(const std::string& name, double value) {
    std::uint64_t bits;
    std::memcpy(&bits, &value, 8);
    return record_from_u64(name, bits);
}

double f64_from_record(const TensorRecord& r) {
    const std::uint64_t bits = u64_from_record(r);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

// Doubles ride as raw bytes in a 2n-element f32 record (bit-exact).
TensorRecord record_from_doubles(const std::string& name, const std::vector<double>& values) {
    TensorRecord r;
    r.name = name;
    r.dtype = 0;
    r.dims = {static_cast<std::uint32_t>(2 * values.size())};
    r.payload.resize(values.size() * 8);
    if (!values.empty()) std::memcpy(r.payload.data(), values.data(), r.payload.size());
    return r;
}

std::vector<double> doubles_from_record(const TensorRecord& r) {
    if (r.dtype != 0 || r.element_count() % 2 != 0) {
        throw CheckpointError("tensor " + r.name + " is not a packed f64 array");
    }
    std::vector<double> out(r.element_count() / 2);
    if (!out.empty()) std::memcpy(out.data(), r.payload.data(), r.payload.size());
    return out;
}

TensorRecord record_from_store(const std::string& name, const TensorStore& store) {
    if (store.format() == StoreFormat::Float32) {
        return TensorRecord::from_matrix(name, store.dense());
    }
    return TensorRecord::from_quantized(name, store.quantized_tensor());
}

TensorStore store_from_record(const TensorRecord& r) {
    if (r.dtype == 0) return TensorStore::from_dense(r.to_matrix());
    return TensorStore::from_quantized(r.to_quantized());
}

class Trainer {
public:
    explicit Trainer(RunConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.canonicalize();
        if (cfg_.data.kind == DataConfig::Kind::TextFile) {
            text_ = TextDataset::load(cfg_.data.path);
            cfg_.model.vocab_size = text_->vocab_size();
        } else {
            synth_ = SyntheticDataset::make(cfg_.data.synthetic, cfg_.seed);
            cfg_.model.input_dim = cfg_.data.synthetic.n_features;
            cfg_.model.output_dim = cfg_.data.synthetic.n_outputs;
        }
        cfg_.model.validate();
        model_ = build_model(cfg_.model, cfg_.weight_format, cfg_.seed);

        const auto& params = model_->params();
        proj_.resize(params.size());
        adam_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            const ParamInfo& p = params[i];
            if (p.kind == ParamKind::ProjectedMatrix && cfg_.method != Method::FullAdam) {
                SubspaceOptions opts = cfg_.subspace;
                const int min_dim = std::min(p.rows, p.cols);
                if (opts.rank == 0) {
                    opts.rank = default_rank(p.rows, p.cols);
                } else if (opts.rank > min_dim) {
                    opts.rank = min_dim;
                }
                proj_[i] = ProjectionState(p.rows, p.cols, opts);
                adam_[i] = LowRankAdamState(cfg_.state_format, cfg_.subspace.block_size);
            } else {
                adam_[i] = LowRankAdamState(cfg_.state_format, cfg_.subspace.block_size);
            }
        }

        estimated_memory_ =
            estimate_memory(layer_shapes(cfg_.model, cfg_.method, cfg_.subspace.rank),
                            memory_bits_for(cfg_))
                .total_with_metadata();

        if (!cfg_.resume_path.empty()) load(cfg_.resume_path);
    }

    RunResult run() {
        RunResult result;
        std::ofstream metrics_out;
        if (!cfg_.metrics_path.empty()) {
            metrics_out.open(cfg_.metrics_path, start_step_ > 0 ? std::ios::app : std::ios::trunc);
            if (!metrics_out) {
                result.exit_code = 2;
                result.error_message = "cannot open metrics path " + cfg_.metrics_path;
                return result;
            }
        }
        auto emit = [&](const MetricsRecord& r) {
            result.records.push_back(r);
            if (metrics_out.is_open()) metrics_out << metrics_to_json(r) << "\n";
        };

        const auto t0 = std::chrono::steady_clock::now();
        const std::int64_t end = end_step();
        try {
            for (std::int64_t step = start_step_; step < end; ++step) {
                if (step % cfg_.eval_every == 0) emit(make_record(step, t0));
                do_step(step);
            }
            emit(make_record(end, t0));
        } catch (const DivergenceError& e) {
            result.exit_code = 1;
            result.error_message = e.what();
            if (metrics_out.is_open()) {
                nlohmann::ordered_json j;
                j["error"] = e.what();
                j["step"] = last_step_;
                metrics_out << j.dump() << "\n";
            }
            return result;
        }

        if (!cfg_.checkpoint_path.empty()) save(cfg_.checkpoint_path);
        result.svd_calls_total = svd_calls_total();
        result.final_val_loss = result.records.back().val_loss;
        result.final_train_loss = result.records.back().train_loss;
        return result;
    }

private:
    std::int64_t end_step() const {
        return cfg_.stop_after > 0 ? std::min(cfg_.stop_after, cfg_.total_steps)
                                   : cfg_.total_steps;
    }

    Batch train_batch(std::int64_t step) const {
        if (text_.has_value()) {
            return text_->train_batch(cfg_.batch_size, cfg_.model.context, cfg_.seed, step);
        }
        return synth_->train_batch(cfg_.batch_size, step);
    }

    double eval_val_loss() {
        if (synth_.has_value()) {
            return model_->evaluate(synth_->val_set(cfg_.val_examples));
        }
        const int windows = text_->val_window_count(cfg_.model.context, cfg_.val_examples);
        if (windows == 0) {
            throw std::runtime_error("validation split shorter than one context window");
        }
        double total = 0.0;
        int seen = 0;
        for (int begin = 0; begin < windows; begin += cfg_.batch_size) {
            Batch b = text_->val_batch(cfg_.model.context, cfg_.val_examples,
                                       begin / cfg_.batch_size, cfg_.batch_size);
            total += model_->evaluate(b) * b.size;
            seen += b.size;
        }
        return total / seen;
    }

    std::int64_t svd_calls_total() const {
        std::int64_t total = 0;
        for (const ProjectionState& p : proj_) {
            if (p.layer_rows() > 0) total += p.svd_count();
        }
        return total;
    }

    MetricsRecord make_record(std::int64_t step, std::chrono::steady_clock::time_point t0) {
        MetricsRecord r;
        r.step = step;
        if (step == 0) {
            last_train_loss_ = model_->evaluate(train_batch(0));
        }
        r.train_loss = last_train_loss_;
        r.val_loss = eval_val_loss();
        r.lr = lr_schedule(step, cfg_.total_steps, cfg_.schedule);
        r.svd_calls_total = svd_calls_total();
        int layer_id = 0;
        for (std::size_t i = 0; i < proj_.size(); ++i) {
            if (proj_[i].layer_rows() == 0) continue;
            PerLayerMetric pl;
            pl.layer_id = layer_id++;
            pl.interval = proj_[i].interval();
            pl.last_similarity = proj_[i].last_similarity();
            r.per_layer.push_back(pl);
        }
        r.wallclock_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();
        r.estimated_memory_bytes = estimated_memory_;
        return r;
    }

    void do_step(std::int64_t step) {
        last_step_ = step;
        AdamConfig step_cfg = cfg_.adam;
        step_cfg.lr = lr_schedule(step, cfg_.total_steps, cfg_.schedule);

        Batch batch = train_batch(step);
        const auto& params = model_->params();
        last_train_loss_ = model_->forward_backward(batch, [&](int idx, const Matrix& grad) {
            const Matrix* g = &grad;
            Matrix clipped;
            if (cfg_.grad_clip > 0.0) {
                const double norm = frobenius_norm(grad);
                if (norm > cfg_.grad_clip) {
                    clipped = scaled(grad, cfg_.grad_clip / norm);
                    g = &clipped;
                }
            }
            const ParamInfo& p = params[idx];
            if (p.kind == ParamKind::ProjectedMatrix && cfg_.method != Method::FullAdam) {
                RngStream rng = RngStream::derive(cfg_.seed, RngPurpose::WeightUpdate,
                                                  static_cast<std::uint64_t>(idx),
                                                  static_cast<std::uint64_t>(step));
                layer_step(model_->matrix_store(idx), *g, proj_[idx], adam_[idx], step_cfg, step,
                           cfg_.rounding, &rng, cfg_.reset_moments_on_update);
                return;
            }
            // Dense Adam path: full-rank matrices under FullAdam and all
            // bias/embedding parameters. Weight decay stays on true weight
            // matrices only.
            Matrix direction = adam_[idx].step(*g, step_cfg);
            Matrix delta = scaled(direction, -step_cfg.lr);
            if (p.kind == ParamKind::ProjectedMatrix && step_cfg.weight_decay != 0.0) {
                add_scaled_inplace(delta, model_->matrix_store(idx).unpack(),
                                   -step_cfg.lr * step_cfg.weight_decay);
            }
            if (p.kind == ParamKind::ProjectedMatrix) {
                RngStream rng = RngStream::derive(cfg_.seed, RngPurpose::WeightUpdate,
                                                  static_cast<std::uint64_t>(idx),
                                                  static_cast<std::uint64_t>(step));
                model_->matrix_store(idx).apply_update(delta, cfg_.rounding, &rng);
            } else {
                add_scaled_inplace(model_->dense_param(idx), delta, 1.0);
            }
        });
    }

    void save(const std::string& path) const {
        std::vector<TensorRecord> records;
        records.push_back(record_from_u64("meta/seed", cfg_.seed));
        records.push_back(
            record_from_u64("meta/steps_completed", static_cast<std::uint64_t>(end_step())));
        records.push_back(record_from_f64("meta/last_train_loss", last_train_loss_));

        const auto& params = model_->params();
        for (std::size_t i = 0; i < params.size(); ++i) {
            const ParamInfo& p = params[i];
            const std::string base = "param/" + p.name;
            if (p.kind == ParamKind::ProjectedMatrix) {
                records.push_back(record_from_store(base, model_->matrix_store(i)));
            } else {
                records.push_back(TensorRecord::from_matrix(base, model_->dense_param(i)));
            }
            if (adam_[i].initialized()) {
                records.push_back(record_from_store("adam/" + p.name + "/m", adam_[i].m()));
                records.push_back(record_from_store("adam/" + p.name + "/v", adam_[i].v()));
                records.push_back(record_from_u64("adam/" + p.name + "/t",
                                                  static_cast<std::uint64_t>(adam_[i].step_count())));
            }
            if (proj_[i].initialized()) {
                const std::string pb = "proj/" + p.name;
                records.push_back(record_from_store(pb + "/P", proj_[i].projection()));
                records.push_back(
                    TensorRecord::from_matrix(pb + "/prev", proj_[i].previous_dense()));
                records.push_back(record_from_u64(pb + "/interval",
                                                  static_cast<std::uint64_t>(proj_[i].interval())));
                records.push_back(record_from_u64(
                    pb + "/svd_count", static_cast<std::uint64_t>(proj_[i].svd_count())));
                records.push_back(record_from_u64(
                    pb + "/last_update_step",
                    static_cast<std::uint64_t>(proj_[i].last_update_step())));
                records.push_back(
                    record_from_f64(pb + "/last_similarity", proj_[i].last_similarity()));
                records.push_back(record_from_doubles(pb + "/history", proj_[i].history()));
            }
        }
        save_checkpoint(path, records);
    }

    void load(const std::string& path) {
        std::vector<TensorRecord> records = load_checkpoint(path);
        auto find = [&](const std::string& name) -> const TensorRecord* {
            for (const TensorRecord& r : records) {
                if (r.name == name) return &r;
            }
            return nullptr;
        };
        auto require = [&](const std::string& name) -> const TensorRecord& {
            const TensorRecord* r = find(name);
            if (r == nullptr) throw CheckpointError("checkpoint missing tensor " + name);
            return *r;
        };

        if (u64_from_record(require("meta/seed")) != cfg_.seed) {
            throw CheckpointError("checkpoint seed does not match the run configuration");
        }
        start_step_ = static_cast<std::int64_t>(u64_from_record(require("meta/steps_completed")));
        last_train_loss_ = f64_from_record(require("meta/last_train_loss"));

        const auto& params = model_->params();
        for (std::size_t i = 0; i < params.size(); ++i) {
            const ParamInfo& p = params[i];
            const std::string base = "param/" + p.name;
            if (p.kind == ParamKind::ProjectedMatrix) {
                model_->matrix_store(static_cast<int>(i)) = store_from_record(require(base));
            } else {
                model_->dense_param(static_cast<int>(i)) = require(base).to_matrix();
            }
            if (const TensorRecord* m = find("adam/" + p.name + "/m")) {
                adam_[i].restore(store_from_record(*m),
                                 store_from_record(require("adam/" + p.name + "/v")),
                                 static_cast<std::int64_t>(
                                     u64_from_record(require("adam/" + p.name + "/t"))),
                                 true);
            }
            if (const TensorRecord* pt = find("proj/" + p.name + "/P")) {
                const std::string pb = "proj/" + p.name;
                proj_[i].restore(
                    store_from_record(*pt), require(pb + "/prev").to_matrix(),
                    static_cast<std::int64_t>(u64_from_record(require(pb + "/interval"))),
                    doubles_from_record(require(pb + "/history")),
                    static_cast<std::int64_t>(u64_from_record(require(pb + "/svd_count"))),
                    static_cast<std::int64_t>(u64_from_record(require(pb + "/last_update_step"))),
                    f64_from_record(require(pb + "/last_similarity")), true);
            }
        }
    }

    RunConfig cfg_;
    std::optional<TextDataset> text_;
    std::optional<SyntheticDataset> synth_;
    std::unique_ptr<Model> model_;
    std::vector<ProjectionState> proj_;
    std::vector<LowRankAdamState> adam_;
    std::uint64_t estimated_memory_ = 0;
    std::int64_t start_step_ = 0;
    std::int64_t last_step_ = 0;
    double last_train_loss_ = 0.0;
};

} // namespace

RunResult run_training(const RunConfig& cfg) {
    try {
        Trainer trainer(cfg);
        return trainer.run();
    } catch (const DivergenceError& e) {
        RunResult r;
        r.exit_code = 1;
        r.error_message = e.what();
        return r;
    }
}

} // namespace qgalore
