#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qgalore/data.hpp"
#include "qgalore/memory.hpp"
#include "qgalore/model.hpp"
#include "qgalore/optimizer.hpp"
#include "qgalore/subspace.hpp"

namespace qgalore {

enum class Method { FullAdam, GaLore, QGaLore };

const char* method_name(Method m);
Method method_from_name(const std::string& name);
StoreFormat store_format_from_name(const std::string& name);
Rounding rounding_from_name(const std::string& name);

struct DataConfig {
    enum class Kind { Synthetic, TextFile };
    Kind kind = Kind::Synthetic;
    SyntheticSpec synthetic;
    std::string path;
};

struct RunConfig {
    Method method = Method::QGaLore;
    ModelConfig model;
    AdamConfig adam; // adam.lr is the schedule's peak learning rate
    LrSchedule schedule;
    SubspaceOptions subspace;
    Rounding rounding = Rounding::Stochastic;
    StoreFormat weight_format = StoreFormat::Int8;
    StoreFormat state_format = StoreFormat::Int8;
    std::int64_t total_steps = 1000;
    // Stop early at this step while keeping the schedule horizon at
    // total_steps (0 = run to completion). Checkpoints written here resume
    // bit-exactly into the same horizon.
    std::int64_t stop_after = 0;
    int batch_size = 16;
    std::int64_t eval_every = 100;
    std::uint64_t seed = 0;
    DataConfig data;
    bool reset_moments_on_update = false;
    double grad_clip = 0.0; // per-layer global-norm clip; 0 disables
    int val_examples = 384;
    std::string metrics_path;
    std::string checkpoint_path;
    std::string resume_path;

    // Applies the method's storage rules (baselines carry no quantization)
    // and validates every field.
    void canonicalize();
};

struct PerLayerMetric {
    int layer_id = 0;
    std::int64_t interval = 0;
    double last_similarity = 0.0;
};

struct MetricsRecord {
    std::int64_t step = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
    std::int64_t svd_calls_total = 0;
    std::vector<PerLayerMetric> per_layer;
    double wallclock_ms = 0.0;
    std::uint64_t estimated_memory_bytes = 0;
};

// One JSONL line with a fixed key order; identical records (wallclock aside)
// serialize to identical bytes.
std::string metrics_to_json(const MetricsRecord& record);

struct RunResult {
    int exit_code = 0;
    std::vector<MetricsRecord> records;
    std::string error_message;
    std::int64_t svd_calls_total = 0;
    double final_val_loss = 0.0;
    double final_train_loss = 0.0;
};

// Deterministic training loop: same config and seed give bit-identical
// metrics streams (wallclock excluded). Returns exit code 1 with a
// diagnostic on NaN divergence.
RunResult run_training(const RunConfig& cfg);

// Layer table for the memory estimator, with ranks resolved per layer.
std::vector<LayerShape> layer_shapes(const ModelConfig& model, Method method, int requested_rank);
MemoryBits memory_bits_for(const RunConfig& cfg);

} // namespace qgalore
