#pragma once

#include <cstdint>

#include "qgalore/matrix.hpp"
#include "qgalore/subspace.hpp"
#include "qgalore/tensor_store.hpp"

namespace qgalore {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    double alpha = 0.25; // scale on the back-projected low-rank update

    void validate() const;
};

// Adam first/second moments held in a TensorStore (Int8 for the quantized
// optimizer, Float32 passthrough otherwise). Shapes follow the first gradient
// seen; moments start at zero.
class LowRankAdamState {
public:
    LowRankAdamState() = default;
    explicit LowRankAdamState(StoreFormat format, int block_size = 256)
        : format_(format), block_size_(block_size) {}

    // m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2; bias-corrected
    // N = m_hat / (sqrt(v_hat) + eps). Moments are requantized (Nearest)
    // after every step.
    Matrix step(const Matrix& grad, const AdamConfig& cfg);

    void reset();
    bool initialized() const { return initialized_; }
    std::int64_t step_count() const { return step_count_; }
    StoreFormat format() const { return format_; }
    const TensorStore& m() const { return m_; }
    const TensorStore& v() const { return v_; }

    void restore(TensorStore m, TensorStore v, std::int64_t step_count, bool initialized);

private:
    StoreFormat format_ = StoreFormat::Int8;
    int block_size_ = 256;
    TensorStore m_;
    TensorStore v_;
    std::int64_t step_count_ = 0;
    bool initialized_ = false;
};

// One fused Q-GaLore layer update, in order: refresh the projection if due,
// project the gradient, run low-rank Adam, back-project scaled by alpha, add
// decoupled weight decay, and write the weights back through the configured
// rounding. The gradient is consumed here and not retained by any state.
// Weights are left untouched if any stage throws.
void layer_step(TensorStore& weights, const Matrix& grad, ProjectionState& proj,
                LowRankAdamState& adam, const AdamConfig& cfg, std::int64_t step,
                Rounding weight_rounding, RngStream* rng, bool reset_moments_on_update = false);

struct LrSchedule {
    double peak_lr = 1e-3;
    double warmup_frac = 0.1;
    double min_lr_ratio = 0.1;
};

// Linear warmup to peak over the first warmup_frac of steps, then cosine
// decay to min_lr_ratio * peak at total_steps.
double lr_schedule(std::int64_t step, std::int64_t total_steps, const LrSchedule& sched);

} // namespace qgalore
