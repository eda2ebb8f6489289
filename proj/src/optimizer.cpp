#include "qgalore/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace qgalore {

void AdamConfig::validate() const {
    if (!(lr >= 0.0)) throw std::invalid_argument("AdamConfig: lr must be non-negative");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
        throw std::invalid_argument("AdamConfig: betas must lie in (0, 1)");
    }
    if (!(eps > 0.0)) throw std::invalid_argument("AdamConfig: eps must be positive");
    if (weight_decay < 0.0) throw std::invalid_argument("AdamConfig: weight_decay must be >= 0");
    if (alpha <= 0.0) throw std::invalid_argument("AdamConfig: alpha must be positive");
}

Matrix LowRankAdamState::step(const Matrix& grad, const AdamConfig& cfg) {
    cfg.validate();
    if (!initialized_) {
        Matrix zero(grad.rows(), grad.cols());
        m_ = TensorStore::pack(zero, format_, Rounding::NearestTiesToEven, nullptr, block_size_);
        v_ = TensorStore::pack(zero, format_, Rounding::NearestTiesToEven, nullptr, block_size_);
        initialized_ = true;
    }
    if (m_.rows() != grad.rows() || m_.cols() != grad.cols()) {
        throw std::invalid_argument("LowRankAdamState: gradient shape " + grad.shape_str() +
                                    " does not match state shape");
    }

    Matrix m = m_.unpack();
    Matrix v = v_.unpack();
    Matrix n(grad.rows(), grad.cols());

    const std::int64_t t = step_count_ + 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));

    for (std::size_t i = 0; i < grad.size(); ++i) {
        const double g = grad.data()[i];
        const double mi = cfg.beta1 * static_cast<double>(m.data()[i]) + (1.0 - cfg.beta1) * g;
        const double vi = cfg.beta2 * static_cast<double>(v.data()[i]) + (1.0 - cfg.beta2) * g * g;
        m.data()[i] = static_cast<float>(mi);
        v.data()[i] = static_cast<float>(vi);
        const double m_hat = mi / bc1;
        // Quantized v can dip a half-step below zero; clamp before the root.
        const double v_hat = std::max(vi, 0.0) / bc2;
        n.data()[i] = static_cast<float>(m_hat / (std::sqrt(v_hat) + cfg.eps));
    }

    m_ = TensorStore::pack(m, format_, Rounding::NearestTiesToEven, nullptr, block_size_);
    v_ = TensorStore::pack(v, format_, Rounding::NearestTiesToEven, nullptr, block_size_);
    step_count_ = t;
    return n;
}

void LowRankAdamState::reset() {
    m_ = TensorStore();
    v_ = TensorStore();
    step_count_ = 0;
    initialized_ = false;
}

void LowRankAdamState::restore(TensorStore m, TensorStore v, std::int64_t step_count,
                               bool initialized) {
    m_ = std::move(m);
    v_ = std::move(v);
    step_count_ = step_count;
    initialized_ = initialized;
}

void layer_step(TensorStore& weights, const Matrix& grad, ProjectionState& proj,
                LowRankAdamState& adam, const AdamConfig& cfg, std::int64_t step,
                Rounding weight_rounding, RngStream* rng, bool reset_moments_on_update) {
    cfg.validate();
    if (grad.rows() != weights.rows() || grad.cols() != weights.cols()) {
        throw std::invalid_argument("layer_step: gradient shape " + grad.shape_str() +
                                    " does not match weights");
    }

    const bool swapped = proj.maybe_update(grad, step);
    if (swapped && reset_moments_on_update) adam.reset();

    Matrix low_rank = proj.project(grad);
    Matrix direction = adam.step(low_rank, cfg);
    Matrix delta = scaled(proj.project_back(direction), -cfg.lr * cfg.alpha);
    if (cfg.weight_decay != 0.0) {
        add_scaled_inplace(delta, weights.unpack(), -cfg.lr * cfg.weight_decay);
    }
    weights.apply_update(delta, weight_rounding, rng);
}

double lr_schedule(std::int64_t step, std::int64_t total_steps, const LrSchedule& sched) {
    if (step < 0 || total_steps < 0 || step > total_steps) {
        throw std::invalid_argument("lr_schedule: step outside [0, total_steps]");
    }
    if (total_steps == 0) return sched.peak_lr;
    const double min_lr = sched.min_lr_ratio * sched.peak_lr;
    const std::int64_t warmup =
        static_cast<std::int64_t>(sched.warmup_frac * static_cast<double>(total_steps));
    if (warmup > 0 && step <= warmup) {
        return sched.peak_lr * static_cast<double>(step) / static_cast<double>(warmup);
    }
    if (step >= total_steps) return min_lr;
    const double progress = static_cast<double>(step - warmup) /
                            static_cast<double>(total_steps - warmup);
    const double cosine = 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
    return min_lr + (sched.peak_lr - min_lr) * cosine;
}

} // namespace qgalore
