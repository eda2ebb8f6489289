#include "qgalore/subspace.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>

#include "qgalore/svd.hpp"

namespace qgalore {

void SubspaceOptions::validate() const {
    if (rank < 0) throw std::invalid_argument("SubspaceOptions: rank must be non-negative");
    if (base_interval < 1) {
        throw std::invalid_argument("SubspaceOptions: base_interval must be >= 1");
    }
    if (window < 1) throw std::invalid_argument("SubspaceOptions: window must be >= 1");
    if (threshold < 0.0 || threshold > 1.0) {
        throw std::invalid_argument("SubspaceOptions: threshold must lie in [0, 1]");
    }
    if (max_interval < 0) {
        throw std::invalid_argument("SubspaceOptions: max_interval must be >= 0");
    }
    if (block_size < 1) throw std::invalid_argument("SubspaceOptions: block_size must be >= 1");
}

ProjectionSide projection_side(int rows, int cols) {
    return rows <= cols ? ProjectionSide::Left : ProjectionSide::Right;
}

int default_rank(int rows, int cols) {
    return std::max(1, std::min(rows, cols) / 4);
}

Matrix compute_projection(const Matrix& grad, int rank) {
    if (rank < 1 || rank > std::min(grad.rows(), grad.cols())) {
        throw std::invalid_argument("compute_projection: rank " + std::to_string(rank) +
                                    " invalid for gradient " + grad.shape_str());
    }
    if (is_all_zero(grad)) {
        throw std::invalid_argument("compute_projection: gradient is all-zero");
    }
    SvdResult f = svd(grad);
    const Matrix& source = (projection_side(grad.rows(), grad.cols()) == ProjectionSide::Left)
                               ? f.u
                               : f.v;
    Matrix p(source.rows(), rank);
    for (int i = 0; i < source.rows(); ++i) {
        for (int j = 0; j < rank; ++j) p.at(i, j) = source.at(i, j);
    }
    return p;
}

ProjectionState::ProjectionState(int layer_rows, int layer_cols, SubspaceOptions opts)
    : layer_rows_(layer_rows), layer_cols_(layer_cols), opts_(opts) {
    if (layer_rows < 1 || layer_cols < 1) {
        throw std::invalid_argument("ProjectionState: layer dimensions must be positive");
    }
    if (opts_.rank == 0) opts_.rank = default_rank(layer_rows, layer_cols);
    opts_.validate();
    if (opts_.rank > std::min(layer_rows, layer_cols)) {
        throw std::invalid_argument("ProjectionState: rank " + std::to_string(opts_.rank) +
                                    " exceeds min layer dimension " +
                                    std::to_string(std::min(layer_rows, layer_cols)));
    }
    side_ = projection_side(layer_rows, layer_cols);
    interval_ = opts_.base_interval;
}

ProjectionState ProjectionState::identity_hook(int dim) {
    SubspaceOptions opts;
    opts.rank = dim;
    opts.base_interval = 1;
    opts.adaptive = false;
    opts.projection_format = StoreFormat::Float32;
    ProjectionState st(dim, dim, opts);
    st.proj_ = TensorStore::from_dense(Matrix::identity(dim));
    st.prev_dense_ = Matrix::identity(dim);
    st.interval_ = std::numeric_limits<std::int64_t>::max() / 2;
    st.initialized_ = true;
    return st;
}

bool ProjectionState::maybe_update(const Matrix& grad, std::int64_t step) {
    if (grad.rows() != layer_rows_ || grad.cols() != layer_cols_) {
        throw std::invalid_argument("maybe_update: gradient shape " + grad.shape_str() +
                                    " does not match layer " + std::to_string(layer_rows_) + "x" +
                                    std::to_string(layer_cols_));
    }
    if (initialized_ && (step - last_update_step_) < interval_) {
        return false;
    }
    if (is_all_zero(grad)) {
        // Nothing to decompose; an initialized state keeps its projection and
        // retries on the next step, an uninitialized one cannot proceed.
        if (initialized_) return false;
        throw std::invalid_argument("maybe_update: all-zero gradient before first projection");
    }

    Matrix p_new = compute_projection(grad, opts_.rank);

    if (initialized_) {
        Matrix aligned = sign_align(prev_dense_, p_new);
        double sim = (opts_.metric == SimilarityMetric::FlattenedCosine)
                         ? cosine_similarity_flat(prev_dense_, aligned)
                         : mean_abs_column_cosine(prev_dense_, aligned);
        last_similarity_ = sim;
        history_.push_back(sim);
        if (history_.size() > static_cast<std::size_t>(opts_.window)) {
            history_.erase(history_.begin());
        }
        if (opts_.adaptive && history_.size() == static_cast<std::size_t>(opts_.window)) {
            bool converged = std::all_of(history_.begin(), history_.end(),
                                         [&](double s) { return s >= opts_.threshold; });
            if (converged) {
                std::int64_t doubled = interval_ * 2;
                if (opts_.max_interval > 0 && doubled > opts_.max_interval) {
                    doubled = opts_.max_interval;
                }
                interval_ = doubled;
                history_.clear();
            }
        }
    }

    prev_dense_ = p_new;
    proj_ = TensorStore::pack(p_new, opts_.projection_format, Rounding::NearestTiesToEven, nullptr,
                              opts_.block_size);
    svd_count_ += 1;
    last_update_step_ = step;
    initialized_ = true;
    return true;
}

Matrix ProjectionState::project(const Matrix& grad) const {
    if (!initialized_) {
        throw std::logic_error("project: projection state not initialized");
    }
    Matrix p = proj_.unpack();
    if (side_ == ProjectionSide::Left) {
        return matmul(transpose(p), grad); // r x cols
    }
    return matmul(grad, p); // rows x r
}

Matrix ProjectionState::project_back(const Matrix& low_rank) const {
    if (!initialized_) {
        throw std::logic_error("project_back: projection state not initialized");
    }
    Matrix p = proj_.unpack();
    if (side_ == ProjectionSide::Left) {
        if (low_rank.rows() != opts_.rank || low_rank.cols() != layer_cols_) {
            throw std::invalid_argument("project_back: shape " + low_rank.shape_str() +
                                        " does not match rank x cols");
        }
        return matmul(p, low_rank);
    }
    if (low_rank.rows() != layer_rows_ || low_rank.cols() != opts_.rank) {
        throw std::invalid_argument("project_back: shape " + low_rank.shape_str() +
                                    " does not match rows x rank");
    }
    return matmul(low_rank, transpose(p));
}

void ProjectionState::restore(TensorStore proj, Matrix prev_dense, std::int64_t interval,
                              std::vector<double> history, std::int64_t svd_count,
                              std::int64_t last_update_step, double last_similarity,
                              bool initialized) {
    proj_ = std::move(proj);
    prev_dense_ = std::move(prev_dense);
    interval_ = interval;
    history_ = std::move(history);
    svd_count_ = svd_count;
    last_update_step_ = last_update_step;
    last_similarity_ = last_similarity;
    initialized_ = initialized;
}

} // namespace qgalore
