#pragma once

#include <cstdint>
#include <vector>

#include "qgalore/matrix.hpp"
#include "qgalore/tensor_store.hpp"

namespace qgalore {

enum class ProjectionSide { Left, Right };

enum class SimilarityMetric {
    FlattenedCosine,      // cosine of vec(P_prev), vec(sign_align(P_prev, P_new))
    MeanAbsColumnCosine,  // mean |cos| over matched columns
};

struct SubspaceOptions {
    int rank = 0;                    // 0 -> quarter of the projected dimension
    std::int64_t base_interval = 200;
    int window = 3;                  // k
    double threshold = 0.4;          // tau
    bool adaptive = true;
    std::int64_t max_interval = 0;   // 0 -> uncapped
    StoreFormat projection_format = StoreFormat::Int4;
    SimilarityMetric metric = SimilarityMetric::FlattenedCosine;
    int block_size = 256;

    void validate() const;
};

ProjectionSide projection_side(int rows, int cols);
int default_rank(int rows, int cols);

// Top-r singular vectors of the gradient: first r columns of U when
// rows <= cols, else first r columns of V. Throws on all-zero input.
Matrix compute_projection(const Matrix& grad, int rank);

// Per-layer gradient subspace: the quantized projection matrix, the adaptive
// SVD interval, and the similarity history that drives interval doubling.
class ProjectionState {
public:
    ProjectionState() = default;
    ProjectionState(int layer_rows, int layer_cols, SubspaceOptions opts);

    // Test hook: a fixed identity projection (float store) that never
    // recomputes. Not reachable from any run configuration.
    static ProjectionState identity_hook(int dim);

    // Recomputes the projection when the interval has elapsed (always on the
    // first call). Pushes the similarity between the previous and the
    // sign-aligned new projection; once `window` consecutive similarities
    // reach `threshold`, doubles the interval and clears the history.
    // Returns whether a recomputation happened.
    bool maybe_update(const Matrix& grad, std::int64_t step);

    // Left: P^T G (r x cols); Right: G P (rows x r).
    Matrix project(const Matrix& grad) const;
    // Left: P N (rows x cols); Right: N P^T.
    Matrix project_back(const Matrix& low_rank) const;

    bool initialized() const { return initialized_; }
    ProjectionSide side() const { return side_; }
    int rank() const { return opts_.rank; }
    std::int64_t interval() const { return interval_; }
    std::int64_t svd_count() const { return svd_count_; }
    std::int64_t last_update_step() const { return last_update_step_; }
    double last_similarity() const { return last_similarity_; }
    const std::vector<double>& history() const { return history_; }
    const SubspaceOptions& options() const { return opts_; }
    const TensorStore& projection() const { return proj_; }
    const Matrix& previous_dense() const { return prev_dense_; }
    int layer_rows() const { return layer_rows_; }
    int layer_cols() const { return layer_cols_; }

    // Checkpoint restore.
    void restore(TensorStore proj, Matrix prev_dense, std::int64_t interval,
                 std::vector<double> history, std::int64_t svd_count,
                 std::int64_t last_update_step, double last_similarity, bool initialized);

private:
    int layer_rows_ = 0;
    int layer_cols_ = 0;
    SubspaceOptions opts_;
    ProjectionSide side_ = ProjectionSide::Left;
    TensorStore proj_;
    Matrix prev_dense_;
    std::vector<double> history_;
    std::int64_t interval_ = 1;
    std::int64_t svd_count_ = 0;
    std::int64_t last_update_step_ = 0;
    double last_similarity_ = 0.0;
    bool initialized_ = false;
};

} // namespace qgalore
