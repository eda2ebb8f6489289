#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "qgalore/rng.hpp"

namespace qgalore {

// Dense row-major float32 matrix. Reductions (dot products, norms, matmul
// accumulation) run in 64-bit and round once at the end.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols);

    static Matrix from_data(int rows, int cols, std::vector<float> data);
    static Matrix identity(int n);
    static Matrix gaussian(int rows, int cols, RngStream& rng, float stddev = 1.0f);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    float& at(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    float at(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::vector<float>& storage() { return data_; }
    const std::vector<float>& storage() const { return data_; }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    std::string shape_str() const;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<float> data_;
};

// C = A * B with 64-bit accumulation and a fixed summation order (ascending k
// for every output element), so results are bit-identical across runs and
// thread counts.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);

Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix scaled(const Matrix& m, double factor);
// dst += factor * src
void add_scaled_inplace(Matrix& dst, const Matrix& src, double factor);

double frobenius_norm(const Matrix& m);
double max_abs(const Matrix& m);
double max_abs_diff(const Matrix& a, const Matrix& b);
bool all_finite(const Matrix& m);
bool is_all_zero(const Matrix& m);

// <vec(a), vec(b)> / (||a||_F * ||b||_F). Throws on shape mismatch or a
// zero-norm operand.
double cosine_similarity_flat(const Matrix& a, const Matrix& b);

// Mean of |cos(a_col_j, b_col_j)| over columns; alternative projection
// similarity metric.
double mean_abs_column_cosine(const Matrix& a, const Matrix& b);

// Returns `candidate` with column j negated whenever <ref[:,j], candidate[:,j]>
// is negative. Removes the per-column sign ambiguity of SVD factors.
Matrix sign_align(const Matrix& ref, const Matrix& candidate);

} // namespace qgalore
