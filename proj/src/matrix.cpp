#include "qgalore/matrix.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "qgalore/runtime.hpp"

namespace qgalore {

Matrix::Matrix(int rows, int cols) : rows_(rows), cols_(cols) {
    if (rows <= 0 || cols <= 0) {
        throw std::invalid_argument("Matrix: dimensions must be positive, got " +
                                    std::to_string(rows) + "x" + std::to_string(cols));
    }
    data_.assign(static_cast<std::size_t>(rows) * cols, 0.0f);
}

Matrix Matrix::from_data(int rows, int cols, std::vector<float> data) {
    Matrix m(rows, cols);
    if (data.size() != m.size()) {
        throw std::invalid_argument("Matrix::from_data: payload length " +
                                    std::to_string(data.size()) + " does not match shape " +
                                    m.shape_str());
    }
    m.data_ = std::move(data);
    return m;
}

Matrix Matrix::identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m.at(i, i) = 1.0f;
    return m;
}

Matrix Matrix::gaussian(int rows, int cols, RngStream& rng, float stddev) {
    Matrix m(rows, cols);
    for (auto& x : m.data_) x = stddev * static_cast<float>(rng.next_gaussian());
    return m;
}

std::string Matrix::shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: dimension mismatch " + a.shape_str() + " * " +
                                    b.shape_str());
    }
    const int m = a.rows();
    const int k = a.cols();
    const int n = b.cols();
    Matrix c(m, n);

    // i-k-j order with a per-row double accumulator. Per output element the
    // summation order is ascending k, independent of the row partitioning.
    parallel_for(m, [&](std::int64_t begin, std::int64_t end) {
        std::vector<double> acc(static_cast<std::size_t>(n));
        for (std::int64_t i = begin; i < end; ++i) {
            std::fill(acc.begin(), acc.end(), 0.0);
            const float* arow = a.data() + i * k;
            for (int p = 0; p < k; ++p) {
                const double av = arow[p];
                if (av == 0.0) continue;
                const float* brow = b.data() + static_cast<std::size_t>(p) * n;
                for (int j = 0; j < n; ++j) acc[j] += av * brow[j];
            }
            float* crow = c.data() + i * n;
            for (int j = 0; j < n; ++j) crow[j] = static_cast<float>(acc[j]);
        }
    });
    return c;
}

Matrix transpose(const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    for (int r = 0; r < m.rows(); ++r) {
        for (int c = 0; c < m.cols(); ++c) t.at(c, r) = m.at(r, c);
    }
    return t;
}

Matrix add(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument("add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
    return out;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument("subtract: shape mismatch " + a.shape_str() + " vs " +
                                    b.shape_str());
    }
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.data()[i];
    return out;
}

Matrix scaled(const Matrix& m, double factor) {
    Matrix out = m;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data()[i] = static_cast<float>(factor * out.data()[i]);
    }
    return out;
}

void add_scaled_inplace(Matrix& dst, const Matrix& src, double factor) {
    if (!dst.same_shape(src)) {
        throw std::invalid_argument("add_scaled_inplace: shape mismatch " + dst.shape_str() +
                                    " vs " + src.shape_str());
    }
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst.data()[i] = static_cast<float>(dst.data()[i] + factor * src.data()[i]);
    }
}

double frobenius_norm(const Matrix& m) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
        double v = m.data()[i];
        acc += v * v;
    }
    return std::sqrt(acc);
}

double max_abs(const Matrix& m) {
    double best = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
        double v = std::fabs(static_cast<double>(m.data()[i]));
        if (v > best) best = v;
    }
    return best;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument("max_abs_diff: shape mismatch " + a.shape_str() + " vs " +
                                    b.shape_str());
    }
    double best = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double v = std::fabs(static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i]));
        if (v > best) best = v;
    }
    return best;
}

bool all_finite(const Matrix& m) {
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (!std::isfinite(m.data()[i])) return false;
    }
    return true;
}

bool is_all_zero(const Matrix& m) {
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (m.data()[i] != 0.0f) return false;
    }
    return true;
}

double cosine_similarity_flat(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument("cosine_similarity_flat: shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double x = a.data()[i];
        double y = b.data()[i];
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if (na == 0.0 || nb == 0.0) {
        throw std::invalid_argument("cosine_similarity_flat: zero-norm operand");
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

double mean_abs_column_cosine(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument("mean_abs_column_cosine: shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
    }
    double total = 0.0;
    for (int j = 0; j < a.cols(); ++j) {
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (int i = 0; i < a.rows(); ++i) {
            double x = a.at(i, j);
            double y = b.at(i, j);
            dot += x * y;
            na += x * x;
            nb += y * y;
        }
        if (na == 0.0 || nb == 0.0) {
            throw std::invalid_argument("mean_abs_column_cosine: zero-norm column " +
                                        std::to_string(j));
        }
        total += std::fabs(dot) / (std::sqrt(na) * std::sqrt(nb));
    }
    return total / a.cols();
}

Matrix sign_align(const Matrix& ref, const Matrix& candidate) {
    if (!ref.same_shape(candidate)) {
        throw std::invalid_argument("sign_align: shape mismatch " + ref.shape_str() + " vs " +
                                    candidate.shape_str());
    }
    Matrix out = candidate;
    for (int j = 0; j < ref.cols(); ++j) {
        double dot = 0.0;
        for (int i = 0; i < ref.rows(); ++i) {
            dot += static_cast<double>(ref.at(i, j)) * static_cast<double>(candidate.at(i, j));
        }
        if (dot < 0.0) {
            for (int i = 0; i < ref.rows(); ++i) out.at(i, j) = -out.at(i, j);
        }
    }
    return out;
}

} // namespace qgalore
