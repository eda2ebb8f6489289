#pragma once

#include <stdexcept>
#include <vector>

#include "qgalore/matrix.hpp"

namespace qgalore {

struct SvdResult {
    Matrix u;                  // rows x k, orthonormal columns
    std::vector<float> sigma;  // k values, descending, non-negative
    Matrix v;                  // cols x k, orthonormal columns
    int sweeps = 0;
};

class SvdConvergenceError : public std::runtime_error {
public:
    SvdConvergenceError(const std::string& msg, double off_norm)
        : std::runtime_error(msg), off_diagonal_norm(off_norm) {}
    double off_diagonal_norm;
};

// Thin SVD (k = min(rows, cols)) via one-sided Jacobi. Input must be finite
// with min(rows, cols) <= 1024. Throws SvdConvergenceError if the cyclic
// sweeps do not converge within the sweep cap.
SvdResult svd(const Matrix& a);

} // namespace qgalore
