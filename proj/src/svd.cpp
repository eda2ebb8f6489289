#include "qgalore/svd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace qgalore {
namespace {

constexpr int kMaxSweeps = 60;
// Rotation threshold on the column cosine |<ci,cj>| / (||ci|| ||cj||). A
// relative criterion keeps the factors orthonormal even when singular values
// span many orders of magnitude (an absolute Gram threshold does not).
constexpr double kCosineTol = 1e-10;

// One-sided Jacobi on the columns of a tall-or-square working matrix
// (m >= n). Returns U (m x n), sigma (n), V (n x n).
struct JacobiOutput {
    std::vector<double> u;     // m x n column-orthonormal
    std::vector<double> sigma; // n, descending
    std::vector<double> v;     // n x n orthonormal
    int sweeps = 0;
};

JacobiOutput one_sided_jacobi(std::vector<double> w, int m, int n) {
    JacobiOutput out;
    out.v.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) out.v[static_cast<std::size_t>(i) * n + i] = 1.0;

    // Column squared norms, maintained incrementally across rotations.
    std::vector<double> colsq(n, 0.0);
    double frob_sq = 0.0;
    for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int i = 0; i < m; ++i) {
            double x = w[static_cast<std::size_t>(i) * n + j];
            acc += x * x;
        }
        colsq[j] = acc;
        frob_sq += acc;
    }

    int sweeps = 0;
    double worst_cosine = 0.0;

    if (frob_sq > 0.0) {
        bool converged = false;
        while (!converged) {
            if (sweeps >= kMaxSweeps) {
                throw SvdConvergenceError(
                    "svd: Jacobi sweeps did not converge after " + std::to_string(kMaxSweeps) +
                        " sweeps; max off-diagonal column cosine " + std::to_string(worst_cosine),
                    worst_cosine);
            }
            ++sweeps;
            converged = true;
            worst_cosine = 0.0;

            // Exact column norms at sweep start. The incremental updates below
            // drift under cancellation; because convergence requires a full
            // rotation-free sweep, the final verdict always uses exact norms.
            double max_colsq = 0.0;
            for (int j = 0; j < n; ++j) {
                double acc = 0.0;
                for (int i = 0; i < m; ++i) {
                    const double x = w[static_cast<std::size_t>(i) * n + j];
                    acc += x * x;
                }
                colsq[j] = acc;
                max_colsq = std::max(max_colsq, acc);
            }
            // Columns at double-precision noise level are excluded from
            // rotations and basis-completed after the loop.
            const double drop_eps = std::max(m, n) * std::numeric_limits<double>::epsilon();
            const double drop_sq = drop_eps * drop_eps * max_colsq;

            for (int p = 0; p < n - 1; ++p) {
                for (int q = p + 1; q < n; ++q) {
                    if (colsq[p] <= drop_sq || colsq[q] <= drop_sq) continue;
                    double gamma = 0.0;
                    for (int i = 0; i < m; ++i) {
                        gamma += w[static_cast<std::size_t>(i) * n + p] *
                                 w[static_cast<std::size_t>(i) * n + q];
                    }
                    const double ag = std::fabs(gamma);
                    if (ag == 0.0) continue;
                    const double cosine = ag / std::sqrt(colsq[p] * colsq[q]);
                    if (cosine > worst_cosine) worst_cosine = cosine;
                    if (cosine < kCosineTol) continue;
                    converged = false;

                    const double alpha = colsq[p];
                    const double beta = colsq[q];
                    const double zeta = (beta - alpha) / (2.0 * gamma);
                    const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                     (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                    const double c = 1.0 / std::sqrt(1.0 + t * t);
                    const double s = c * t;

                    for (int i = 0; i < m; ++i) {
                        double* row = &w[static_cast<std::size_t>(i) * n];
                        const double wp = row[p];
                        const double wq = row[q];
                        row[p] = c * wp - s * wq;
                        row[q] = s * wp + c * wq;
                    }
                    for (int i = 0; i < n; ++i) {
                        double* row = &out.v[static_cast<std::size_t>(i) * n];
                        const double vp = row[p];
                        const double vq = row[q];
                        row[p] = c * vp - s * vq;
                        row[q] = s * vp + c * vq;
                    }
                    colsq[p] = std::max(0.0, c * c * alpha + s * s * beta - 2.0 * c * s * gamma);
                    colsq[q] = std::max(0.0, s * s * alpha + c * c * beta + 2.0 * c * s * gamma);
                }
            }
        }
    }
    out.sweeps = sweeps;

    // Exact singular values from the rotated columns, sorted descending.
    std::vector<double> sig(n, 0.0);
    for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int i = 0; i < m; ++i) {
            double x = w[static_cast<std::size_t>(i) * n + j];
            acc += x * x;
        }
        sig[j] = std::sqrt(acc);
    }
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return sig[a] > sig[b]; });

    out.sigma.resize(n);
    out.u.assign(static_cast<std::size_t>(m) * n, 0.0);
    std::vector<double> vperm(static_cast<std::size_t>(n) * n, 0.0);

    const double sigma_max = sig[order[0]];
    const double tiny = std::max(m, n) * std::numeric_limits<double>::epsilon() * sigma_max;

    int filled = 0;
    for (int jj = 0; jj < n; ++jj) {
        const int src = order[jj];
        out.sigma[jj] = sig[src];
        for (int i = 0; i < n; ++i) {
            vperm[static_cast<std::size_t>(i) * n + jj] = out.v[static_cast<std::size_t>(i) * n + src];
        }
        if (sig[src] > tiny && sig[src] > 0.0) {
            const double inv = 1.0 / sig[src];
            for (int i = 0; i < m; ++i) {
                out.u[static_cast<std::size_t>(i) * n + jj] =
                    w[static_cast<std::size_t>(i) * n + src] * inv;
            }
            filled = jj + 1;
        }
    }
    out.v = std::move(vperm);

    // Null-space columns: complete U to an orthonormal set with standard basis
    // vectors (modified Gram-Schmidt against the columns already placed).
    for (int jj = filled; jj < n; ++jj) {
        std::vector<double> best;
        double best_norm = -1.0;
        for (int cand = 0; cand < m; ++cand) {
            std::vector<double> vec(m, 0.0);
            vec[cand] = 1.0;
            for (int j2 = 0; j2 < jj; ++j2) {
                double dot = out.u[static_cast<std::size_t>(cand) * n + j2];
                for (int i = 0; i < m; ++i) {
                    vec[i] -= dot * out.u[static_cast<std::size_t>(i) * n + j2];
                }
            }
            double nrm = 0.0;
            for (double x : vec) nrm += x * x;
            nrm = std::sqrt(nrm);
            if (nrm > best_norm) {
                best_norm = nrm;
                best = std::move(vec);
            }
            if (best_norm > 0.7) break;
        }
        for (int i = 0; i < m; ++i) {
            out.u[static_cast<std::size_t>(i) * n + jj] = best[i] / best_norm;
        }
    }
    return out;
}

} // namespace

SvdResult svd(const Matrix& a) {
    if (a.empty()) throw std::invalid_argument("svd: empty matrix");
    if (!all_finite(a)) throw std::invalid_argument("svd: input contains non-finite values");
    const int mindim = std::min(a.rows(), a.cols());
    if (mindim > 1024) {
        throw std::invalid_argument("svd: min dimension " + std::to_string(mindim) +
                                    " exceeds the 1024 bound");
    }

    // Work on the orientation with the fewer columns; sweeps cost O(m n^2)
    // with n the column count, so this bounds work by the min dimension.
    const bool transposed = a.rows() < a.cols();
    const Matrix& src = a;
    const int m = transposed ? a.cols() : a.rows();
    const int n = transposed ? a.rows() : a.cols();

    std::vector<double> w(static_cast<std::size_t>(m) * n);
    if (!transposed) {
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) {
                w[static_cast<std::size_t>(i) * n + j] = src.at(i, j);
            }
        }
    } else {
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) {
                w[static_cast<std::size_t>(i) * n + j] = src.at(j, i);
            }
        }
    }

    JacobiOutput jac = one_sided_jacobi(std::move(w), m, n);

    SvdResult out;
    out.sweeps = jac.sweeps;
    out.sigma.resize(n);
    for (int i = 0; i < n; ++i) out.sigma[i] = static_cast<float>(jac.sigma[i]);

    Matrix big(m, n);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            big.at(i, j) = static_cast<float>(jac.u[static_cast<std::size_t>(i) * n + j]);
        }
    }
    Matrix small(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            small.at(i, j) = static_cast<float>(jac.v[static_cast<std::size_t>(i) * n + j]);
        }
    }

    if (!transposed) {
        out.u = std::move(big);
        out.v = std::move(small);
    } else {
        // A^T = U' S V'^T  =>  A = V' S U'^T
        out.u = std::move(small);
        out.v = std::move(big);
    }
    return out;
}

} // namespace qgalore
