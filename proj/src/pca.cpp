#include "modlens/pca.hpp"

#include "modlens/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace modlens::probe {

void symmetric_eigen(const Matrix& a, std::vector<double>& values, Matrix& vectors) {
    const int64_t n = a.rows;
    if (a.cols != n) throw DataError("symmetric_eigen: matrix must be square");

    Matrix m = a;
    // Eigenvectors as columns during the sweeps.
    Matrix evec(n, n);
    for (int64_t i = 0; i < n; ++i) evec.at(i, i) = 1.0;

    // Cyclic Jacobi rotations until off-diagonal mass is negligible.
    const int max_sweeps = 64;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0;
        for (int64_t p = 0; p < n; ++p)
            for (int64_t q = p + 1; q < n; ++q) off += m.at(p, q) * m.at(p, q);
        if (off < 1e-30) break;

        for (int64_t p = 0; p < n; ++p) {
            for (int64_t q = p + 1; q < n; ++q) {
                const double apq = m.at(p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double app = m.at(p, p);
                const double aqq = m.at(q, q);
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                for (int64_t i = 0; i < n; ++i) {
                    const double mip = m.at(i, p);
                    const double miq = m.at(i, q);
                    m.at(i, p) = c * mip - s * miq;
                    m.at(i, q) = s * mip + c * miq;
                }
                for (int64_t i = 0; i < n; ++i) {
                    const double mpi = m.at(p, i);
                    const double mqi = m.at(q, i);
                    m.at(p, i) = c * mpi - s * mqi;
                    m.at(q, i) = s * mpi + c * mqi;
                }
                for (int64_t i = 0; i < n; ++i) {
                    const double vip = evec.at(i, p);
                    const double viq = evec.at(i, q);
                    evec.at(i, p) = c * vip - s * viq;
                    evec.at(i, q) = s * vip + c * viq;
                }
            }
        }
    }

    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> diag(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) diag[static_cast<size_t>(i)] = m.at(i, i);
    std::stable_sort(order.begin(), order.end(), [&](int64_t x, int64_t y) {
        return diag[static_cast<size_t>(x)] > diag[static_cast<size_t>(y)];
    });

    values.assign(static_cast<size_t>(n), 0.0);
    vectors = Matrix(n, n);
    for (int64_t r = 0; r < n; ++r) {
        const int64_t src = order[static_cast<size_t>(r)];
        values[static_cast<size_t>(r)] = diag[static_cast<size_t>(src)];
        for (int64_t i = 0; i < n; ++i) vectors.at(r, i) = evec.at(i, src);
    }
}

PcaResult pca(const Matrix& data, int k) {
    const int64_t n = data.rows;
    const int64_t d = data.cols;
    if (n < 2) throw DataError("pca: need at least 2 rows");
    if (k < 1 || k > d) throw DataError("pca: k must lie in [1, cols]");

    PcaResult out;
    out.mean.assign(static_cast<size_t>(d), 0.0);
    for (int64_t r = 0; r < n; ++r)
        for (int64_t c = 0; c < d; ++c) out.mean[static_cast<size_t>(c)] += data.at(r, c);
    for (double& m : out.mean) m /= static_cast<double>(n);

    // Covariance with the 1/(n-1) convention.
    Matrix cov(d, d);
    for (int64_t r = 0; r < n; ++r) {
        const double* x = data.row(r);
        for (int64_t i = 0; i < d; ++i) {
            const double xi = x[i] - out.mean[static_cast<size_t>(i)];
            for (int64_t j = i; j < d; ++j)
                cov.at(i, j) += xi * (x[j] - out.mean[static_cast<size_t>(j)]);
        }
    }
    for (int64_t i = 0; i < d; ++i)
        for (int64_t j = i; j < d; ++j) {
            cov.at(i, j) /= static_cast<double>(n - 1);
            cov.at(j, i) = cov.at(i, j);
        }

    std::vector<double> values;
    Matrix vectors;
    symmetric_eigen(cov, values, vectors);

    double total = 0;
    for (double v : values) total += std::max(v, 0.0);
    out.degenerate = total <= 1e-30;

    out.components = Matrix(k, d);
    out.explained_variance_ratio.assign(static_cast<size_t>(k), 0.0);
    out.eigenvalues.assign(static_cast<size_t>(k), 0.0);
    for (int i = 0; i < k; ++i) {
        // Sign convention: largest-magnitude entry positive.
        int64_t arg = 0;
        for (int64_t j = 1; j < d; ++j)
            if (std::abs(vectors.at(i, j)) > std::abs(vectors.at(i, arg))) arg = j;
        const double flip = vectors.at(i, arg) < 0 ? -1.0 : 1.0;
        for (int64_t j = 0; j < d; ++j) out.components.at(i, j) = flip * vectors.at(i, j);
        const double lambda = std::max(values[static_cast<size_t>(i)], 0.0);
        out.eigenvalues[static_cast<size_t>(i)] = lambda;
        out.explained_variance_ratio[static_cast<size_t>(i)] =
            out.degenerate ? 0.0 : lambda / total;
    }

    out.projected = Matrix(n, k);
    for (int64_t r = 0; r < n; ++r) {
        const double* x = data.row(r);
        for (int i = 0; i < k; ++i) {
            double acc = 0;
            const double* comp = out.components.row(i);
            for (int64_t j = 0; j < d; ++j)
                acc += (x[j] - out.mean[static_cast<size_t>(j)]) * comp[j];
            out.projected.at(r, i) = acc;
        }
    }
    return out;
}

} // namespace modlens::probe
