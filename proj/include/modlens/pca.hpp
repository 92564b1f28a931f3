#pragma once

#include <cstdint>
#include <vector>

namespace modlens::probe {

// Row-major double matrix, minimal on purpose.
struct Matrix {
    int64_t rows = 0;
    int64_t cols = 0;
    std::vector<double> v;

    Matrix() = default;
    Matrix(int64_t r, int64_t c) : rows(r), cols(c), v(static_cast<size_t>(r * c), 0.0) {}
    double& at(int64_t r, int64_t c) { return v[static_cast<size_t>(r * cols + c)]; }
    double at(int64_t r, int64_t c) const { return v[static_cast<size_t>(r * cols + c)]; }
    double* row(int64_t r) { return v.data() + r * cols; }
    const double* row(int64_t r) const { return v.data() + r * cols; }
};

struct PcaResult {
    std::vector<double> mean;                     // [d]
    Matrix components;                            // [k, d], rows orthonormal
    std::vector<double> explained_variance_ratio; // [k], non-increasing
    std::vector<double> eigenvalues;              // [k], covariance eigenvalues
    Matrix projected;                             // [n, k], centered coordinates
    bool degenerate = false;                      // all-equal input, zero variance
};

// PCA via eigendecomposition of the covariance matrix (cyclic Jacobi).
// Components are the top-k eigendirections; ratio_i = lambda_i / sum(lambda).
// The largest-magnitude entry of every component is made positive. If k
// exceeds the rank, the extra components still come from the orthonormal
// eigenbasis and their ratios are ~0.
PcaResult pca(const Matrix& data, int k);

// Eigendecomposition of a symmetric matrix: a is [n,n] row-major, returns
// eigenvalues descending with matching eigenvector rows in `vectors`.
void symmetric_eigen(const Matrix& a, std::vector<double>& values, Matrix& vectors);

} // namespace modlens::probe
