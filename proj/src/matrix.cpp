#include "dlab/matrix.hpp"

#include <cassert>
#include <cmath>

namespace dlab {

// All three kernels accumulate each output element in a fixed order and
// parallelize only across independent output rows, so results are
// bit-identical regardless of thread count.

bool Matrix::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& out) {
    assert(a.cols() == b.cols());
    const std::size_t m = a.rows(), n = b.rows(), k = a.cols();
    if (out.rows() != m || out.cols() != n) out = Matrix(m, n);

    const long lm = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (m * n * k > 16384)
    for (long ri = 0; ri < lm; ++ri) {
        const std::size_t i = static_cast<std::size_t>(ri);
        const double* arow = a.row(i);
        double* crow = out.row(i);
        std::size_t j = 0;
        for (; j + 4 <= n; j += 4) {
            const double* b0 = b.row(j);
            const double* b1 = b.row(j + 1);
            const double* b2 = b.row(j + 2);
            const double* b3 = b.row(j + 3);
            double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                const double av = arow[p];
                s0 += av * b0[p];
                s1 += av * b1[p];
                s2 += av * b2[p];
                s3 += av * b3[p];
            }
            crow[j] = s0;
            crow[j + 1] = s1;
            crow[j + 2] = s2;
            crow[j + 3] = s3;
        }
        for (; j < n; ++j) {
            const double* brow = b.row(j);
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            crow[j] = s;
        }
    }
}

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& out) {
    assert(a.cols() == b.rows());
    const std::size_t m = a.rows(), n = b.cols(), k = a.cols();
    if (out.rows() != m || out.cols() != n) out = Matrix(m, n);

    const long lm = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (m * n * k > 16384)
    for (long ri = 0; ri < lm; ++ri) {
        const std::size_t i = static_cast<std::size_t>(ri);
        const double* arow = a.row(i);
        double* crow = out.row(i);
        for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b.row(p);
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& out) {
    assert(a.rows() == b.rows());
    const std::size_t m = a.cols(), n = b.cols(), k = a.rows();
    if (out.rows() != m || out.cols() != n) out = Matrix(m, n);

    const long lm = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (m * n * k > 16384)
    for (long ri = 0; ri < lm; ++ri) {
        const std::size_t i = static_cast<std::size_t>(ri);
        double* crow = out.row(i);
        for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a(p, i);
            const double* brow = b.row(p);
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace dlab
