#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dlab {

// Dense row-major matrix of doubles. Deliberately minimal: storage, element
// access, and the three GEMM variants backprop needs.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* row(std::size_t r) { return data_.data() + r * cols_; }
    const double* row(std::size_t r) const { return data_.data() + r * cols_; }
    std::span<const double> row_span(std::size_t r) const { return {row(r), cols_}; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    void fill(double v) { data_.assign(data_.size(), v); }
    bool all_finite() const;

    bool operator==(const Matrix& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// out = a * b^T      a: [m x k], b: [n x k], out: [m x n]
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& out);
// out = a * b        a: [m x k], b: [k x n], out: [m x n]
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& out);
// out = a^T * b      a: [k x m], b: [k x n], out: [m x n]
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& out);

}  // namespace dlab
