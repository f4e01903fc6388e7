#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace rdstn {

// Dense row-major 2-D array of doubles.
//
// Spatial feature maps are stored token-major: row `y * width + x` holds the
// channel vector of pixel (y, x). Linear layers then become plain matrix
// products and every spatial rearrangement is a row gather.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    double* data() noexcept { return values_.data(); }
    const double* data() const noexcept { return values_.data(); }
    std::vector<double>& values() noexcept { return values_; }
    const std::vector<double>& values() const noexcept { return values_; }

    double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

    void fill(double v);
    bool same_shape(const Matrix& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

// Kernels below accumulate into `out`. Each output row of `gemm_acc` depends
// only on the matching row of `a`, in a fixed summation order, so results do
// not change with how many rows are processed together.
void gemm_acc(const Matrix& a, const Matrix& b, Matrix& out);          // out += a * b
void gemm_nt_acc(const Matrix& a, const Matrix& b, Matrix& out);       // out += a * b^T
void gemm_tn_acc(const Matrix& a, const Matrix& b, Matrix& out);       // out += a^T * b

}  // namespace rdstn
