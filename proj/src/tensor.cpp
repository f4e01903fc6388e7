#include "rdstn/tensor.hpp"

#include <algorithm>

#include "rdstn/errors.hpp"

namespace rdstn {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows * cols) {
        throw InvalidArgument("matrix value count does not match its shape");
    }
}

void Matrix::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

namespace {

constexpr std::size_t kRows = 4;
constexpr std::size_t kCols = 8;

}  // namespace

// Every output element is summed as (((0 + a0*b0) + a1*b1) + ...) and only
// then added to `out`, whichever path computes it, so a row's result does
// not depend on how many rows share the call.
void gemm_acc(const Matrix& a, const Matrix& b, Matrix& out) {
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    const double* bd = b.data();
    const std::size_t m_blocked = m - m % kCols;
    std::size_t i = 0;
    std::vector<double> packed(k * kRows);
    for (; i + kRows <= n; i += kRows) {
        const double* ar = a.data() + i * k;
        for (std::size_t p = 0; p < k; ++p)
            for (std::size_t r = 0; r < kRows; ++r) packed[p * kRows + r] = ar[r * k + p];
        for (std::size_t j = 0; j < m_blocked; j += kCols) {
            double acc[kRows][kCols] = {};
            for (std::size_t p = 0; p < k; ++p) {
                const double* br = bd + p * m + j;
                const double* av = packed.data() + p * kRows;
                for (std::size_t r = 0; r < kRows; ++r)
                    for (std::size_t c = 0; c < kCols; ++c) acc[r][c] += av[r] * br[c];
            }
            for (std::size_t r = 0; r < kRows; ++r) {
                double* o = out.data() + (i + r) * m + j;
                for (std::size_t c = 0; c < kCols; ++c) o[c] += acc[r][c];
            }
        }
        for (std::size_t r = 0; r < kRows; ++r) {
            for (std::size_t j = m_blocked; j < m; ++j) {
                double acc = 0.0;
                for (std::size_t p = 0; p < k; ++p) acc += ar[r * k + p] * bd[p * m + j];
                out(i + r, j) += acc;
            }
        }
    }
    for (; i < n; ++i) {
        const double* ar = a.data() + i * k;
        for (std::size_t j = 0; j < m_blocked; j += kCols) {
            double acc[kCols] = {};
            for (std::size_t p = 0; p < k; ++p) {
                const double* br = bd + p * m + j;
                const double av = ar[p];
                for (std::size_t c = 0; c < kCols; ++c) acc[c] += av * br[c];
            }
            double* o = out.data() + i * m + j;
            for (std::size_t c = 0; c < kCols; ++c) o[c] += acc[c];
        }
        for (std::size_t j = m_blocked; j < m; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += ar[p] * bd[p * m + j];
            out(i, j) += acc;
        }
    }
}

void gemm_nt_acc(const Matrix& a, const Matrix& b, Matrix& out) {
    // Transposing b turns the inner dot products into contiguous axpy
    // updates, which vectorise under strict floating-point semantics.
    Matrix bt(b.cols(), b.rows());
    for (std::size_t r = 0; r < b.rows(); ++r)
        for (std::size_t c = 0; c < b.cols(); ++c) bt(c, r) = b(r, c);
    gemm_acc(a, bt, out);
}

void gemm_tn_acc(const Matrix& a, const Matrix& b, Matrix& out) {
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    const std::size_t m_blocked = m - m % kCols;
    const double* ad = a.data();
    const double* bd = b.data();
    std::size_t p = 0;
    for (; p + kRows <= k; p += kRows) {
        for (std::size_t j = 0; j < m_blocked; j += kCols) {
            double acc[kRows][kCols] = {};
            for (std::size_t i = 0; i < n; ++i) {
                const double* ar = ad + i * k + p;
                const double* br = bd + i * m + j;
                for (std::size_t r = 0; r < kRows; ++r)
                    for (std::size_t c = 0; c < kCols; ++c) acc[r][c] += ar[r] * br[c];
            }
            for (std::size_t r = 0; r < kRows; ++r)
                for (std::size_t c = 0; c < kCols; ++c) out(p + r, j + c) += acc[r][c];
        }
        for (std::size_t r = 0; r < kRows; ++r)
            for (std::size_t j = m_blocked; j < m; ++j) {
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) acc += ad[i * k + p + r] * bd[i * m + j];
                out(p + r, j) += acc;
            }
    }
    for (; p < k; ++p) {
        for (std::size_t j = 0; j < m; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += ad[i * k + p] * bd[i * m + j];
            out(p, j) += acc;
        }
    }
}

}  // namespace rdstn
