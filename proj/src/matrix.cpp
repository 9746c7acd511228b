#include "ga/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ga {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<real> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("Matrix: data length " + std::to_string(data_.size()) +
                         " does not match " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<real>> rows) {
    std::size_t r = rows.size();
    std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Matrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("Matrix::from_rows: ragged rows");
        std::size_t j = 0;
        for (real v : row) m(i, j++) = v;
        ++i;
    }
    return m;
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = real(1);
    return m;
}

Matrix Matrix::filled(std::size_t rows, std::size_t cols, real value) {
    Matrix m(rows, cols);
    std::fill(m.data_.begin(), m.data_.end(), value);
    return m;
}

Matrix Matrix::random_uniform(std::size_t rows, std::size_t cols, real lo, real hi, Rng& rng) {
    Matrix m(rows, cols);
    for (real& v : m.data_) v = static_cast<real>(rng.uniform(lo, hi));
    return m;
}

Matrix Matrix::random_normal(std::size_t rows, std::size_t cols, real mean, real stddev, Rng& rng) {
    Matrix m(rows, cols);
    for (real& v : m.data_) v = static_cast<real>(mean + stddev * rng.normal());
    return m;
}

std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

namespace {
void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                         " differ");
    }
}
} // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: lhs " + shape_str(a) + " incompatible with rhs " + shape_str(b));
    }
    Matrix c(a.rows(), b.cols());
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    for (std::size_t i = 0; i < n; ++i) {
        real* ci = c.data().data() + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const real aip = a(i, p);
            if (aip == real(0)) continue;
            const real* bp = b.data().data() + p * m;
            for (std::size_t j = 0; j < m; ++j) ci[j] += aip * bp[j];
        }
    }
    return c;
}

Matrix transpose(const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
    return t;
}

Matrix add(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add");
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] += b.data()[i];
    return c;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "sub");
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] -= b.data()[i];
    return c;
}

Matrix mul(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "mul");
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] *= b.data()[i];
    return c;
}

Matrix scale(const Matrix& m, real s) {
    Matrix c = m;
    for (real& v : c.data()) v *= s;
    return c;
}

Matrix add_rowvec(const Matrix& m, const Matrix& v) {
    if (v.rows() != 1 || v.cols() != m.cols()) {
        throw ShapeError("add_rowvec: vector " + shape_str(v) + " does not broadcast over " +
                         shape_str(m));
    }
    Matrix c = m;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) c(i, j) += v(0, j);
    return c;
}

Matrix scale_rows(const Matrix& m, std::span<const real> factors) {
    if (factors.size() != m.rows()) {
        throw ShapeError("scale_rows: " + std::to_string(factors.size()) + " factors for " +
                         shape_str(m));
    }
    Matrix c = m;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) c(i, j) *= factors[i];
    return c;
}

Matrix exp_elem(const Matrix& m) {
    Matrix c = m;
    for (real& v : c.data()) v = std::exp(v);
    return c;
}

Matrix log_elem(const Matrix& m) {
    Matrix c = m;
    for (real& v : c.data()) v = std::log(v);
    return c;
}

Matrix relu(const Matrix& m) {
    Matrix c = m;
    for (real& v : c.data()) v = v > real(0) ? v : real(0);
    return c;
}

Matrix row_sum(const Matrix& m) {
    Matrix s(m.rows(), 1);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        real acc = 0;
        for (std::size_t j = 0; j < m.cols(); ++j) acc += m(i, j);
        s(i, 0) = acc;
    }
    return s;
}

Matrix col_sum(const Matrix& m) {
    Matrix s(1, m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) s(0, j) += m(i, j);
    return s;
}

real sum_all(const Matrix& m) {
    real acc = 0;
    for (real v : m.data()) acc += v;
    return acc;
}

real mean_all(const Matrix& m) {
    if (m.size() == 0) throw ShapeError("mean_all: empty matrix");
    return sum_all(m) / static_cast<real>(m.size());
}

real max_abs(const Matrix& m) {
    real best = 0;
    for (real v : m.data()) best = std::max(best, std::abs(v));
    return best;
}

real max_abs_diff(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "max_abs_diff");
    real best = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        best = std::max(best, std::abs(a.data()[i] - b.data()[i]));
    return best;
}

Matrix concat_rows(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("concat_rows: " + shape_str(a) + " and " + shape_str(b));
    }
    Matrix c(a.rows() + b.rows(), a.cols());
    std::copy(a.data().begin(), a.data().end(), c.data().begin());
    std::copy(b.data().begin(), b.data().end(), c.data().begin() + a.size());
    return c;
}

Matrix concat_cols(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("concat_cols: " + shape_str(a) + " and " + shape_str(b));
    }
    Matrix c(a.rows(), a.cols() + b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) = a(i, j);
        for (std::size_t j = 0; j < b.cols(); ++j) c(i, a.cols() + j) = b(i, j);
    }
    return c;
}

Matrix slice_rows(const Matrix& m, std::size_t r0, std::size_t r1) {
    if (r0 > r1 || r1 > m.rows()) {
        throw ShapeError("slice_rows: range [" + std::to_string(r0) + ", " + std::to_string(r1) +
                         ") out of " + shape_str(m));
    }
    Matrix c(r1 - r0, m.cols());
    std::copy(m.data().begin() + r0 * m.cols(), m.data().begin() + r1 * m.cols(),
              c.data().begin());
    return c;
}

Matrix slice_cols(const Matrix& m, std::size_t c0, std::size_t c1) {
    if (c0 > c1 || c1 > m.cols()) {
        throw ShapeError("slice_cols: range [" + std::to_string(c0) + ", " + std::to_string(c1) +
                         ") out of " + shape_str(m));
    }
    Matrix c(m.rows(), c1 - c0);
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = c0; j < c1; ++j) c(i, j - c0) = m(i, j);
    return c;
}

Matrix softmax_rows(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        real mx = m(i, 0);
        for (std::size_t j = 1; j < m.cols(); ++j) mx = std::max(mx, m(i, j));
        real denom = 0;
        for (std::size_t j = 0; j < m.cols(); ++j) {
            out(i, j) = std::exp(m(i, j) - mx);
            denom += out(i, j);
        }
        for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) /= denom;
    }
    return out;
}

bool all_finite(const Matrix& m) {
    for (real v : m.data())
        if (!std::isfinite(v)) return false;
    return true;
}

void ensure_finite(const Matrix& m, const char* context) {
    if (!all_finite(m)) {
        throw EvalError(std::string(context) + ": non-finite entry in " + shape_str(m) +
                        " matrix");
    }
}

real dot(std::span<const real> a, std::span<const real> b) {
    real acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

real norm2(std::span<const real> a) { return std::sqrt(dot(a, a)); }

real dist2(std::span<const real> a, std::span<const real> b) {
    real acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        real d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

real dist(std::span<const real> a, std::span<const real> b) { return std::sqrt(dist2(a, b)); }

} // namespace ga
