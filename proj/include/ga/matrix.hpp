#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "ga/error.hpp"
#include "ga/rng.hpp"

namespace ga {

#ifdef GA_SINGLE_PRECISION
using real = float;
#else
using real = double;
#endif

/// Dense row-major matrix. Values are treated as immutable once handed to
/// another component; every library function returns a fresh matrix.
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, real(0)) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<real> data);

    /// Row-by-row construction: Matrix::from_rows({{1,2},{3,4}}).
    static Matrix from_rows(std::initializer_list<std::initializer_list<real>> rows);
    static Matrix identity(std::size_t n);
    static Matrix filled(std::size_t rows, std::size_t cols, real value);
    static Matrix random_uniform(std::size_t rows, std::size_t cols, real lo, real hi, Rng& rng);
    static Matrix random_normal(std::size_t rows, std::size_t cols, real mean, real stddev, Rng& rng);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    real& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    real operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<real> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const real> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<real>& data() { return data_; }
    const std::vector<real>& data() const { return data_; }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<real> data_;
};

/// "RxC" shape string used by error messages.
std::string shape_str(const Matrix& m);

// ---- arithmetic -----------------------------------------------------------

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix mul(const Matrix& a, const Matrix& b); // elementwise
Matrix scale(const Matrix& m, real s);
/// Add a 1xC row vector to every row.
Matrix add_rowvec(const Matrix& m, const Matrix& v);
/// Scale row r by factors[r].
Matrix scale_rows(const Matrix& m, std::span<const real> factors);
Matrix exp_elem(const Matrix& m);
Matrix log_elem(const Matrix& m);
Matrix relu(const Matrix& m);

// ---- reductions -----------------------------------------------------------

Matrix row_sum(const Matrix& m); // Nx1
Matrix col_sum(const Matrix& m); // 1xC
real sum_all(const Matrix& m);
real mean_all(const Matrix& m);
real max_abs(const Matrix& m);
real max_abs_diff(const Matrix& a, const Matrix& b);

// ---- layout ----------------------------------------------------------------

Matrix concat_rows(const Matrix& a, const Matrix& b);
Matrix concat_cols(const Matrix& a, const Matrix& b);
/// Rows [r0, r1).
Matrix slice_rows(const Matrix& m, std::size_t r0, std::size_t r1);
/// Columns [c0, c1).
Matrix slice_cols(const Matrix& m, std::size_t c0, std::size_t c1);

// ---- softmax ----------------------------------------------------------------

/// Row-wise softmax, stabilized by subtracting each row's max so large logits
/// cannot overflow. Every output row is nonnegative and sums to 1.
Matrix softmax_rows(const Matrix& m);

// ---- checks -----------------------------------------------------------------

bool all_finite(const Matrix& m);
/// Throws EvalError naming `context` if any entry is NaN or infinite.
void ensure_finite(const Matrix& m, const char* context);

// ---- small vector helpers ---------------------------------------------------

real dot(std::span<const real> a, std::span<const real> b);
real norm2(std::span<const real> a);
real dist2(std::span<const real> a, std::span<const real> b); // squared distance
real dist(std::span<const real> a, std::span<const real> b);

} // namespace ga
