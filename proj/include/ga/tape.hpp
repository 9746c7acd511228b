#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ga/matrix.hpp"

namespace ga {

/// Handle to a node on a GradTape.
struct Value {
    std::size_t index = static_cast<std::size_t>(-1);
    bool valid() const { return index != static_cast<std::size_t>(-1); }
};

/// Reverse-mode gradient tape. Each primitive records its output value and a
/// closure that scatters the output adjoint back to its parents; backward()
/// replays the closures in exact reverse creation order (a topological order
/// by construction). Adjoints of unused outputs stay zero.
///
/// A tape is confined to one training thread and is rebuilt per step.
class Tape {
  public:
    // ---- leaves -------------------------------------------------------------
    Value input(Matrix v);

    // ---- access -------------------------------------------------------------
    const Matrix& value(Value v) const { return nodes_[v.index].value; }
    /// Adjoint accumulated for `v` by the last backward() call (zeros if the
    /// node does not influence the root).
    Matrix grad(Value v) const;
    std::size_t size() const { return nodes_.size(); }

    // ---- primitives ---------------------------------------------------------
    Value matmul(Value a, Value b);
    Value transpose(Value a);
    Value add(Value a, Value b);
    Value sub(Value a, Value b);
    Value mul(Value a, Value b);
    Value scale(Value a, real s);
    /// Elementwise product with a constant matrix (e.g. a loss mask).
    Value mul_const(Value a, Matrix c);
    Value add_rowvec(Value m, Value v);
    /// Scale row r by constant factors[r]; factors carry no gradient.
    Value scale_rows(Value m, std::vector<real> factors);
    Value exp_elem(Value a);
    Value log_elem(Value a);
    Value relu(Value a);
    Value row_sum(Value a);
    Value col_sum(Value a);
    Value sum_all(Value a);
    Value mean_all(Value a);
    Value concat_rows(Value a, Value b);
    Value concat_cols(Value a, Value b);
    Value slice_rows(Value a, std::size_t r0, std::size_t r1);
    Value slice_cols(Value a, std::size_t c0, std::size_t c1);
    Value softmax_rows(Value a);
    /// Group softmax (count-weighted): out[i,k] = exp(p[i,k]) / sum_j sizes[j]*exp(p[i,j]),
    /// stabilized by row-max subtraction. Sizes are constants.
    Value group_softmax(Value scores, std::vector<std::size_t> group_sizes);
    /// out[k] = sum of rows r with assignment[r] == k; assignment is constant.
    Value aggregate_rows(Value a, std::vector<std::size_t> assignment, std::size_t n_groups);
    /// Per-row normalization with learnable 1xC gain and bias.
    Value layer_norm_rows(Value x, Value gain, Value bias, real eps = real(1e-5));
    /// Mean over rows of the per-row cross entropy (1/C) * sum_i -y_hat(i)*log(softmax(logits)(i)).
    /// `onehot` is a constant 0/1 matrix with one 1 per row.
    Value cross_entropy_mean(Value logits, Matrix onehot);
    /// Scatter windowed contributions back onto a t x channels frame, summing
    /// overlaps: out[i*stride + l, c] += contrib[i, c*window + l].
    Value col2im(Value contrib, std::size_t t, std::size_t channels, std::size_t window,
                 std::size_t stride);

    // ---- backward -----------------------------------------------------------
    /// Seeds the 1x1 root with adjoint 1 and sweeps the tape in reverse.
    void backward(Value scalar_root);

  private:
    struct Node {
        Matrix value;
        Matrix adjoint; // empty until touched
        std::function<void(Tape&)> back;
    };

    Value push(Matrix value, std::function<void(Tape&)> back);
    void accumulate(std::size_t index, const Matrix& g);
    Matrix& adj(std::size_t index);

    std::vector<Node> nodes_;
};

/// Max relative error between the reverse-mode gradient of f and central
/// finite differences, per coordinate:  |g - fd| / max(1, |g|, |fd|).
/// f must map (tape, x-leaf) to a 1x1 value and be deterministic.
real grad_check(const std::function<Value(Tape&, Value)>& f, const Matrix& x, real step);

} // namespace ga
