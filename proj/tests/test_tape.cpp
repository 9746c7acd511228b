#include <doctest.h>

#include <cmath>

#include "ga/tape.hpp"

using namespace ga;

namespace {
constexpr real kStep = real(1e-5);
constexpr real kTol = real(1e-5);
} // namespace

TEST_CASE("grad_check: quadratic is near-exact") {
    Rng rng(10);
    Matrix x = Matrix::random_uniform(3, 4, -2, 2, rng);
    real err = grad_check(
        [](Tape& t, Value v) { return t.sum_all(t.mul(v, v)); }, x, kStep);
    CHECK(err < 1e-7);
}

TEST_CASE("grad_check: softmax row sums have zero gradient") {
    Rng rng(11);
    Matrix x = Matrix::random_uniform(4, 5, -1, 1, rng);
    Tape t;
    Value v = t.input(x);
    Value out = t.sum_all(t.softmax_rows(v));
    t.backward(out);
    CHECK(max_abs(t.grad(v)) < 1e-12);
    real err = grad_check(
        [](Tape& tt, Value vv) { return tt.sum_all(tt.softmax_rows(vv)); }, x, kStep);
    CHECK(err < kTol);
}

TEST_CASE("grad_check: cross entropy of a small net") {
    Rng rng(12);
    Matrix w = Matrix::random_uniform(4, 3, -1, 1, rng);
    Matrix onehot = Matrix::from_rows({{0, 1, 0}, {1, 0, 0}});
    Matrix x = Matrix::random_uniform(2, 4, -1, 1, rng);
    // Gradient w.r.t. the weights of logits = x*w.
    real err = grad_check(
        [&](Tape& t, Value wv) {
            Value logits = t.matmul(t.input(x), wv);
            return t.cross_entropy_mean(logits, onehot);
        },
        w, kStep);
    CHECK(err < kTol);
}

TEST_CASE("every primitive passes finite-difference checks on random inputs") {
    Rng rng(13);
    auto random_in = [&rng](std::size_t r, std::size_t c, real lo = -1, real hi = 1) {
        return Matrix::random_uniform(r, c, lo, hi, rng);
    };

    for (int trial = 0; trial < 20; ++trial) {
        Matrix other = random_in(4, 3);
        Matrix x43 = random_in(4, 3);
        Matrix x34 = random_in(3, 4);

        CHECK(grad_check([&](Tape& t, Value v) { return t.sum_all(t.matmul(v, t.input(x34))); },
                         x43, kStep) < kTol);
        CHECK(grad_check([&](Tape& t, Value v) { return t.sum_all(t.matmul(t.input(x43), v)); },
                         x34, kStep) < kTol);
        CHECK(grad_check([&](Tape& t, Value v) { return t.sum_all(t.transpose(v)); }, x43,
                         kStep) < kTol);
        CHECK(grad_check(
                  [&](Tape& t, Value v) {
                      Value o = t.input(other);
                      return t.sum_all(t.mul(t.add(v, o), t.sub(v, o)));
                  },
                  x43, kStep) < kTol);
        CHECK(grad_check([&](Tape& t, Value v) { return t.sum_all(t.scale(v, real(2.5))); }, x43,
                         kStep) < kTol);
        CHECK(grad_check([&](Tape& t, Value v) { return t.sum_all(t.mul_const(v, other)); }, x43,
                         kStep) < kTol);
        CHECK(grad_check(
                  [&](Tape& t, Value v) {
                      return t.sum_all(t.add_rowvec(t.input(x43), v));
                  },
                  random_in(1, 3), kStep) < kTol);
        CHECK(grad_check(
                  [&](Tape& t, Value v) {
                      return t.sum_all(t.scale_rows(v, {real(0.5), real(-1), real(2), real(3)}));
                  },
                  x43, kStep) < kTol);
        CHECK(grad_check([&](Tape& t, Value v) { return t.sum_all(t.exp_elem(v)); }, x43,
                         kStep) < kTol);
        CHECK(grad_check([&](Tape& t, Value v) { return t.sum_all(t.log_elem(v)); },
                         random_in(4, 3, real(0.5), real(2)), kStep) < kTol);
        CHECK(grad_check([&](Tape& t, Value v) { return t.sum_all(t.relu(v)); }, x43, kStep) <
              kTol);
        CHECK(grad_check([&](Tape& t, Value v) { return t.sum_all(t.row_sum(v)); }, x43, kStep) <
              kTol);
        CHECK(grad_check([&](Tape& t, Value v) { return t.sum_all(t.col_sum(v)); }, x43, kStep) <
              kTol);
        CHECK(grad_check([&](Tape& t, Value v) { return t.mean_all(v); }, x43, kStep) < kTol);
        CHECK(grad_check(
                  [&](Tape& t, Value v) {
                      return t.sum_all(t.mul(t.concat_rows(v, v), t.concat_rows(v, v)));
                  },
                  x43, kStep) < kTol);
        CHECK(grad_check(
                  [&](Tape& t, Value v) {
                      Value c = t.concat_cols(v, t.input(other));
                      return t.sum_all(t.mul(c, c));
                  },
                  x43, kStep) < kTol);
        CHECK(grad_check(
                  [&](Tape& t, Value v) {
                      Value s = t.slice_rows(v, 1, 3);
                      return t.sum_all(t.mul(s, s));
                  },
                  x43, kStep) < kTol);
        CHECK(grad_check(
                  [&](Tape& t, Value v) {
                      Value s = t.slice_cols(v, 0, 2);
                      return t.sum_all(t.mul(s, s));
                  },
                  x43, kStep) < kTol);
        CHECK(grad_check(
                  [&](Tape& t, Value v) {
                      return t.sum_all(t.mul(t.softmax_rows(v), t.input(other)));
                  },
                  x43, kStep) < kTol);
        CHECK(grad_check(
                  [&](Tape& t, Value v) {
                      return t.sum_all(t.mul(t.group_softmax(v, {2, 1, 3}), t.input(other)));
                  },
                  x43, kStep) < kTol);
        CHECK(grad_check(
                  [&](Tape& t, Value v) {
                      Value agg = t.aggregate_rows(v, {0, 1, 0, 1}, 2);
                      return t.sum_all(t.mul(agg, agg));
                  },
                  x43, kStep) < kTol);
        CHECK(grad_check(
                  [&](Tape& t, Value v) {
                      Value frame = t.col2im(v, 9, 1, 3, 2); // 4 windows, width 3, stride 2
                      return t.sum_all(t.mul(frame, frame));
                  },
                  random_in(4, 3), kStep) < kTol);
    }
}

TEST_CASE("layer norm gradients for input, gain and bias") {
    Rng rng(14);
    Matrix x = Matrix::random_uniform(3, 6, -2, 2, rng);
    Matrix gain = Matrix::random_uniform(1, 6, real(0.5), real(1.5), rng);
    Matrix bias = Matrix::random_uniform(1, 6, -1, 1, rng);
    Matrix weights = Matrix::random_uniform(3, 6, -1, 1, rng);

    CHECK(grad_check(
              [&](Tape& t, Value v) {
                  Value out = t.layer_norm_rows(v, t.input(gain), t.input(bias));
                  return t.sum_all(t.mul(out, t.input(weights)));
              },
              x, kStep) < kTol);
    CHECK(grad_check(
              [&](Tape& t, Value v) {
                  Value out = t.layer_norm_rows(t.input(x), v, t.input(bias));
                  return t.sum_all(t.mul(out, t.input(weights)));
              },
              gain, kStep) < kTol);
    CHECK(grad_check(
              [&](Tape& t, Value v) {
                  Value out = t.layer_norm_rows(t.input(x), t.input(gain), v);
                  return t.sum_all(t.mul(out, t.input(weights)));
              },
              bias, kStep) < kTol);
}

TEST_CASE("adjoint of an unused output stays zero") {
    Tape t;
    Value x = t.input(Matrix::from_rows({{1, 2}}));
    Value used = t.sum_all(t.mul(x, x));
    Value unused = t.scale(x, real(10));
    t.backward(used);
    CHECK(max_abs(t.grad(unused)) == 0);
    CHECK(t.grad(x)(0, 1) == doctest::Approx(4));
}

TEST_CASE("grad_check raises on a non-finite evaluation") {
    Matrix x = Matrix::from_rows({{-1.0}});
    CHECK_THROWS_AS(grad_check([](Tape& t, Value v) { return t.sum_all(t.log_elem(v)); }, x,
                               kStep),
                    EvalError);
}
