#include "ga/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace ga {

Value Tape::push(Matrix value, std::function<void(Tape&)> back) {
    nodes_.push_back(Node{std::move(value), Matrix(), std::move(back)});
    return Value{nodes_.size() - 1};
}

void Tape::accumulate(std::size_t index, const Matrix& g) {
    Node& n = nodes_[index];
    if (n.adjoint.empty()) {
        n.adjoint = g;
    } else {
        for (std::size_t i = 0; i < g.size(); ++i) n.adjoint.data()[i] += g.data()[i];
    }
}

Matrix& Tape::adj(std::size_t index) { return nodes_[index].adjoint; }

Matrix Tape::grad(Value v) const {
    const Node& n = nodes_[v.index];
    if (n.adjoint.empty()) return Matrix(n.value.rows(), n.value.cols());
    return n.adjoint;
}

Value Tape::input(Matrix v) { return push(std::move(v), nullptr); }

Value Tape::matmul(Value a, Value b) {
    std::size_t ia = a.index, ib = b.index;
    Value out = push(ga::matmul(value(a), value(b)), nullptr);
    std::size_t io = out.index;
    nodes_[io].back = [ia, ib, io](Tape& t) {
        const Matrix& g = t.adj(io);
        t.accumulate(ia, ga::matmul(g, ga::transpose(t.nodes_[ib].value)));
        t.accumulate(ib, ga::matmul(ga::transpose(t.nodes_[ia].value), g));
    };
    return out;
}

Value Tape::transpose(Value a) {
    std::size_t ia = a.index;
    Matrix c = ga::transpose(value(a));
    Value out = push(std::move(c), nullptr);
    std::size_t io = out.index;
    nodes_[io].back = [ia, io](Tape& t) { t.accumulate(ia, ga::transpose(t.adj(io))); };
    return out;
}

Value Tape::add(Value a, Value b) {
    std::size_t ia = a.index, ib = b.index;
    Value out = push(ga::add(value(a), value(b)), nullptr);
    std::size_t io = out.index;
    nodes_[io].back = [ia, ib, io](Tape& t) {
        t.accumulate(ia, t.adj(io));
        t.accumulate(ib, t.adj(io));
    };
    return out;
}

Value Tape::sub(Value a, Value b) {
    std::size_t ia = a.index, ib = b.index;
    Value out = push(ga::sub(value(a), value(b)), nullptr);
    std::size_t io = out.index;
    nodes_[io].back = [ia, ib, io](Tape& t) {
        t.accumulate(ia, t.adj(io));
        t.accumulate(ib, ga::scale(t.adj(io), real(-1)));
    };
    return out;
}

Value Tape::mul(Value a, Value b) {
    std::size_t ia = a.index, ib = b.index;
    Value out = push(ga::mul(value(a), value(b)), nullptr);
    std::size_t io = out.index;
    nodes_[io].back = [ia, ib, io](Tape& t) {
        t.accumulate(ia, ga::mul(t.adj(io), t.nodes_[ib].value));
        t.accumulate(ib, ga::mul(t.adj(io), t.nodes_[ia].value));
    };
    return out;
}

Value Tape::scale(Value a, real s) {
    std::size_t ia = a.index;
    Value out = push(ga::scale(value(a), s), nullptr);
    std::size_t io = out.index;
    nodes_[io].back = [ia, io, s](Tape& t) { t.accumulate(ia, ga::scale(t.adj(io), s)); };
    return out;
}

Value Tape::mul_const(Value a, Matrix c) {
    std::size_t ia = a.index;
    Value out = push(ga::mul(value(a), c), nullptr);
    std::size_t io = out.index;
    nodes_[io].back = [ia, io, mask = std::move(c)](Tape& t) {
        t.accumulate(ia, ga::mul(t.adj(io), mask));
    };
    return out;
}

Value Tape::add_rowvec(Value m, Value v) {
    std::size_t im = m.index, iv = v.index;
    Value out = push(ga::add_rowvec(value(m), value(v)), nullptr);
    std::size_t io = out.index;
    nodes_[io].back = [im, iv, io](Tape& t) {
        t.accumulate(im, t.adj(io));
        t.accumulate(iv, ga::col_sum(t.adj(io)));
    };
    return out;
}

Value Tape::scale_rows(Value m, std::vector<real> factors) {
    std::size_t im = m.index;
    Value out = push(ga::scale_rows(value(m), factors), nullptr);
    std::size_t io = out.index;
    nodes_[io].back = [im, io, f = std::move(factors)](Tape& t) {
        t.accumulate(im, ga::scale_rows(t.adj(io), f));
    };
    return out;
}

Value Tape::exp_elem(Value a) {
    std::size_t ia = a.index;
    Value out = push(ga::exp_elem(value(a)), nullptr);
    std::size_t io = out.index;
    nodes_[io].back = [ia, io](Tape& t) {
        t.accumulate(ia, ga::mul(t.adj(io), t.nodes_[io].value));
    };
    return out;
}

Value Tape::log_elem(Value a) {
    std::size_t ia = a.index;
    Value out = push(ga::log_elem(value(a)), nullptr);
    std::size_t io = out.index;
    nodes_[io].back = [ia, io](Tape& t) {
        const Matrix& x = t.nodes_[ia].value;
        Matrix g = t.adj(io);
        for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] /= x.data()[i];
        t.accumulate(ia, g);
    };
    return out;
}

Value Tape::relu(Value a) {
    std::size_t ia = a.index;
    Value out = push(ga::relu(value(a)), nullptr);
    std::size_t io = out.index;
    nodes_[io].back = [ia, io](Tape& t) {
        const Matrix& x = t.nodes_[ia].value;
        Matrix g = t.adj(io);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (x.data()[i] <= real(0)) g.data()[i] = real(0);
        t.accumulate(ia, g);
    };
    return out;
}

Value Tape::row_sum(Value a) {
    std::size_t ia = a.index;
    Value out = push(ga::row_sum(value(a)), nullptr);
    std::size_t io = out.index;
    nodes_[io].back = [ia, io](Tape& t) {
        const Matrix& x = t.nodes_[ia].value;
        const Matrix& g = t.adj(io);
        Matrix gx(x.rows(), x.cols());
        for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t j = 0; j < x.cols(); ++j) gx(i, j) = g(i, 0);
        t.accumulate(ia, gx);
    };
    return out;
}

Value Tape::col_sum(Value a) {
    std::size_t ia = a.index;
    Value out = push(ga::col_sum(value(a)), nullptr);
    std::size_t io = out.index;
    nodes_[io].back = [ia, io](Tape& t) {
        const Matrix& x = t.nodes_[ia].value;
        const Matrix& g = t.adj(io);
        Matrix gx(x.rows(), x.cols());
        for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t j = 0; j < x.cols(); ++j) gx(i, j) = g(0, j);
        t.accumulate(ia, gx);
    };
    return out;
}

Value Tape::sum_all(Value a) {
    std::size_t ia = a.index;
    Matrix s(1, 1);
    s(0, 0) = ga::sum_all(value(a));
    Value out = push(std::move(s), nullptr);
    std::size_t io = out.index;
    nodes_[io].back = [ia, io](Tape& t) {
        const Matrix& x = t.nodes_[ia].value;
        t.accumulate(ia, Matrix::filled(x.rows(), x.cols(), t.adj(io)(0, 0)));
    };
    return out;
}

Value Tape::mean_all(Value a) {
    std::size_t ia = a.index;
    Matrix s(1, 1);
    s(0, 0) = ga::mean_all(value(a));
    Value out = push(std::move(s), nullptr);
    std::size_t io = out.index;
    nodes_[io].back = [ia, io](Tape& t) {
        const Matrix& x = t.nodes_[ia].value;
        real g = t.adj(io)(0, 0) / static_cast<real>(x.size());
        t.accumulate(ia, Matrix::filled(x.rows(), x.cols(), g));
    };
    return out;
}

Value Tape::concat_rows(Value a, Value b) {
    std::size_t ia = a.index, ib = b.index;
    Value out = push(ga::concat_rows(value(a), value(b)), nullptr);
    std::size_t io = out.index;
    std::size_t split = value(a).rows();
    nodes_[io].back = [ia, ib, io, split](Tape& t) {
        const Matrix& g = t.adj(io);
        t.accumulate(ia, ga::slice_rows(g, 0, split));
        t.accumulate(ib, ga::slice_rows(g, split, g.rows()));
    };
    return out;
}

Value Tape::concat_cols(Value a, Value b) {
    std::size_t ia = a.index, ib = b.index;
    Value out = push(ga::concat_cols(value(a), value(b)), nullptr);
    std::size_t io = out.index;
    std::size_t split = value(a).cols();
    nodes_[io].back = [ia, ib, io, split](Tape& t) {
        const Matrix& g = t.adj(io);
        t.accumulate(ia, ga::slice_cols(g, 0, split));
        t.accumulate(ib, ga::slice_cols(g, split, g.cols()));
    };
    return out;
}

Value Tape::slice_rows(Value a, std::size_t r0, std::size_t r1) {
    std::size_t ia = a.index;
    Value out = push(ga::slice_rows(value(a), r0, r1), nullptr);
    std::size_t io = out.index;
    nodes_[io].back = [ia, io, r0](Tape& t) {
        const Matrix& x = t.nodes_[ia].value;
        const Matrix& g = t.adj(io);
        Matrix gx(x.rows(), x.cols());
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) gx(r0 + i, j) = g(i, j);
        t.accumulate(ia, gx);
    };
    return out;
}

Value Tape::slice_cols(Value a, std::size_t c0, std::size_t c1) {
    std::size_t ia = a.index;
    Value out = push(ga::slice_cols(value(a), c0, c1), nullptr);
    std::size_t io = out.index;
    nodes_[io].back = [ia, io, c0](Tape& t) {
        const Matrix& x = t.nodes_[ia].value;
        const Matrix& g = t.adj(io);
        Matrix gx(x.rows(), x.cols());
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) gx(i, c0 + j) = g(i, j);
        t.accumulate(ia, gx);
    };
    return out;
}

Value Tape::softmax_rows(Value a) {
    std::size_t ia = a.index;
    Value out = push(ga::softmax_rows(value(a)), nullptr);
    std::size_t io = out.index;
    nodes_[io].back = [ia, io](Tape& t) {
        const Matrix& y = t.nodes_[io].value;
        const Matrix& g = t.adj(io);
        Matrix gx(y.rows(), y.cols());
        for (std::size_t i = 0; i < y.rows(); ++i) {
            real rowdot = 0;
            for (std::size_t j = 0; j < y.cols(); ++j) rowdot += g(i, j) * y(i, j);
            for (std::size_t j = 0; j < y.cols(); ++j)
                gx(i, j) = y(i, j) * (g(i, j) - rowdot);
        }
        t.accumulate(ia, gx);
    };
    return out;
}

Value Tape::group_softmax(Value scores, std::vector<std::size_t> group_sizes) {
    const Matrix& p = value(scores);
    if (group_sizes.size() != p.cols()) {
        throw ShapeError("group_softmax: " + std::to_string(group_sizes.size()) +
                         " sizes for scores " + shape_str(p));
    }
    Matrix out(p.rows(), p.cols());
    for (std::size_t i = 0; i < p.rows(); ++i) {
        real mx = p(i, 0);
        for (std::size_t j = 1; j < p.cols(); ++j) mx = std::max(mx, p(i, j));
        real denom = 0;
        for (std::size_t j = 0; j < p.cols(); ++j) {
            out(i, j) = std::exp(p(i, j) - mx);
            denom += static_cast<real>(group_sizes[j]) * out(i, j);
        }
        for (std::size_t j = 0; j < p.cols(); ++j) out(i, j) /= denom;
    }
    std::size_t ip = scores.index;
    Value v = push(std::move(out), nullptr);
    std::size_t io = v.index;
    nodes_[io].back = [ip, io, sizes = std::move(group_sizes)](Tape& t) {
        const Matrix& y = t.nodes_[io].value;
        const Matrix& g = t.adj(io);
        Matrix gx(y.rows(), y.cols());
        for (std::size_t i = 0; i < y.rows(); ++i) {
            real rowdot = 0;
            for (std::size_t j = 0; j < y.cols(); ++j) rowdot += g(i, j) * y(i, j);
            for (std::size_t j = 0; j < y.cols(); ++j)
                gx(i, j) = y(i, j) * (g(i, j) - static_cast<real>(sizes[j]) * rowdot);
        }
        t.accumulate(ip, gx);
    };
    return v;
}

Value Tape::aggregate_rows(Value a, std::vector<std::size_t> assignment, std::size_t n_groups) {
    const Matrix& x = value(a);
    if (assignment.size() != x.rows()) {
        throw ShapeError("aggregate_rows: " + std::to_string(assignment.size()) +
                         " assignments for " + shape_str(x));
    }
    Matrix out(n_groups, x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        std::size_t k = assignment[r];
        if (k >= n_groups) throw ShapeError("aggregate_rows: assignment out of range");
        for (std::size_t j = 0; j < x.cols(); ++j) out(k, j) += x(r, j);
    }
    std::size_t ia = a.index;
    Value v = push(std::move(out), nullptr);
    std::size_t io = v.index;
    nodes_[io].back = [ia, io, asg = std::move(assignment)](Tape& t) {
        const Matrix& x2 = t.nodes_[ia].value;
        const Matrix& g = t.adj(io);
        Matrix gx(x2.rows(), x2.cols());
        for (std::size_t r = 0; r < x2.rows(); ++r)
            for (std::size_t j = 0; j < x2.cols(); ++j) gx(r, j) = g(asg[r], j);
        t.accumulate(ia, gx);
    };
    return v;
}

Value Tape::layer_norm_rows(Value x, Value gain, Value bias, real eps) {
    const Matrix& xv = value(x);
    const Matrix& gv = value(gain);
    const Matrix& bv = value(bias);
    if (gv.rows() != 1 || gv.cols() != xv.cols() || bv.rows() != 1 || bv.cols() != xv.cols()) {
        throw ShapeError("layer_norm_rows: gain " + shape_str(gv) + " / bias " + shape_str(bv) +
                         " for input " + shape_str(xv));
    }
    const std::size_t n = xv.rows(), c = xv.cols();
    Matrix normed(n, c); // saved for backward
    std::vector<real> inv_std(n);
    Matrix out(n, c);
    for (std::size_t i = 0; i < n; ++i) {
        real mu = 0;
        for (std::size_t j = 0; j < c; ++j) mu += xv(i, j);
        mu /= static_cast<real>(c);
        real var = 0;
        for (std::size_t j = 0; j < c; ++j) {
            real d = xv(i, j) - mu;
            var += d * d;
        }
        var /= static_cast<real>(c);
        real inv = real(1) / std::sqrt(var + eps);
        inv_std[i] = inv;
        for (std::size_t j = 0; j < c; ++j) {
            normed(i, j) = (xv(i, j) - mu) * inv;
            out(i, j) = gv(0, j) * normed(i, j) + bv(0, j);
        }
    }
    std::size_t ix = x.index, ig = gain.index, ib = bias.index;
    Value v = push(std::move(out), nullptr);
    std::size_t io = v.index;
    nodes_[io].back = [ix, ig, ib, io, normed = std::move(normed),
                       inv = std::move(inv_std)](Tape& t) {
        const Matrix& g = t.adj(io);
        const Matrix& gainv = t.nodes_[ig].value;
        const std::size_t n2 = g.rows(), c2 = g.cols();
        Matrix dgain(1, c2), dbias(1, c2), dx(n2, c2);
        for (std::size_t i = 0; i < n2; ++i) {
            real mean_dh = 0, mean_dh_nh = 0;
            for (std::size_t j = 0; j < c2; ++j) {
                real dh = g(i, j) * gainv(0, j);
                mean_dh += dh;
                mean_dh_nh += dh * normed(i, j);
                dgain(0, j) += g(i, j) * normed(i, j);
                dbias(0, j) += g(i, j);
            }
            mean_dh /= static_cast<real>(c2);
            mean_dh_nh /= static_cast<real>(c2);
            for (std::size_t j = 0; j < c2; ++j) {
                real dh = g(i, j) * gainv(0, j);
                dx(i, j) = inv[i] * (dh - mean_dh - normed(i, j) * mean_dh_nh);
            }
        }
        t.accumulate(ix, dx);
        t.accumulate(ig, dgain);
        t.accumulate(ib, dbias);
    };
    return v;
}

Value Tape::cross_entropy_mean(Value logits, Matrix onehot) {
    const Matrix& z = value(logits);
    if (!z.same_shape(onehot)) {
        throw ShapeError("cross_entropy_mean: logits " + shape_str(z) + " vs targets " +
                         shape_str(onehot));
    }
    const std::size_t n = z.rows(), c = z.cols();
    Matrix probs = ga::softmax_rows(z); // saved for backward
    real loss = 0;
    for (std::size_t i = 0; i < n; ++i) {
        // log-sum-exp form: (1/C) * (lse - logit_target), numerically stable
        real mx = z(i, 0);
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, z(i, j));
        real lse = 0;
        for (std::size_t j = 0; j < c; ++j) lse += std::exp(z(i, j) - mx);
        lse = mx + std::log(lse);
        for (std::size_t j = 0; j < c; ++j)
            if (onehot(i, j) != real(0)) loss += onehot(i, j) * (lse - z(i, j));
    }
    loss /= static_cast<real>(c) * static_cast<real>(n);
    Matrix out(1, 1);
    out(0, 0) = loss;
    std::size_t iz = logits.index;
    Value v = push(std::move(out), nullptr);
    std::size_t io = v.index;
    nodes_[io].back = [iz, io, probs = std::move(probs), onehot = std::move(onehot)](Tape& t) {
        real g = t.adj(io)(0, 0);
        const std::size_t n2 = probs.rows(), c2 = probs.cols();
        real coef = g / (static_cast<real>(c2) * static_cast<real>(n2));
        Matrix dz(n2, c2);
        for (std::size_t i = 0; i < n2; ++i)
            for (std::size_t j = 0; j < c2; ++j)
                dz(i, j) = coef * (probs(i, j) - onehot(i, j));
        t.accumulate(iz, dz);
    };
    return v;
}

Value Tape::col2im(Value contrib, std::size_t t_len, std::size_t channels, std::size_t window,
                   std::size_t stride) {
    const Matrix& c = value(contrib);
    if (c.cols() != channels * window) {
        throw ShapeError("col2im: contrib " + shape_str(c) + " does not match channels*window = " +
                         std::to_string(channels * window));
    }
    const std::size_t n = c.rows();
    if (n == 0 || t_len < window || (n - 1) * stride + window > t_len) {
        throw ShapeError("col2im: " + std::to_string(n) + " windows (w=" + std::to_string(window) +
                         ", stride=" + std::to_string(stride) + ") do not fit length " +
                         std::to_string(t_len));
    }
    Matrix out(t_len, channels);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < channels; ++ch)
            for (std::size_t l = 0; l < window; ++l)
                out(i * stride + l, ch) += c(i, ch * window + l);
    std::size_t ic = contrib.index;
    Value v = push(std::move(out), nullptr);
    std::size_t io = v.index;
    nodes_[io].back = [ic, io, n, channels, window, stride](Tape& t) {
        const Matrix& g = t.adj(io);
        Matrix gc(n, channels * window);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t ch = 0; ch < channels; ++ch)
                for (std::size_t l = 0; l < window; ++l)
                    gc(i, ch * window + l) = g(i * stride + l, ch);
        t.accumulate(ic, gc);
    };
    return v;
}

void Tape::backward(Value scalar_root) {
    const Matrix& rootv = value(scalar_root);
    if (rootv.rows() != 1 || rootv.cols() != 1) {
        throw ShapeError("backward: root must be 1x1, got " + shape_str(rootv));
    }
    Matrix seed(1, 1);
    seed(0, 0) = real(1);
    nodes_[scalar_root.index].adjoint = seed;
    for (std::size_t i = scalar_root.index + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.adjoint.empty() || !n.back) continue;
        n.back(*this);
    }
}

real grad_check(const std::function<Value(Tape&, Value)>& f, const Matrix& x, real step) {
    Tape tape;
    Value leaf = tape.input(x);
    Value out = f(tape, leaf);
    const Matrix& v = tape.value(out);
    if (v.rows() != 1 || v.cols() != 1) {
        throw std::invalid_argument("grad_check: f must produce a 1x1 value");
    }
    if (!std::isfinite(v(0, 0))) throw EvalError("grad_check: f(x) is not finite");
    tape.backward(out);
    Matrix g = tape.grad(leaf);

    auto eval = [&](const Matrix& point) {
        Tape t2;
        Value l2 = t2.input(point);
        real y = t2.value(f(t2, l2))(0, 0);
        if (!std::isfinite(y)) throw EvalError("grad_check: perturbed evaluation not finite");
        return y;
    };

    real worst = 0;
    Matrix probe = x;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < x.cols(); ++j) {
            probe(i, j) = x(i, j) + step;
            real fp = eval(probe);
            probe(i, j) = x(i, j) - step;
            real fm = eval(probe);
            probe(i, j) = x(i, j);
            real fd = (fp - fm) / (2 * step);
            real gi = g(i, j);
            real rel = std::abs(gi - fd) / std::max({real(1), std::abs(gi), std::abs(fd)});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

} // namespace ga
