#include "ga/attention.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ga {

real AttentionLayer::scale() const {
    return real(1) / std::sqrt(static_cast<real>(w_k.cols() / heads));
}

void AttentionLayer::validate() const {
    if (heads == 0) throw std::invalid_argument("attention: zero heads");
    if (w_q.cols() != w_k.cols()) {
        throw ShapeError("attention: W_Q " + shape_str(w_q) + " vs W_K " + shape_str(w_k));
    }
    if (w_q.rows() != w_k.rows() || w_q.rows() != w_v.rows()) {
        throw ShapeError("attention: projection input widths differ");
    }
    if (w_k.cols() % heads != 0 || w_v.cols() % heads != 0) {
        throw std::invalid_argument("attention: d_k and d_v must divide across heads");
    }
}

AttentionLayer AttentionLayer::random(std::size_t d_h, std::size_t d_k, std::size_t d_v,
                                      std::size_t heads, Rng& rng) {
    AttentionLayer layer;
    real sd = real(1) / std::sqrt(static_cast<real>(d_h));
    layer.w_q = Matrix::random_normal(d_h, d_k, 0, sd, rng);
    layer.w_k = Matrix::random_normal(d_h, d_k, 0, sd, rng);
    layer.w_v = Matrix::random_normal(d_h, d_v, 0, sd, rng);
    layer.heads = heads;
    layer.validate();
    return layer;
}

std::pair<Matrix, Matrix> vanilla_attention_qkv(const Matrix& q, const Matrix& k, const Matrix& v,
                                                real s) {
    Matrix scores = softmax_rows(scale(matmul(q, transpose(k)), s));
    Matrix out = matmul(scores, v);
    return {std::move(out), std::move(scores)};
}

Matrix group_softmax(const Matrix& scores, const std::vector<std::size_t>& group_sizes) {
    if (group_sizes.size() != scores.cols()) {
        throw ShapeError("group_softmax: " + std::to_string(group_sizes.size()) +
                         " sizes for scores " + shape_str(scores));
    }
    for (std::size_t k = 0; k < group_sizes.size(); ++k) {
        if (group_sizes[k] == 0) {
            throw InvalidGroupingError("group_softmax: group " + std::to_string(k) + " is empty");
        }
    }
    Matrix out(scores.rows(), scores.cols());
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        real mx = scores(i, 0);
        for (std::size_t j = 1; j < scores.cols(); ++j) mx = std::max(mx, scores(i, j));
        real denom = 0;
        for (std::size_t j = 0; j < scores.cols(); ++j) {
            out(i, j) = std::exp(scores(i, j) - mx);
            denom += static_cast<real>(group_sizes[j]) * out(i, j);
        }
        for (std::size_t j = 0; j < scores.cols(); ++j) out(i, j) /= denom;
    }
    return out;
}

std::pair<Matrix, Matrix> group_attention_qkv(const Matrix& q, const Matrix& v,
                                              const Matrix& representatives,
                                              const std::vector<std::size_t>& group_sizes,
                                              const std::vector<std::size_t>& assignment,
                                              real s) {
    const std::size_t n = q.rows();
    const std::size_t n_groups = representatives.rows();
    if (assignment.size() != n || v.rows() != n) {
        throw ShapeError("group_attention: assignment/value rows do not match queries");
    }
    // Embedding aggregation: one value row per group.
    Matrix agg(n_groups, v.cols());
    for (std::size_t r = 0; r < n; ++r) {
        std::size_t k = assignment[r];
        if (k >= n_groups) throw InvalidGroupingError("group_attention: assignment out of range");
        for (std::size_t j = 0; j < v.cols(); ++j) agg(k, j) += v(r, j);
    }
    Matrix scores = group_softmax(scale(matmul(q, transpose(representatives)), s), group_sizes);
    Matrix out = matmul(scores, agg);
    return {std::move(out), std::move(scores)};
}

Matrix restore_full(const Matrix& group_scores, const Grouping& g) {
    g.validate(g.assignment.size());
    if (group_scores.cols() != g.group_count) {
        throw ShapeError("restore_full: scores " + shape_str(group_scores) + " vs " +
                         std::to_string(g.group_count) + " groups");
    }
    Matrix full(group_scores.rows(), g.assignment.size());
    for (std::size_t i = 0; i < full.rows(); ++i)
        for (std::size_t j = 0; j < full.cols(); ++j)
            full(i, j) = group_scores(i, g.assignment[j]);
    return full;
}

namespace {
void require_single_head(const AttentionLayer& layer, const char* op) {
    if (layer.heads != 1) {
        throw std::invalid_argument(std::string(op) +
                                    ": defined for single-head layers; the encoder stack "
                                    "splits heads itself");
    }
}
} // namespace

VanillaAttentionResult vanilla_attention(const Matrix& hidden, const AttentionLayer& layer) {
    layer.validate();
    require_single_head(layer, "vanilla_attention");
    Matrix q = matmul(hidden, layer.w_q);
    Matrix k = matmul(hidden, layer.w_k);
    Matrix v = matmul(hidden, layer.w_v);
    auto [out, scores] = vanilla_attention_qkv(q, k, v, layer.scale());
    ensure_finite(out, "vanilla_attention");
    return {std::move(out), std::move(scores)};
}

GroupAttentionOutput group_attention(const Matrix& hidden, const AttentionLayer& layer,
                                     const Grouping& g) {
    layer.validate();
    require_single_head(layer, "group_attention");
    g.validate(hidden.rows());
    Matrix q = matmul(hidden, layer.w_q);
    Matrix v = matmul(hidden, layer.w_v);
    auto [out, scores] =
        group_attention_qkv(q, v, g.representatives, g.group_size, g.assignment, layer.scale());
    ensure_finite(out, "group_attention");
    return {std::move(out), std::move(scores), g};
}

BoundCheckResult check_error_bound(const Matrix& exact, const Matrix& approx, real epsilon) {
    if (!exact.same_shape(approx)) {
        throw ShapeError("check_error_bound: " + shape_str(exact) + " vs " + shape_str(approx));
    }
    if (epsilon <= real(1)) throw std::invalid_argument("check_error_bound: epsilon must be > 1");
    real worst = 1;
    for (std::size_t i = 0; i < exact.size(); ++i) {
        real a = exact.data()[i];
        real b = approx.data()[i];
        if (!(a > real(0)) || !(b > real(0)) || !std::isfinite(a) || !std::isfinite(b)) {
            throw DegenerateAttentionError("check_error_bound: nonpositive attention entry");
        }
        worst = std::max(worst, std::max(a / b, b / a));
    }
    return {worst, worst <= epsilon};
}

Value attention_forward(Tape& tape, Value hidden, const AttentionParamRefs& params,
                        const GroupAttentionSettings* group, GroupForwardInfo* info_out) {
    const std::size_t d_k = tape.value(params.w_k).cols();
    const std::size_t d_v = tape.value(params.w_v).cols();
    const std::size_t heads = params.heads;
    const std::size_t hk = d_k / heads, hv = d_v / heads;

    Value q = tape.matmul(hidden, params.w_q);
    Value k = tape.matmul(hidden, params.w_k);
    Value v = tape.matmul(hidden, params.w_v);

    Value out;
    for (std::size_t h = 0; h < heads; ++h) {
        Value qh = heads == 1 ? q : tape.slice_cols(q, h * hk, (h + 1) * hk);
        Value kh = heads == 1 ? k : tape.slice_cols(k, h * hk, (h + 1) * hk);
        Value vh = heads == 1 ? v : tape.slice_cols(v, h * hv, (h + 1) * hv);

        Value oh;
        if (!group) {
            // Scale the queries rather than the n x n score matrix; one fewer
            // quadratic-size node on the tape.
            Value p = tape.matmul(tape.scale(qh, params.scale), tape.transpose(kh));
            Value a = tape.softmax_rows(p);
            oh = tape.matmul(a, vh);
        } else {
            // Copy: growing the tape below reallocates its node storage, so a
            // reference from value() must not be held across those calls.
            Matrix keys = tape.value(kh);
            std::size_t n_groups = std::min(group->n_groups, keys.rows());
            n_groups = std::max<std::size_t>(n_groups, 1);
            Grouping g = kmeans_group(keys, n_groups, group->kmeans_iterations,
                                      group->seed + h * 0x9E37ull);
            // Representatives as differentiable means of member keys; the
            // assignment itself is constant for this pass.
            std::vector<real> inv_sizes(g.group_count);
            for (std::size_t i = 0; i < g.group_count; ++i)
                inv_sizes[i] = real(1) / static_cast<real>(g.group_size[i]);
            Value reps = tape.scale_rows(tape.aggregate_rows(kh, g.assignment, g.group_count),
                                         std::move(inv_sizes));
            Value p = tape.matmul(tape.scale(qh, params.scale), tape.transpose(reps));
            Value a = tape.group_softmax(p, std::vector<std::size_t>(g.group_size));
            Value agg = tape.aggregate_rows(vh, g.assignment, g.group_count);
            oh = tape.matmul(a, agg);
            if (info_out) {
                info_out->per_head.push_back(std::move(g));
                info_out->keys_per_head.push_back(std::move(keys));
            }
        }
        out = h == 0 ? oh : tape.concat_cols(out, oh);
    }
    return out;
}

} // namespace ga
