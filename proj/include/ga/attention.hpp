#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "ga/grouping.hpp"
#include "ga/matrix.hpp"
#include "ga/tape.hpp"

namespace ga {

/// Projection weights for one self-attention module.
struct AttentionLayer {
    Matrix w_q; // d_h x d_k
    Matrix w_k; // d_h x d_k
    Matrix w_v; // d_h x d_v
    std::size_t heads = 1;

    /// 1/sqrt(per-head key width); applied identically on the exact and the
    /// grouped score paths so both approximate the same matrix.
    real scale() const;
    void validate() const;

    static AttentionLayer random(std::size_t d_h, std::size_t d_k, std::size_t d_v,
                                 std::size_t heads, Rng& rng);
};

struct VanillaAttentionResult {
    Matrix output; // n x d_v
    Matrix scores; // n x n, rows sum to 1
};

struct GroupAttentionOutput {
    Matrix output;       // n x d_v
    Matrix group_scores; // n x N, count-weighted rows sum to 1
    Grouping grouping;
};

// ---- score-level building blocks (single head) ------------------------------

/// Exact scaled-dot-product attention from projected inputs: (O, A).
std::pair<Matrix, Matrix> vanilla_attention_qkv(const Matrix& q, const Matrix& k, const Matrix& v,
                                                real scale);

/// Grouped attention from projected inputs: aggregates values per group,
/// scores queries against representatives only, and normalizes with the
/// count-weighted softmax. O(n*N*d) time, O(n*N) space. Returns (O, A_group).
std::pair<Matrix, Matrix> group_attention_qkv(const Matrix& q, const Matrix& v,
                                              const Matrix& representatives,
                                              const std::vector<std::size_t>& group_sizes,
                                              const std::vector<std::size_t>& assignment,
                                              real scale);

/// Count-weighted softmax: out[i,k] = exp(p[i,k]) / sum_j sizes[j]*exp(p[i,j]).
/// Row-max stabilized. Throws InvalidGroupingError on a nonpositive size.
Matrix group_softmax(const Matrix& scores, const std::vector<std::size_t>& group_sizes);

/// Expand an n x N group score matrix to the full n x n matrix by copying
/// column assignment[j] into column j. Test/analysis helper.
Matrix restore_full(const Matrix& group_scores, const Grouping& g);

// ---- module-level operations -------------------------------------------------

/// Exact attention over hidden embeddings (single-head layers only; the
/// encoder stack handles multi-head splitting itself).
VanillaAttentionResult vanilla_attention(const Matrix& hidden, const AttentionLayer& layer);

/// Grouped attention over hidden embeddings using a caller-provided grouping
/// of the key vectors (single-head layers only).
GroupAttentionOutput group_attention(const Matrix& hidden, const AttentionLayer& layer,
                                     const Grouping& g);

struct BoundCheckResult {
    real worst_ratio = 1;
    bool pass = false;
};

/// Worst multiplicative deviation max(approx/exact, exact/approx) over all
/// entries; passes iff it stays within epsilon. Both matrices must be
/// strictly positive.
BoundCheckResult check_error_bound(const Matrix& exact, const Matrix& approx, real epsilon);

// ---- tape forward (training path) --------------------------------------------

struct AttentionParamRefs {
    Value w_q, w_k, w_v;
    std::size_t heads = 1;
    real scale = 1;
};

struct GroupAttentionSettings {
    std::size_t n_groups = 1;
    std::size_t kmeans_iterations = 2;
    std::uint64_t seed = 0;
};

/// Per-head grouping diagnostics captured during a group-mode forward pass.
struct GroupForwardInfo {
    std::vector<Grouping> per_head;
    std::vector<Matrix> keys_per_head;
};

/// Multi-head attention forward on the tape. When `group` is null the exact
/// path is taken; otherwise keys are clustered per head (assignments constant,
/// gradients flow through representatives and aggregated values) and the
/// grouped path is used. `info_out`, when given, receives the groupings.
Value attention_forward(Tape& tape, Value hidden, const AttentionParamRefs& params,
                        const GroupAttentionSettings* group, GroupForwardInfo* info_out);

} // namespace ga
