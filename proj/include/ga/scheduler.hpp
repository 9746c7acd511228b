#pragma once

#include <span>
#include <vector>

#include "ga/grouping.hpp"
#include "ga/matrix.hpp"

namespace ga {

/// Per-layer controller that shrinks the group count during training while
/// keeping the attention approximation inside the user's error bound.
struct SchedulerState {
    real epsilon = 2;     // user error bound, > 1
    real alpha = 0.9;     // momentum in (0, 1]
    real n_current = 1;   // real-valued smoothed group count
    real d_threshold = 0; // last derived distance threshold

    /// Group count to request from the next k-means call.
    std::size_t target_groups() const;
    void validate() const;
};

/// One cluster of key vectors: centroid plus its member rows.
struct KeyCluster {
    Matrix centroid;    // 1 x d
    Matrix member_keys; // size x d

    /// max over members of ||x - centroid||.
    real radius() const;
};

/// Materialize the clusters of a grouping for merge analysis.
std::vector<KeyCluster> clusters_of(const Grouping& g, const Matrix& keys);

/// Ordered merge condition: max over members x of `from` of
/// (||c_from - c_to|| + ||x - c_from||) <= d.
bool mergeable(const KeyCluster& from, const KeyCluster& to, real d);

struct MergeScanResult {
    std::vector<std::size_t> order;  // cluster indices, ascending centroid norm
    std::vector<bool> marked;        // per input cluster; only second-half clusters
    std::size_t merged_count = 0;    // D
    std::size_t first_half_size = 0; // |S1|, never marked
};

/// Split the clusters into two halves (ascending centroid norm; S1 is the
/// first half) and mark every S2 cluster that some S1 cluster can absorb:
/// the S1->S2 condition at threshold d and the S2->S1 condition at d/2.
MergeScanResult halved_merge_scan(const std::vector<KeyCluster>& clusters, real d);

/// Momentum shrink: returns the new real-valued count N - alpha*D, floored at 1.
real momentum_update(real n_current, std::size_t merged, real alpha);

struct SchedulerStepResult {
    std::size_t next_groups = 1;
    real d_threshold = 0;
    std::size_t merged = 0;
};

/// One per-epoch scheduler invocation: derive the distance threshold from the
/// live keys via the error bound, scan for mergeable clusters, and shrink the
/// smoothed count. The count never increases.
SchedulerStepResult scheduler_step(SchedulerState& state, const Grouping& grouping,
                                   const Matrix& keys);

/// Multi-head variant: shrinks by the smallest per-head merge count so the
/// bound holds for every head of the layer.
SchedulerStepResult scheduler_step_heads(SchedulerState& state,
                                         std::span<const Grouping> groupings,
                                         std::span<const Matrix> keys_per_head);

} // namespace ga
