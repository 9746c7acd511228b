#pragma once

#include <cstdint>
#include <vector>

#include "ga/matrix.hpp"

namespace ga {

/// Partition of n key vectors into N groups, each represented by its centroid.
struct Grouping {
    std::size_t group_count = 0;                 // N
    std::vector<std::size_t> assignment;         // n entries in [0, N)
    std::vector<std::size_t> group_size;         // N positive sizes summing to n
    Matrix representatives;                      // N x d centroid matrix
    real max_member_dist = 0;                    // max_i ||k_i - rep[assignment_i]||
    real key_radius = 0;                         // max_i ||k_i||

    void validate(std::size_t n_keys) const;
};

/// K-means over key rows with k-means++ seeding and capped Lloyd iterations.
/// Assignment distances use ||v||^2 + ||c||^2 - 2 v.c computed via one matrix
/// product. Ties break to the lowest group index; empty clusters are repaired
/// by stealing the farthest point from the largest cluster. If objective_out
/// is given it receives the clustering objective after each completed
/// iteration (non-increasing).
Grouping kmeans_group(const Matrix& keys, std::size_t n_groups, std::size_t iterations,
                      std::uint64_t seed, std::vector<real>* objective_out = nullptr);

/// Recompute (max member-to-representative distance, key radius) by scanning.
std::pair<real, real> grouping_stats(const Grouping& g, const Matrix& keys);

/// Build a Grouping from fixed assignments: centroids, sizes and stats are
/// derived from the keys. Used by schedulers and tests that construct
/// groupings directly.
Grouping grouping_from_assignment(const Matrix& keys, std::vector<std::size_t> assignment,
                                  std::size_t n_groups);

/// Pairwise squared distances ||a_i - b_j||^2 via the product formulation;
/// entries clamped at zero. a: n x d, b: m x d -> n x m.
Matrix pairwise_sq_dists(const Matrix& a, const Matrix& b);

} // namespace ga
