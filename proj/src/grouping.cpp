#include "ga/grouping.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "ga/rng.hpp"

namespace ga {

void Grouping::validate(std::size_t n_keys) const {
    if (group_count == 0) throw InvalidGroupingError("grouping: zero groups");
    if (assignment.size() != n_keys) {
        throw InvalidGroupingError("grouping: " + std::to_string(assignment.size()) +
                                   " assignments for " + std::to_string(n_keys) + " keys");
    }
    if (group_size.size() != group_count || representatives.rows() != group_count) {
        throw InvalidGroupingError("grouping: inconsistent group count");
    }
    std::vector<std::size_t> counted(group_count, 0);
    for (std::size_t a : assignment) {
        if (a >= group_count) throw InvalidGroupingError("grouping: assignment out of range");
        ++counted[a];
    }
    for (std::size_t k = 0; k < group_count; ++k) {
        if (group_size[k] == 0) {
            throw InvalidGroupingError("grouping: empty group " + std::to_string(k));
        }
        if (counted[k] != group_size[k]) {
            throw InvalidGroupingError("grouping: size mismatch in group " + std::to_string(k));
        }
    }
}

Matrix pairwise_sq_dists(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("pairwise_sq_dists: " + shape_str(a) + " vs " + shape_str(b));
    }
    std::vector<real> a2(a.rows()), b2(b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) a2[i] = dot(a.row(i), a.row(i));
    for (std::size_t j = 0; j < b.rows(); ++j) b2[j] = dot(b.row(j), b.row(j));
    Matrix cross = matmul(a, transpose(b)); // the single product that carries the work
    Matrix d(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.rows(); ++j)
            d(i, j) = std::max(real(0), a2[i] + b2[j] - 2 * cross(i, j));
    return d;
}

namespace {

Matrix centroids_of(const Matrix& keys, const std::vector<std::size_t>& assignment,
                    const std::vector<std::size_t>& sizes) {
    Matrix c(sizes.size(), keys.cols());
    for (std::size_t r = 0; r < keys.rows(); ++r) {
        std::size_t k = assignment[r];
        for (std::size_t j = 0; j < keys.cols(); ++j) c(k, j) += keys(r, j);
    }
    for (std::size_t k = 0; k < sizes.size(); ++k) {
        real inv = real(1) / static_cast<real>(sizes[k]);
        for (std::size_t j = 0; j < keys.cols(); ++j) c(k, j) *= inv;
    }
    return c;
}

real objective_of(const Matrix& keys, const std::vector<std::size_t>& assignment,
                  const Matrix& centers) {
    real obj = 0;
    for (std::size_t r = 0; r < keys.rows(); ++r)
        obj += dist2(keys.row(r), centers.row(assignment[r]));
    return obj;
}

/// Nearest-center assignment from a precomputed distance matrix, lowest index
/// winning ties. Returns per-point distance to its center as well.
void assign_nearest(const Matrix& d2, std::vector<std::size_t>& assignment,
                    std::vector<real>& best) {
    for (std::size_t i = 0; i < d2.rows(); ++i) {
        std::size_t arg = 0;
        real bd = d2(i, 0);
        for (std::size_t k = 1; k < d2.cols(); ++k) {
            if (d2(i, k) < bd) {
                bd = d2(i, k);
                arg = k;
            }
        }
        assignment[i] = arg;
        best[i] = bd;
    }
}

/// Move the point farthest from its center out of the largest cluster into
/// each empty cluster. Keeps every group nonempty as group softmax requires.
void repair_empty(const Matrix& keys, const Matrix& centers, std::vector<std::size_t>& assignment,
                  std::vector<std::size_t>& sizes) {
    for (std::size_t k = 0; k < sizes.size(); ++k) {
        if (sizes[k] > 0) continue;
        std::size_t donor = static_cast<std::size_t>(
            std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
        std::size_t worst_pt = static_cast<std::size_t>(-1);
        real worst_d = -1;
        for (std::size_t r = 0; r < keys.rows(); ++r) {
            if (assignment[r] != donor) continue;
            real d = dist2(keys.row(r), centers.row(donor));
            if (d > worst_d) {
                worst_d = d;
                worst_pt = r;
            }
        }
        assignment[worst_pt] = k;
        --sizes[donor];
        ++sizes[k];
    }
}

std::vector<std::size_t> kmeanspp_seeds(const Matrix& keys, std::size_t n_groups, Rng& rng) {
    const std::size_t n = keys.rows();
    std::vector<std::size_t> seeds;
    seeds.reserve(n_groups);
    seeds.push_back(rng.below(n));
    std::vector<real> d2min(n);
    for (std::size_t i = 0; i < n; ++i) d2min[i] = dist2(keys.row(i), keys.row(seeds[0]));
    while (seeds.size() < n_groups) {
        real total = std::accumulate(d2min.begin(), d2min.end(), real(0));
        std::size_t pick;
        if (total <= real(0)) {
            pick = rng.below(n); // all remaining mass at chosen points; fall back to uniform
        } else {
            real target = static_cast<real>(rng.uniform()) * total;
            real acc = 0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2min[i];
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        }
        seeds.push_back(pick);
        for (std::size_t i = 0; i < n; ++i)
            d2min[i] = std::min(d2min[i], dist2(keys.row(i), keys.row(pick)));
    }
    return seeds;
}

} // namespace

Grouping kmeans_group(const Matrix& keys, std::size_t n_groups, std::size_t iterations,
                      std::uint64_t seed, std::vector<real>* objective_out) {
    const std::size_t n = keys.rows();
    if (n_groups < 1) throw std::invalid_argument("kmeans_group: need at least one group");
    if (n_groups > n) {
        throw std::invalid_argument("kmeans_group: " + std::to_string(n_groups) +
                                    " groups exceed " + std::to_string(n) + " keys");
    }
    if (iterations < 1) throw std::invalid_argument("kmeans_group: need at least one iteration");

    Grouping g;
    g.group_count = n_groups;
    g.assignment.resize(n);
    g.group_size.assign(n_groups, 0);

    if (n_groups == n) {
        // Degenerate case: every key its own group (duplicates included).
        std::iota(g.assignment.begin(), g.assignment.end(), std::size_t(0));
        g.group_size.assign(n, 1);
        g.representatives = keys;
        auto [md, rad] = grouping_stats(g, keys);
        g.max_member_dist = md;
        g.key_radius = rad;
        if (objective_out) objective_out->assign(1, real(0));
        return g;
    }

    Rng rng(seed);
    std::vector<std::size_t> seeds = kmeanspp_seeds(keys, n_groups, rng);
    Matrix centers(n_groups, keys.cols());
    for (std::size_t k = 0; k < n_groups; ++k)
        for (std::size_t j = 0; j < keys.cols(); ++j) centers(k, j) = keys(seeds[k], j);

    std::vector<real> best(n);
    for (std::size_t it = 0; it < iterations; ++it) {
        Matrix d2 = pairwise_sq_dists(keys, centers);
        assign_nearest(d2, g.assignment, best);
        g.group_size.assign(n_groups, 0);
        for (std::size_t a : g.assignment) ++g.group_size[a];
        repair_empty(keys, centers, g.assignment, g.group_size);
        centers = centroids_of(keys, g.assignment, g.group_size);
        if (objective_out) objective_out->push_back(objective_of(keys, g.assignment, centers));
    }

    g.representatives = std::move(centers);
    auto [md, rad] = grouping_stats(g, keys);
    g.max_member_dist = md;
    g.key_radius = rad;
    return g;
}

std::pair<real, real> grouping_stats(const Grouping& g, const Matrix& keys) {
    real max_d = 0, radius = 0;
    for (std::size_t r = 0; r < keys.rows(); ++r) {
        max_d = std::max(max_d, dist(keys.row(r), g.representatives.row(g.assignment[r])));
        radius = std::max(radius, norm2(keys.row(r)));
    }
    return {max_d, radius};
}

Grouping grouping_from_assignment(const Matrix& keys, std::vector<std::size_t> assignment,
                                  std::size_t n_groups) {
    Grouping g;
    g.group_count = n_groups;
    g.assignment = std::move(assignment);
    g.group_size.assign(n_groups, 0);
    for (std::size_t a : g.assignment) {
        if (a >= n_groups) throw InvalidGroupingError("grouping: assignment out of range");
        ++g.group_size[a];
    }
    for (std::size_t k = 0; k < n_groups; ++k) {
        if (g.group_size[k] == 0) {
            throw InvalidGroupingError("grouping: empty group " + std::to_string(k));
        }
    }
    g.representatives = centroids_of(keys, g.assignment, g.group_size);
    auto [md, rad] = grouping_stats(g, keys);
    g.max_member_dist = md;
    g.key_radius = rad;
    return g;
}

} // namespace ga
