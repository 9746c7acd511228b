#include "ga/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace ga {

std::size_t SchedulerState::target_groups() const {
    real rounded = std::round(n_current);
    return static_cast<std::size_t>(std::max(real(1), rounded));
}

void SchedulerState::validate() const {
    if (epsilon <= real(1)) throw std::invalid_argument("scheduler: epsilon must be > 1");
    if (alpha <= real(0) || alpha > real(1)) {
        throw std::invalid_argument("scheduler: alpha must be in (0, 1]");
    }
    if (n_current < real(1)) throw std::invalid_argument("scheduler: group count below 1");
}

real KeyCluster::radius() const {
    real worst = 0;
    for (std::size_t r = 0; r < member_keys.rows(); ++r)
        worst = std::max(worst, dist(member_keys.row(r), centroid.row(0)));
    return worst;
}

std::vector<KeyCluster> clusters_of(const Grouping& g, const Matrix& keys) {
    g.validate(keys.rows());
    std::vector<KeyCluster> out(g.group_count);
    for (std::size_t k = 0; k < g.group_count; ++k) {
        out[k].centroid = slice_rows(g.representatives, k, k + 1);
        out[k].member_keys = Matrix(g.group_size[k], keys.cols());
    }
    std::vector<std::size_t> fill(g.group_count, 0);
    for (std::size_t r = 0; r < keys.rows(); ++r) {
        std::size_t k = g.assignment[r];
        std::size_t row = fill[k]++;
        for (std::size_t j = 0; j < keys.cols(); ++j) out[k].member_keys(row, j) = keys(r, j);
    }
    return out;
}

bool mergeable(const KeyCluster& from, const KeyCluster& to, real d) {
    if (from.member_keys.rows() == 0 || to.member_keys.rows() == 0) {
        throw InvalidGroupingError("mergeable: empty cluster");
    }
    real center_gap = dist(from.centroid.row(0), to.centroid.row(0));
    return center_gap + from.radius() <= d;
}

MergeScanResult halved_merge_scan(const std::vector<KeyCluster>& clusters, real d) {
    const std::size_t n = clusters.size();
    if (n < 2) throw std::invalid_argument("halved_merge_scan: need at least two clusters");

    MergeScanResult res;
    std::vector<std::size_t> by_norm(n);
    std::iota(by_norm.begin(), by_norm.end(), std::size_t(0));
    std::vector<real> norms(n);
    for (std::size_t i = 0; i < n; ++i) norms[i] = norm2(clusters[i].centroid.row(0));
    std::stable_sort(by_norm.begin(), by_norm.end(),
                     [&](std::size_t a, std::size_t b) { return norms[a] < norms[b]; });

    // Alternate the norm-sorted ranks between the halves. Near-duplicate
    // clusters sit next to each other in norm order; a contiguous split would
    // put both on the same side and hide exactly the pairs worth merging.
    res.order.reserve(n);
    for (std::size_t pos = 0; pos < n; pos += 2) res.order.push_back(by_norm[pos]);
    for (std::size_t pos = 1; pos < n; pos += 2) res.order.push_back(by_norm[pos]);

    res.first_half_size = n - n / 2;
    res.marked.assign(n, false);
    for (std::size_t pos = res.first_half_size; pos < n; ++pos) {
        std::size_t j = res.order[pos];
        for (std::size_t p1 = 0; p1 < res.first_half_size; ++p1) {
            std::size_t i = res.order[p1];
            if (mergeable(clusters[i], clusters[j], d) &&
                mergeable(clusters[j], clusters[i], d / 2)) {
                res.marked[j] = true;
                ++res.merged_count;
                break;
            }
        }
    }
    return res;
}

real momentum_update(real n_current, std::size_t merged, real alpha) {
    if (static_cast<real>(merged) > n_current) {
        throw ContractError("momentum_update: merged count exceeds group count");
    }
    if (alpha <= real(0) || alpha > real(1)) {
        throw std::invalid_argument("momentum_update: alpha must be in (0, 1]");
    }
    return std::max(real(1), n_current - alpha * static_cast<real>(merged));
}

namespace {

/// ln(eps) / (2R); infinite when the keys collapse to the origin.
real derive_threshold(real epsilon, real key_radius) {
    if (key_radius <= real(0)) return std::numeric_limits<real>::infinity();
    return std::log(epsilon) / (2 * key_radius);
}

std::size_t scan_merged(const Grouping& grouping, const Matrix& keys, real d) {
    if (grouping.group_count < 2) return 0;
    return halved_merge_scan(clusters_of(grouping, keys), d).merged_count;
}

} // namespace

SchedulerStepResult scheduler_step(SchedulerState& state, const Grouping& grouping,
                                   const Matrix& keys) {
    state.validate();
    auto [_, radius] = grouping_stats(grouping, keys);
    real d = derive_threshold(state.epsilon, radius);
    std::size_t merged = scan_merged(grouping, keys, d);

    state.d_threshold = d;
    state.n_current = momentum_update(state.n_current, merged, state.alpha);
    return {state.target_groups(), d, merged};
}

SchedulerStepResult scheduler_step_heads(SchedulerState& state,
                                         std::span<const Grouping> groupings,
                                         std::span<const Matrix> keys_per_head) {
    state.validate();
    if (groupings.empty() || groupings.size() != keys_per_head.size()) {
        throw std::invalid_argument("scheduler_step_heads: head count mismatch");
    }
    std::size_t merged = std::numeric_limits<std::size_t>::max();
    real d_last = 0;
    for (std::size_t h = 0; h < groupings.size(); ++h) {
        auto [_, radius] = grouping_stats(groupings[h], keys_per_head[h]);
        real d = derive_threshold(state.epsilon, radius);
        merged = std::min(merged, scan_merged(groupings[h], keys_per_head[h], d));
        d_last = d;
    }
    state.d_threshold = d_last;
    state.n_current = momentum_update(state.n_current, merged, state.alpha);
    return {state.target_groups(), d_last, merged};
}

} // namespace ga
