#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ga/matrix.hpp"

namespace ga {

/// Analytic stand-in for live memory probing: per-sample cost is affine in
/// L*N and L, and a batch of B samples costs B times that. A real probe can
/// be plugged in through the MemoryProbe callback instead.
struct MemoryModel {
    real budget = 1;
    real coef_ln = 1;    // L*N term (attention score matrix)
    real coef_ld = 0;    // L*d term (activations)
    real coef_l = 0;     // L term
    real coef_const = 0; // fixed per-sample overhead
    std::size_t dim = 64;

    real cost(std::size_t length, std::size_t groups, std::size_t batch) const;
    /// Fraction of the budget a batch would occupy.
    real utilization(std::size_t length, std::size_t groups, std::size_t batch) const;
};

/// Returns utilization (cost / total) for a candidate batch; mirrors the
/// forward+backward probe of a live system.
using MemoryProbe = std::function<real(std::size_t length, std::size_t groups, std::size_t batch)>;

/// Largest integer B whose utilization stays within 90% of the budget
/// (cost <= 0.9 * budget); 0 when even a single sample does not fit.
std::size_t binary_search_batch(std::size_t length, std::size_t groups, const MemoryProbe& probe,
                                std::size_t max_batch = 1u << 20);
std::size_t binary_search_batch(std::size_t length, std::size_t groups, const MemoryModel& model,
                                std::size_t max_batch = 1u << 20);

/// One ground-truth point: at sequence length L with N groups, batch size B fits.
struct SamplePoint {
    std::size_t length = 0; // L
    std::size_t groups = 0; // N
    real batch = 0;         // B
};

struct SubplaneFit {
    std::array<real, 3> coef{0, 0, 0}; // 1/B ~ coef[0]*L*N + coef[1]*L + coef[2]
    real error = 0;                    // sum of squared B-space residuals
    bool unbounded = false;            // fewer points than the minimum support
};

/// Least-squares fit of 1/B against {L*N, L, 1}. Fewer than `min_support`
/// points yields an infinite-cost result; near-singular normal equations fall
/// back to a ridge solve (lambda = 1e-8).
SubplaneFit fit_subplane(std::span<const SamplePoint> points, std::size_t min_support);

/// Evaluate a fitted reciprocal-linear predictor (real-valued, unclamped).
real eval_fit(const std::array<real, 3>& coef, std::size_t length, std::size_t groups);

struct PlanRect {
    std::size_t l_lo = 1, l_hi = 1; // inclusive L range
    std::size_t n_lo = 1, n_hi = 1; // inclusive N range
    std::array<real, 3> coef{0, 0, 0};
    real error = 0;

    bool contains(std::size_t length, std::size_t groups) const {
        return length >= l_lo && length <= l_hi && groups >= n_lo && groups <= n_hi;
    }
};

struct BatchPlan {
    std::size_t l_max = 0;
    std::size_t min_support = 4;
    std::vector<SamplePoint> samples;
    std::vector<PlanRect> rects; // tile {1<=L<=l_max, 1<=N<=L}
    real total_error = 0;
};

/// Optimal guillotine partition of the (L, N) plane: an inner DP chooses the
/// horizontal N-cuts inside every L-strip, an outer DP chooses the vertical
/// L-cuts, minimizing the summed fit error. Rectangles extending past the
/// N <= L diagonal simply contain no samples there.
BatchPlan dp_partition(std::span<const SamplePoint> samples, std::size_t l_max,
                       std::size_t min_support);

/// Locate the sub-plane containing (L, N), evaluate its predictor, floor to an
/// integer and clamp to >= 1. Queries outside the plane raise std::out_of_range.
std::size_t predict_batch(const BatchPlan& plan, std::size_t length, std::size_t groups);

/// Deterministic sampling grid: L geometric up to l_max, N in {1, L/8, L/4,
/// L/2, L} per L (deduplicated), ground truth from the memory model.
std::vector<SamplePoint> sample_plan_grid(std::size_t l_max, const MemoryModel& model);

std::string plan_to_json(const BatchPlan& plan);
BatchPlan plan_from_json(const std::string& text);

} // namespace ga
