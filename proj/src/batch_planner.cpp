#include "ga/batch_planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace ga {

namespace {
constexpr real kInf = std::numeric_limits<real>::infinity();
constexpr real kUsableFraction = real(0.9);
} // namespace

real MemoryModel::cost(std::size_t length, std::size_t groups, std::size_t batch) const {
    real l = static_cast<real>(length), n = static_cast<real>(groups);
    real per = coef_ln * l * n + coef_ld * l * static_cast<real>(dim) + coef_l * l + coef_const;
    return static_cast<real>(batch) * per;
}

real MemoryModel::utilization(std::size_t length, std::size_t groups, std::size_t batch) const {
    return cost(length, groups, batch) / budget;
}

std::size_t binary_search_batch(std::size_t length, std::size_t groups, const MemoryProbe& probe,
                                std::size_t max_batch) {
    if (length < 1 || groups < 1 || groups > length) {
        throw std::invalid_argument("binary_search_batch: need 1 <= N <= L");
    }
    std::size_t lo = 1, hi = max_batch;
    std::size_t best = 0;
    while (lo <= hi) {
        std::size_t candidate = lo + (hi - lo) / 2;
        real u = probe(length, groups, candidate);
        if (u <= kUsableFraction) {
            best = candidate;
            lo = candidate + 1;
        } else {
            if (candidate == 1) break;
            hi = candidate - 1;
        }
    }
    return best;
}

std::size_t binary_search_batch(std::size_t length, std::size_t groups, const MemoryModel& model,
                                std::size_t max_batch) {
    return binary_search_batch(
        length, groups,
        [&model](std::size_t l, std::size_t n, std::size_t b) {
            return model.utilization(l, n, b);
        },
        max_batch);
}

real eval_fit(const std::array<real, 3>& coef, std::size_t length, std::size_t groups) {
    real l = static_cast<real>(length), n = static_cast<real>(groups);
    real denom = coef[0] * l * n + coef[1] * l + coef[2];
    if (denom < real(1e-12)) denom = real(1e-12);
    return real(1) / denom;
}

namespace {

/// Solve the 3x3 system m*x = rhs by Gaussian elimination with partial
/// pivoting; returns false when a pivot degenerates.
bool solve3(std::array<std::array<real, 3>, 3> m, std::array<real, 3> rhs,
            std::array<real, 3>& out) {
    for (int col = 0; col < 3; ++col) {
        int piv = col;
        for (int r = col + 1; r < 3; ++r)
            if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
        if (std::abs(m[piv][col]) < real(1e-12)) return false;
        std::swap(m[piv], m[col]);
        std::swap(rhs[piv], rhs[col]);
        for (int r = 0; r < 3; ++r) {
            if (r == col) continue;
            real f = m[r][col] / m[col][col];
            for (int c = col; c < 3; ++c) m[r][c] -= f * m[col][c];
            rhs[r] -= f * rhs[col];
        }
    }
    for (int i = 0; i < 3; ++i) out[i] = rhs[i] / m[i][i];
    return true;
}

} // namespace

SubplaneFit fit_subplane(std::span<const SamplePoint> points, std::size_t min_support) {
    SubplaneFit fit;
    if (points.size() < min_support) {
        fit.unbounded = true;
        fit.error = kInf;
        return fit;
    }
    // Normal equations for 1/B over the basis {L*N, L, 1}.
    std::array<std::array<real, 3>, 3> m{};
    std::array<real, 3> rhs{};
    for (const SamplePoint& p : points) {
        if (p.batch <= real(0)) {
            throw std::invalid_argument("fit_subplane: batch sizes must be positive");
        }
        real l = static_cast<real>(p.length);
        std::array<real, 3> basis{l * static_cast<real>(p.groups), l, real(1)};
        real y = real(1) / p.batch;
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) m[i][j] += basis[i] * basis[j];
            rhs[i] += basis[i] * y;
        }
    }
    if (!solve3(m, rhs, fit.coef)) {
        // Ridge fallback for singular normal equations.
        for (int i = 0; i < 3; ++i) m[i][i] += real(1e-8);
        if (!solve3(m, rhs, fit.coef)) {
            fit.unbounded = true;
            fit.error = kInf;
            return fit;
        }
    }
    fit.error = 0;
    for (const SamplePoint& p : points) {
        real r = eval_fit(fit.coef, p.length, p.groups) - p.batch;
        fit.error += r * r;
    }
    return fit;
}

namespace {

struct StripData {
    // Points of one L-strip in the original sample order. Band costs must see
    // points in that order so the fit is bit-identical to one computed from
    // the raw sample list (the optimality tests compare totals exactly).
    std::vector<SamplePoint> points;
};

struct BandFit {
    real error = kInf;
    std::array<real, 3> coef{0, 0, 0};
    bool computed = false;
};

BandFit band_cost(const StripData& strip, std::size_t n_lo, std::size_t n_hi,
                  std::size_t min_support) {
    std::vector<SamplePoint> pts;
    for (const SamplePoint& p : strip.points)
        if (p.groups >= n_lo && p.groups <= n_hi) pts.push_back(p);
    SubplaneFit f = fit_subplane(pts, min_support);
    return {f.error, f.coef, true};
}

struct StripSolution {
    real error = kInf;
    std::vector<std::pair<std::size_t, std::size_t>> bands; // inclusive N ranges
    std::vector<std::array<real, 3>> coefs;
    std::vector<real> errors;
};

/// Inner DP: best horizontal banding of strip [l_lo, l_hi] with N in 1..l_hi.
StripSolution solve_strip(const StripData& strip, std::size_t l_hi, std::size_t min_support) {
    const std::size_t n_max = l_hi;
    std::vector<real> g(n_max + 1, kInf);
    std::vector<std::size_t> cut(n_max + 1, 0); // 0 = single band from 1
    std::vector<std::vector<BandFit>> memo(n_max + 1, std::vector<BandFit>(n_max + 1));
    auto cost = [&](std::size_t lo, std::size_t hi) -> const BandFit& {
        BandFit& slot = memo[lo][hi];
        if (!slot.computed) slot = band_cost(strip, lo, hi, min_support);
        return slot;
    };
    for (std::size_t n = 1; n <= n_max; ++n) {
        g[n] = cost(1, n).error;
        cut[n] = 0;
        for (std::size_t i = 1; i < n; ++i) {
            real candidate = g[i] + cost(i + 1, n).error;
            if (candidate < g[n]) {
                g[n] = candidate;
                cut[n] = i;
            }
        }
    }
    StripSolution sol;
    sol.error = g[n_max];
    // Reconstruct bands top-down.
    std::size_t n = n_max;
    std::vector<std::pair<std::size_t, std::size_t>> rev;
    while (n >= 1) {
        std::size_t lo = cut[n] + 1;
        rev.emplace_back(lo, n);
        if (cut[n] == 0) break;
        n = cut[n];
    }
    for (auto it = rev.rbegin(); it != rev.rend(); ++it) {
        sol.bands.push_back(*it);
        const BandFit& f = cost(it->first, it->second);
        sol.coefs.push_back(f.coef);
        sol.errors.push_back(f.error);
    }
    return sol;
}

} // namespace

BatchPlan dp_partition(std::span<const SamplePoint> samples, std::size_t l_max,
                       std::size_t min_support) {
    if (samples.empty()) throw std::invalid_argument("dp_partition: empty sample set");
    if (l_max < 1) throw std::invalid_argument("dp_partition: l_max must be >= 1");
    for (const SamplePoint& p : samples) {
        if (p.length < 1 || p.length > l_max || p.groups < 1 || p.groups > p.length) {
            throw std::invalid_argument("dp_partition: sample outside the (L, N) plane");
        }
    }

    // Strip solutions for every [l_lo, l_hi].
    std::vector<std::vector<StripSolution>> strips(l_max + 1,
                                                   std::vector<StripSolution>(l_max + 1));
    for (std::size_t l_lo = 1; l_lo <= l_max; ++l_lo) {
        for (std::size_t l_hi = l_lo; l_hi <= l_max; ++l_hi) {
            StripData data;
            for (const SamplePoint& p : samples)
                if (p.length >= l_lo && p.length <= l_hi) data.points.push_back(p);
            strips[l_lo][l_hi] = solve_strip(data, l_hi, min_support);
        }
    }

    // Outer DP over vertical cuts.
    std::vector<real> dp(l_max + 1, kInf);
    std::vector<std::size_t> cut(l_max + 1, 0);
    for (std::size_t l = 1; l <= l_max; ++l) {
        dp[l] = strips[1][l].error;
        cut[l] = 0;
        for (std::size_t i = 1; i < l; ++i) {
            real candidate = dp[i] + strips[i + 1][l].error;
            if (candidate < dp[l]) {
                dp[l] = candidate;
                cut[l] = i;
            }
        }
    }

    BatchPlan plan;
    plan.l_max = l_max;
    plan.min_support = min_support;
    plan.samples.assign(samples.begin(), samples.end());
    plan.total_error = dp[l_max];

    // Reconstruct strip boundaries, then emit each strip's bands.
    std::vector<std::pair<std::size_t, std::size_t>> strip_ranges;
    std::size_t l = l_max;
    while (l >= 1) {
        strip_ranges.emplace_back(cut[l] + 1, l);
        if (cut[l] == 0) break;
        l = cut[l];
    }
    std::reverse(strip_ranges.begin(), strip_ranges.end());
    for (auto [lo, hi] : strip_ranges) {
        const StripSolution& sol = strips[lo][hi];
        for (std::size_t b = 0; b < sol.bands.size(); ++b) {
            PlanRect rect;
            rect.l_lo = lo;
            rect.l_hi = hi;
            rect.n_lo = sol.bands[b].first;
            rect.n_hi = sol.bands[b].second;
            rect.coef = sol.coefs[b];
            rect.error = sol.errors[b];
            plan.rects.push_back(rect);
        }
    }
    return plan;
}

std::size_t predict_batch(const BatchPlan& plan, std::size_t length, std::size_t groups) {
    if (length < 1 || length > plan.l_max || groups < 1 || groups > length) {
        throw std::out_of_range("predict_batch: (L=" + std::to_string(length) +
                                ", N=" + std::to_string(groups) + ") outside the plane");
    }
    for (const PlanRect& rect : plan.rects) {
        if (rect.contains(length, groups)) {
            real b = eval_fit(rect.coef, length, groups);
            if (!std::isfinite(b) || b < real(1)) return 1;
            return static_cast<std::size_t>(std::floor(b));
        }
    }
    throw std::out_of_range("predict_batch: no sub-plane covers the query");
}

std::vector<SamplePoint> sample_plan_grid(std::size_t l_max, const MemoryModel& model) {
    std::vector<std::size_t> lengths;
    for (std::size_t l = 1; l < l_max; l *= 2) lengths.push_back(l);
    lengths.push_back(l_max);

    std::vector<SamplePoint> points;
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (std::size_t length : lengths) {
        for (std::size_t n : {std::size_t(1), length / 8, length / 4, length / 2, length}) {
            n = std::max<std::size_t>(n, 1);
            if (!seen.insert({length, n}).second) continue;
            std::size_t b = binary_search_batch(length, n, model);
            if (b >= 1) points.push_back({length, n, static_cast<real>(b)});
        }
    }
    return points;
}

// ---- JSON -------------------------------------------------------------------

std::string plan_to_json(const BatchPlan& plan) {
    nlohmann::json j;
    j["version"] = 1;
    j["l_max"] = plan.l_max;
    j["min_support"] = plan.min_support;
    j["total_error"] = plan.total_error;
    j["samples"] = nlohmann::json::array();
    for (const SamplePoint& p : plan.samples)
        j["samples"].push_back({{"L", p.length}, {"N", p.groups}, {"B", p.batch}});
    j["partition"] = nlohmann::json::array();
    for (const PlanRect& r : plan.rects) {
        j["partition"].push_back({{"l_lo", r.l_lo},
                                  {"l_hi", r.l_hi},
                                  {"n_lo", r.n_lo},
                                  {"n_hi", r.n_hi},
                                  {"coef", r.coef},
                                  {"error", r.error}});
    }
    return j.dump(2);
}

BatchPlan plan_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    BatchPlan plan;
    plan.l_max = j.at("l_max").get<std::size_t>();
    plan.min_support = j.at("min_support").get<std::size_t>();
    plan.total_error = j.at("total_error").get<real>();
    for (const auto& p : j.at("samples")) {
        plan.samples.push_back(
            {p.at("L").get<std::size_t>(), p.at("N").get<std::size_t>(), p.at("B").get<real>()});
    }
    for (const auto& r : j.at("partition")) {
        PlanRect rect;
        rect.l_lo = r.at("l_lo").get<std::size_t>();
        rect.l_hi = r.at("l_hi").get<std::size_t>();
        rect.n_lo = r.at("n_lo").get<std::size_t>();
        rect.n_hi = r.at("n_hi").get<std::size_t>();
        auto coef = r.at("coef");
        for (int i = 0; i < 3; ++i) rect.coef[i] = coef.at(i).get<real>();
        rect.error = r.at("error").get<real>();
        plan.rects.push_back(rect);
    }
    return plan;
}

} // namespace ga
