#include <doctest.h>

#include <cmath>
#include <set>

#include "ga/batch_planner.hpp"
#include "oracles.hpp"

using namespace ga;

namespace {

MemoryModel random_model(Rng& rng) {
    MemoryModel m;
    m.budget = static_cast<real>(rng.uniform(500, 50000));
    m.coef_ln = static_cast<real>(rng.uniform(0.01, 1.0));
    m.coef_ld = static_cast<real>(rng.uniform(0.0, 0.2));
    m.coef_l = static_cast<real>(rng.uniform(0.0, 1.0));
    m.coef_const = static_cast<real>(rng.uniform(0.0, 5.0));
    m.dim = 16;
    return m;
}

/// Samples drawn exactly from 1/B = a*LN + b*L + c (real-valued B).
std::vector<SamplePoint> realizable_samples(real a, real b, real c, std::size_t l_max) {
    std::vector<SamplePoint> pts;
    for (std::size_t l = 1; l <= l_max; ++l) {
        for (std::size_t n = 1; n <= l; ++n) {
            real denom = a * static_cast<real>(l * n) + b * static_cast<real>(l) + c;
            pts.push_back({l, n, real(1) / denom});
        }
    }
    return pts;
}

} // namespace

TEST_CASE("binary search: the 90% rule on a linear model") {
    MemoryModel m;
    m.budget = 100;
    m.coef_ln = 0;
    m.coef_ld = 0;
    m.coef_l = 0;
    m.coef_const = 10; // cost = B * 10
    CHECK(binary_search_batch(4, 2, m) == 9); // 9*10 <= 90 < 100

    MemoryModel tiny = m;
    tiny.budget = 5; // even B = 1 costs 10 > 4.5
    CHECK(binary_search_batch(4, 2, tiny) == 0);
}

TEST_CASE("binary search equals the linear scan on random models") {
    Rng rng(60);
    for (int trial = 0; trial < 50; ++trial) {
        MemoryModel m = random_model(rng);
        std::size_t length = 1 + rng.below(64);
        std::size_t groups = 1 + rng.below(length);
        std::size_t got = binary_search_batch(length, groups, m);
        std::size_t expect = oracle::linear_scan_batch(
            length, groups,
            [&m](std::size_t l, std::size_t n, std::size_t b) {
                return static_cast<double>(m.utilization(l, n, b));
            },
            1u << 20);
        CHECK(got == expect);
    }
}

TEST_CASE("fit recovers realizable coefficients exactly") {
    auto pts = realizable_samples(real(0.001), real(0.01), real(0.05), 6);
    SubplaneFit fit = fit_subplane(pts, 4);
    CHECK_FALSE(fit.unbounded);
    CHECK(std::abs(fit.coef[0] - real(0.001)) < 1e-8);
    CHECK(std::abs(fit.coef[1] - real(0.01)) < 1e-8);
    CHECK(std::abs(fit.coef[2] - real(0.05)) < 1e-8);
    CHECK(fit.error < 1e-12);
}

TEST_CASE("fit support rule: fewer than M points has infinite cost") {
    std::vector<SamplePoint> two{{1, 1, 5}, {2, 1, 4}};
    SubplaneFit fit = fit_subplane(two, 3);
    CHECK(fit.unbounded);
    CHECK(std::isinf(fit.error));
}

TEST_CASE("fit error equals an independently recomputed residual") {
    Rng rng(61);
    auto pts = realizable_samples(real(0.002), real(0.02), real(0.1), 5);
    for (SamplePoint& p : pts) p.batch += static_cast<real>(rng.uniform(-0.05, 0.05)) * p.batch;
    SubplaneFit fit = fit_subplane(pts, 4);
    long double residual = 0;
    for (const SamplePoint& p : pts) {
        long double denom = static_cast<long double>(fit.coef[0]) * p.length * p.groups +
                            static_cast<long double>(fit.coef[1]) * p.length + fit.coef[2];
        long double pred = 1.0L / std::max(denom, 1e-12L);
        residual += (pred - static_cast<long double>(p.batch)) *
                    (pred - static_cast<long double>(p.batch));
    }
    CHECK(fit.error == doctest::Approx(static_cast<double>(residual)).epsilon(1e-10));
}

TEST_CASE("degenerate fit falls back to ridge instead of failing") {
    // All points identical: normal equations singular.
    std::vector<SamplePoint> pts(5, SamplePoint{3, 2, 7});
    SubplaneFit fit = fit_subplane(pts, 4);
    CHECK_FALSE(fit.unbounded);
    CHECK(std::isfinite(fit.error));
}

TEST_CASE("homogeneous data yields a whole-plane partition") {
    auto pts = realizable_samples(real(0.001), real(0.01), real(0.05), 6);
    // With the support minimum at the full point count, any proper cut is
    // infeasible, and homogeneous data makes the whole plane optimal anyway.
    BatchPlan plan = dp_partition(pts, 6, pts.size());
    REQUIRE(plan.rects.size() == 1);
    CHECK(plan.rects[0].l_lo == 1);
    CHECK(plan.rects[0].l_hi == 6);
    CHECK(plan.rects[0].n_lo == 1);
    CHECK(plan.rects[0].n_hi == 6);
    CHECK(plan.total_error < 1e-10);

    // Without the support constraint the error is still (numerically) zero.
    BatchPlan loose = dp_partition(pts, 6, 4);
    CHECK(loose.total_error < 1e-10);
}

TEST_CASE("planted two-function data: the cut is recovered") {
    // Different cost functions below and above L = 3.
    std::vector<SamplePoint> pts;
    for (std::size_t l = 1; l <= 6; ++l) {
        for (std::size_t n = 1; n <= l; ++n) {
            real denom = l <= 3 ? real(0.001) * static_cast<real>(l * n) + real(0.2)
                                : real(0.05) * static_cast<real>(l * n) + real(0.01);
            pts.push_back({l, n, real(1) / denom});
        }
    }
    BatchPlan plan = dp_partition(pts, 6, 3);
    CHECK(plan.total_error < 1e-10);
    bool found_cut = false;
    for (const PlanRect& r : plan.rects)
        if (r.l_hi == 3 || r.l_lo == 4) found_cut = true;
    CHECK(found_cut);
}

TEST_CASE("partition tiles the plane with no overlap") {
    Rng rng(62);
    for (int trial = 0; trial < 5; ++trial) {
        MemoryModel m = random_model(rng);
        auto pts = sample_plan_grid(32, m);
        if (pts.empty()) continue;
        BatchPlan plan = dp_partition(pts, 32, 4);
        for (std::size_t l = 1; l <= 32; ++l) {
            for (std::size_t n = 1; n <= l; ++n) {
                std::size_t covering = 0;
                for (const PlanRect& r : plan.rects) covering += r.contains(l, n) ? 1 : 0;
                CHECK(covering == 1);
            }
        }
        // Every sample lies in exactly one sub-plane by the same check.
    }
}

TEST_CASE("DP equals the exhaustive guillotine oracle on small planes") {
    Rng rng(63);
    for (std::size_t l_max : {4u, 5u, 6u}) {
        for (int trial = 0; trial < 3; ++trial) {
            std::vector<SamplePoint> pts;
            for (std::size_t l = 1; l <= l_max; ++l)
                for (std::size_t n = 1; n <= l; ++n)
                    pts.push_back({l, n, static_cast<real>(rng.uniform(1.0, 50.0))});
            std::size_t min_support = 2 + rng.below(3);
            BatchPlan plan = dp_partition(pts, l_max, min_support);
            double expect = oracle::exhaustive_partition_error(
                l_max, [&](std::size_t l_lo, std::size_t l_hi, std::size_t n_lo,
                           std::size_t n_hi) {
                    std::vector<SamplePoint> band;
                    for (const SamplePoint& p : pts)
                        if (p.length >= l_lo && p.length <= l_hi && p.groups >= n_lo &&
                            p.groups <= n_hi)
                            band.push_back(p);
                    return static_cast<double>(fit_subplane(band, min_support).error);
                });
            CHECK(static_cast<double>(plan.total_error) == expect);
        }
    }
}

TEST_CASE("prediction behavior on realizable data") {
    // Exact reciprocal-linear ground truth: the fit is exact, so the floor of
    // the prediction lands within 1 of any sample and sweeps are monotone.
    auto pts = realizable_samples(real(0.01), real(0.05), real(0.1), 16);
    BatchPlan plan = dp_partition(pts, 16, 4);

    for (const SamplePoint& p : pts) {
        std::size_t b = predict_batch(plan, p.length, p.groups);
        CHECK(std::abs(static_cast<double>(b) - static_cast<double>(p.batch)) <= 1.0);
    }
    for (std::size_t n : {std::size_t(1), std::size_t(4)}) {
        std::size_t prev = predict_batch(plan, std::max<std::size_t>(n, 1), n);
        for (std::size_t l = std::max<std::size_t>(n, 1); l <= 16; ++l) {
            std::size_t b = predict_batch(plan, l, n);
            CHECK(b <= prev);
            prev = b;
        }
    }
    std::size_t corner = predict_batch(plan, 16, 16);
    for (const SamplePoint& p : pts)
        CHECK(corner <= predict_batch(plan, p.length, p.groups));

    CHECK_THROWS_AS(predict_batch(plan, 17, 1), std::out_of_range);
    CHECK_THROWS_AS(predict_batch(plan, 10, 11), std::out_of_range);
}

TEST_CASE("planned batches never exceed the memory budget") {
    MemoryModel m;
    m.budget = 100000;
    m.coef_ln = real(0.05);
    m.coef_ld = 0;
    m.coef_l = real(0.5);
    m.coef_const = 2;
    m.dim = 16;
    auto pts = sample_plan_grid(32, m);
    BatchPlan plan = dp_partition(pts, 32, 4);
    for (std::size_t l = 1; l <= 32; l += 3) {
        for (std::size_t n = 1; n <= l; n += 2) {
            std::size_t b = predict_batch(plan, l, n);
            CHECK(m.cost(l, n, b) <= m.budget);
        }
    }
}

TEST_CASE("plan JSON round-trip") {
    MemoryModel m;
    m.budget = 5000;
    m.coef_ln = real(0.1);
    m.coef_l = real(0.3);
    m.coef_const = 1;
    auto pts = sample_plan_grid(16, m);
    BatchPlan plan = dp_partition(pts, 16, 4);
    BatchPlan back = plan_from_json(plan_to_json(plan));
    CHECK(back.l_max == plan.l_max);
    CHECK(back.rects.size() == plan.rects.size());
    CHECK(back.samples.size() == plan.samples.size());
    CHECK(back.total_error == plan.total_error);
    for (std::size_t i = 0; i < plan.rects.size(); ++i) {
        CHECK(back.rects[i].l_lo == plan.rects[i].l_lo);
        CHECK(back.rects[i].coef == plan.rects[i].coef);
    }
    CHECK(predict_batch(back, 10, 3) == predict_batch(plan, 10, 3));
}

TEST_CASE("empty sample set is invalid") {
    std::vector<SamplePoint> none;
    CHECK_THROWS_AS(dp_partition(none, 4, 3), std::invalid_argument);
}
