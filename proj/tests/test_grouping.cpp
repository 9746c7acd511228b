#include <doctest.h>

#include <cmath>

#include "ga/grouping.hpp"
#include "oracles.hpp"

using namespace ga;

TEST_CASE("one group per key is the identity grouping") {
    Rng rng(20);
    Matrix keys = Matrix::random_uniform(6, 3, -1, 1, rng);
    Grouping g = kmeans_group(keys, 6, 2, 99);
    g.validate(6);
    CHECK(g.max_member_dist == 0);
    for (std::size_t i = 0; i < 6; ++i) CHECK(g.group_size[g.assignment[i]] == 1);
}

TEST_CASE("two separated blobs are recovered exactly") {
    Rng rng(21);
    Matrix pts(10, 2);
    for (std::size_t i = 0; i < 5; ++i) {
        pts(i, 0) = -10 + rng.uniform(-0.5, 0.5);
        pts(i, 1) = rng.uniform(-0.5, 0.5);
        pts(5 + i, 0) = 10 + rng.uniform(-0.5, 0.5);
        pts(5 + i, 1) = rng.uniform(-0.5, 0.5);
    }
    Grouping g = kmeans_group(pts, 2, 5, 7);
    // Blob membership must be consistent.
    for (std::size_t i = 1; i < 5; ++i) {
        CHECK(g.assignment[i] == g.assignment[0]);
        CHECK(g.assignment[5 + i] == g.assignment[5]);
    }
    CHECK(g.assignment[0] != g.assignment[5]);

    // Centroids = blob means; objective equals the brute-force optimum.
    auto [best_obj, best_assign] = oracle::best_two_clustering(pts);
    double obj = oracle::clustering_objective(
        pts, std::vector<std::size_t>(g.assignment.begin(), g.assignment.end()), 2);
    CHECK(obj == doctest::Approx(best_obj).epsilon(1e-12));
    for (std::size_t k = 0; k < 2; ++k) {
        Matrix mean(1, 2);
        std::size_t cnt = 0;
        for (std::size_t i = 0; i < 10; ++i) {
            if (g.assignment[i] != k) continue;
            ++cnt;
            mean(0, 0) += pts(i, 0);
            mean(0, 1) += pts(i, 1);
        }
        CHECK(std::abs(mean(0, 0) / cnt - g.representatives(k, 0)) < 1e-9);
        CHECK(std::abs(mean(0, 1) / cnt - g.representatives(k, 1)) < 1e-9);
    }
}

TEST_CASE("product-form distances equal naive pairwise distances") {
    Rng rng(22);
    Matrix a = Matrix::random_uniform(12, 5, -3, 3, rng);
    Matrix b = Matrix::random_uniform(4, 5, -3, 3, rng);
    Matrix d2 = pairwise_sq_dists(a, b);
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.rows(); ++j)
            CHECK(std::abs(d2(i, j) - dist2(a.row(i), b.row(j))) < 1e-10);
}

TEST_CASE("objective is non-increasing over iterations") {
    Rng rng(23);
    for (int trial = 0; trial < 5; ++trial) {
        Matrix keys = Matrix::random_uniform(40, 4, -2, 2, rng);
        std::vector<real> objective;
        kmeans_group(keys, 6, 8, 1000 + trial, &objective);
        REQUIRE(objective.size() == 8);
        for (std::size_t i = 1; i < objective.size(); ++i)
            CHECK(objective[i] <= objective[i - 1] + 1e-12);
    }
}

TEST_CASE("identical inputs and seed give identical groupings") {
    Rng rng(24);
    Matrix keys = Matrix::random_uniform(30, 4, -2, 2, rng);
    Grouping a = kmeans_group(keys, 5, 3, 42);
    Grouping b = kmeans_group(keys, 5, 3, 42);
    CHECK(a.assignment == b.assignment);
    CHECK(max_abs_diff(a.representatives, b.representatives) == 0);
    CHECK(a.max_member_dist == b.max_member_dist);
}

TEST_CASE("invalid group counts are rejected") {
    Matrix keys(4, 2);
    CHECK_THROWS_AS(kmeans_group(keys, 5, 2, 1), std::invalid_argument);
    CHECK_THROWS_AS(kmeans_group(keys, 0, 2, 1), std::invalid_argument);
}

TEST_CASE("duplicated points with many groups keep every group nonempty") {
    // All points identical: k-means++ mass collapses, repair must fill groups.
    Matrix keys = Matrix::filled(8, 3, real(1.5));
    Grouping g = kmeans_group(keys, 4, 3, 5);
    g.validate(8);
    for (std::size_t size : g.group_size) CHECK(size >= 1);
}

TEST_CASE("grouping stats degenerate and random cases") {
    {
        Matrix keys(3, 2); // all at the origin
        Grouping g = kmeans_group(keys, 2, 2, 3);
        auto [md, rad] = grouping_stats(g, keys);
        CHECK(md == 0);
        CHECK(rad == 0);
    }
    {
        Matrix keys = Matrix::from_rows({{3, 0}});
        Grouping g = kmeans_group(keys, 1, 1, 3);
        auto [md, rad] = grouping_stats(g, keys);
        CHECK(md == 0);
        CHECK(rad == doctest::Approx(3));
    }
    {
        Rng rng(25);
        Matrix keys = Matrix::random_uniform(20, 3, -2, 2, rng);
        Grouping g = kmeans_group(keys, 4, 3, 11);
        auto [md, rad] = grouping_stats(g, keys);
        real md_scan = 0, rad_scan = 0;
        for (std::size_t i = 0; i < 20; ++i) {
            md_scan = std::max(md_scan,
                               dist(keys.row(i), g.representatives.row(g.assignment[i])));
            rad_scan = std::max(rad_scan, norm2(keys.row(i)));
        }
        CHECK(md == md_scan);
        CHECK(rad == rad_scan);
    }
}

TEST_CASE("centroids are the member means") {
    Rng rng(26);
    Matrix keys = Matrix::random_uniform(25, 3, -2, 2, rng);
    Grouping g = kmeans_group(keys, 4, 2, 17);
    for (std::size_t k = 0; k < g.group_count; ++k) {
        std::vector<real> mean(3, 0);
        for (std::size_t i = 0; i < keys.rows(); ++i) {
            if (g.assignment[i] != k) continue;
            for (std::size_t j = 0; j < 3; ++j) mean[j] += keys(i, j);
        }
        for (std::size_t j = 0; j < 3; ++j) {
            mean[j] /= static_cast<real>(g.group_size[k]);
            CHECK(std::abs(mean[j] - g.representatives(k, j)) < 1e-9);
        }
    }
}
