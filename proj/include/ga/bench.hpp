#pragma once

#include <cstdint>
#include <vector>

#include "ga/model.hpp"

namespace ga {

struct ScalingPoint {
    std::size_t length = 0;
    double t_vanilla = 0; // seconds, median over trials; NaN when the run failed
    double t_group = 0;
    double speedup = 0;
    bool vanilla_ok = true;
    bool group_ok = true;
};

struct ScalingReport {
    std::vector<ScalingPoint> points;
    double exponent_vanilla = 0; // log-log slope fits over successful points
    double exponent_group = 0;
    bool have_exponents = false;
};

struct BenchProfile {
    std::size_t d_model = 16;
    std::size_t layers = 2;
    std::size_t heads = 1;
    std::size_t trials = 5; // plus one discarded warm-up
    std::uint64_t seed = 123;
};

/// Forward+backward wall time of the encoder blocks over random embeddings at
/// each length, exact vs grouped attention with N fixed. Out-of-memory at a
/// length is recorded (not fatal) and the run continues.
ScalingReport bench_scaling(const std::vector<std::size_t>& lengths, std::size_t n_groups,
                            const BenchProfile& profile);

} // namespace ga
