#include "ga/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <cstdio>
#include <new>
#include <stdexcept>

namespace ga {

namespace {

double median(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    std::size_t n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

/// One forward+backward of the encoder blocks; loss is the output mean.
double timed_pass(EncoderStack& model, const Matrix& embeddings, std::uint64_t seed) {
    auto t0 = std::chrono::steady_clock::now();
    Tape tape;
    std::vector<Value> leaves;
    auto params = model.parameters();
    leaves.reserve(params.size());
    for (NamedParam& p : params) leaves.push_back(tape.input(*p.value));
    Value h = tape.input(embeddings);
    Value out = model.forward_blocks(tape, h, seed, nullptr, leaves);
    Value loss = tape.mean_all(out);
    tape.backward(loss);
    auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(t1 - t0).count();
}

/// Least-squares slope of log(time) against log(length).
double loglog_slope(const std::vector<std::pair<std::size_t, double>>& pts) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    double n = static_cast<double>(pts.size());
    for (auto [len, t] : pts) {
        double x = std::log(static_cast<double>(len));
        double y = std::log(t);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

} // namespace

ScalingReport bench_scaling(const std::vector<std::size_t>& lengths, std::size_t n_groups,
                            const BenchProfile& profile) {
    if (lengths.empty()) throw std::invalid_argument("bench: no lengths given");
    for (std::size_t i = 1; i < lengths.size(); ++i) {
        if (lengths[i] <= lengths[i - 1]) {
            throw std::invalid_argument("bench: lengths must be ascending");
        }
    }

    EncoderConfig cfg = EncoderConfig::desk_profile();
    cfg.d_model = profile.d_model;
    cfg.layers = profile.layers;
    cfg.heads = profile.heads;
    cfg.initial_groups_override = n_groups; // fixed N, scheduler not involved
    cfg.seed = profile.seed;

    ScalingReport report;
    std::vector<std::pair<std::size_t, double>> van_pts, grp_pts;
    for (std::size_t length : lengths) {
        Rng rng(profile.seed + length);
        Matrix embeddings = Matrix::random_normal(length, profile.d_model, 0, 1, rng);

        ScalingPoint point;
        point.length = length;
        for (int pass = 0; pass < 2; ++pass) {
            AttentionMode mode = pass == 0 ? AttentionMode::vanilla : AttentionMode::group;
            cfg.mode = mode;
            Rng mrng(profile.seed);
            EncoderStack model(cfg, mrng);
            try {
                timed_pass(model, embeddings, profile.seed); // warm-up, discarded
                std::vector<double> times;
                for (std::size_t trial = 0; trial < profile.trials; ++trial)
                    times.push_back(timed_pass(model, embeddings, profile.seed + trial));
                double med = median(times);
                if (mode == AttentionMode::vanilla) {
                    point.t_vanilla = med;
                } else {
                    point.t_group = med;
                }
            } catch (const std::bad_alloc&) {
                std::fprintf(stderr, "bench: out of memory at length %zu (%s), recorded as N/A\n",
                             length, mode == AttentionMode::vanilla ? "vanilla" : "group");
                if (mode == AttentionMode::vanilla) {
                    point.vanilla_ok = false;
                    point.t_vanilla = std::numeric_limits<double>::quiet_NaN();
                } else {
                    point.group_ok = false;
                    point.t_group = std::numeric_limits<double>::quiet_NaN();
                }
            }
        }
        if (point.vanilla_ok && point.group_ok) point.speedup = point.t_vanilla / point.t_group;
        if (point.vanilla_ok) van_pts.emplace_back(length, point.t_vanilla);
        if (point.group_ok) grp_pts.emplace_back(length, point.t_group);
        report.points.push_back(point);
    }

    if (van_pts.size() >= 2 && grp_pts.size() >= 2) {
        report.exponent_vanilla = loglog_slope(van_pts);
        report.exponent_group = loglog_slope(grp_pts);
        report.have_exponents = true;
    }
    return report;
}

} // namespace ga
