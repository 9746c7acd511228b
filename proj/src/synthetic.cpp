#include "ga/synthetic.hpp"

#include <cmath>

namespace ga {

namespace {

constexpr real kTau = real(6.283185307179586476925286766559);

struct Sinusoid {
    real freq; // cycles over the whole series
    real phase;
    real amp;
};

/// 2-3 sinusoids per channel, drawn once per (class, channel).
std::vector<std::vector<Sinusoid>> class_generator(std::size_t channels, Rng& rng) {
    std::vector<std::vector<Sinusoid>> per_channel(channels);
    for (std::size_t c = 0; c < channels; ++c) {
        std::size_t parts = 2 + rng.below(2);
        for (std::size_t p = 0; p < parts; ++p) {
            Sinusoid s;
            s.freq = static_cast<real>(rng.uniform(1.0, 8.0));
            s.phase = static_cast<real>(rng.uniform(0.0, kTau));
            s.amp = static_cast<real>(rng.uniform(0.4, 1.0));
            per_channel[c].push_back(s);
        }
    }
    return per_channel;
}

Timeseries render(const std::vector<std::vector<Sinusoid>>& gen, std::size_t length,
                  real noise_sigma, Rng& rng) {
    Timeseries ts{Matrix(length, gen.size())};
    for (std::size_t c = 0; c < gen.size(); ++c) {
        for (std::size_t t = 0; t < length; ++t) {
            real x = 0;
            for (const Sinusoid& s : gen[c]) {
                x += s.amp * std::sin(kTau * s.freq * static_cast<real>(t) /
                                          static_cast<real>(length) +
                                      s.phase);
            }
            ts.values(t, c) = x + noise_sigma * static_cast<real>(rng.normal());
        }
    }
    return ts;
}

} // namespace

LabeledSet gen_classification(const SyntheticSpec& spec) {
    if (spec.length < 2 || spec.classes < 1 || spec.samples_per_class < 1) {
        throw std::invalid_argument("gen_classification: invalid sizes");
    }
    Rng class_rng(spec.seed);
    std::vector<std::vector<std::vector<Sinusoid>>> generators;
    for (std::size_t k = 0; k < spec.classes; ++k)
        generators.push_back(class_generator(spec.channels, class_rng));

    LabeledSet set;
    Rng noise_rng(spec.seed ^ 0x5EEDull);
    for (std::size_t k = 0; k < spec.classes; ++k) {
        for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
            set.series.push_back(render(generators[k], spec.length, spec.noise_sigma, noise_rng));
            set.labels.push_back(k);
        }
    }
    return set;
}

std::vector<Timeseries> gen_imputation(std::size_t length, std::size_t channels,
                                       std::size_t samples, real noise_sigma,
                                       std::uint64_t seed) {
    if (length < 2 || samples < 1) throw std::invalid_argument("gen_imputation: invalid sizes");
    Rng rng(seed);
    auto gen = class_generator(channels, rng);
    std::vector<Timeseries> out;
    Rng noise_rng(seed ^ 0x5EEDull);
    out.reserve(samples);
    for (std::size_t s = 0; s < samples; ++s)
        out.push_back(render(gen, length, noise_sigma, noise_rng));
    return out;
}

} // namespace ga
