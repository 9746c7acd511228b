#pragma once

#include <cstdint>
#include <vector>

#include "ga/train.hpp"

namespace ga {

/// Synthetic benchmark generator: each class is a distinct mixture of 2-3
/// sinusoids (frequency, phase and amplitude drawn per class and channel)
/// plus Gaussian noise.
struct SyntheticSpec {
    std::size_t length = 128;
    std::size_t channels = 1;
    std::size_t classes = 3;
    std::size_t samples_per_class = 20;
    real noise_sigma = real(0.1);
    std::uint64_t seed = 7;
};

LabeledSet gen_classification(const SyntheticSpec& spec);

/// Unlabeled sinusoid mixtures for imputation/pretraining experiments.
std::vector<Timeseries> gen_imputation(std::size_t length, std::size_t channels,
                                       std::size_t samples, real noise_sigma,
                                       std::uint64_t seed);

} // namespace ga
