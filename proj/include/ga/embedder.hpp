#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ga/matrix.hpp"
#include "ga/tape.hpp"

namespace ga {

/// Multi-channel timeseries (t timestamps x m channels) with an optional set
/// of missing positions. By the masking contract, values are scaled to a
/// nonnegative range first and each missing cell then carries the sentinel -1.
struct Timeseries {
    Matrix values;                       // t x m
    std::vector<std::uint8_t> missing;   // t*m bitmap; empty when fully observed

    Timeseries() = default;
    explicit Timeseries(Matrix v) : values(std::move(v)) {}

    std::size_t length() const { return values.rows(); }
    std::size_t channels() const { return values.cols(); }

    bool has_missing() const;
    std::size_t missing_count() const;
    bool is_missing(std::size_t t, std::size_t c) const;
    void set_missing(std::size_t t, std::size_t c);
    std::vector<std::pair<std::size_t, std::size_t>> missing_positions() const;
    /// 0/1 matrix with 1 at missing cells (loss mask shape t x m).
    Matrix missing_mask() const;
};

constexpr real kMissingSentinel = real(-1);

/// Convolutional window embedder plus its transpose-convolution decoder.
/// Kernels are stored flattened: row j of `kernels` holds kernel j with the
/// (channel c, offset l) weight at column c*window + l.
struct ConvEmbedder {
    std::size_t channels = 1;
    std::size_t window = 5;
    std::size_t stride = 5; // = window by default (non-overlapping windows)
    std::size_t dim = 64;   // number of kernels / embedding width
    std::size_t n_max = 256;

    Matrix kernels;        // dim x (channels*window)
    Matrix bias;           // 1 x dim
    Matrix positions;      // n_max x dim, learnable
    Matrix cls;            // 1 x dim, learnable; receives no position embedding
    Matrix decoder_kernels; // dim x (channels*window), independent of `kernels`
    Matrix decoder_bias;    // 1 x channels

    std::size_t output_windows(std::size_t t) const;
    void validate() const;

    static ConvEmbedder random(std::size_t channels, std::size_t window, std::size_t stride,
                               std::size_t dim, std::size_t n_max, Rng& rng);
};

/// Window-major view of the series: row i holds the window starting at
/// i*stride, flattened as (channel c, offset l) -> column c*window + l.
Matrix im2col(const Matrix& values, std::size_t window, std::size_t stride);

/// One embedding row per window: kernel dot products plus bias plus the
/// window's position embedding; with_cls prepends the CLS row.
Matrix embed(const Timeseries& ts, const ConvEmbedder& e, bool with_cls);

/// Transpose convolution: maps n window embeddings (no CLS row) back to a
/// t x m frame, summing overlapping contributions and broadcasting the
/// decoder bias.
Matrix decode(const Matrix& z, const ConvEmbedder& e, std::size_t t);

/// Tape versions used by the training forward pass.
Value embed_on_tape(Tape& tape, const Timeseries& ts, const ConvEmbedder& geometry,
                    Value kernels, Value bias, Value positions, Value cls, bool with_cls);
Value decode_on_tape(Tape& tape, Value z, const ConvEmbedder& geometry, Value decoder_kernels,
                     Value decoder_bias, std::size_t t);

/// Mask whole timestamps with probability p: every channel of a chosen
/// timestamp is set to the sentinel and recorded. Requires nonnegative values
/// (scale before masking).
Timeseries mask_timestamps(const Timeseries& ts, real rate, std::uint64_t seed);

/// Per-channel min-max scaler fitted on a training split and persisted with
/// the model; maps observed values into [0, 1] so the -1 sentinel stays
/// impossible on normal cells.
struct ChannelScaler {
    std::vector<real> minimum;
    std::vector<real> range; // max - min, floored at tiny

    bool fitted() const { return !minimum.empty(); }
    void fit(const std::vector<Timeseries>& train);
    /// Scale values; missing cells get the sentinel.
    Timeseries apply(const Timeseries& ts) const;
    Matrix unscale(const Matrix& scaled) const;
};

/// CSV: one row per timestamp, m columns, optional header; empty cells are
/// missing values.
Timeseries load_timeseries_csv(const std::string& path);
void save_timeseries_csv(const Timeseries& ts, const std::string& path);

} // namespace ga
