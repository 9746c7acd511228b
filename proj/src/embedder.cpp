#include "ga/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace ga {

bool Timeseries::has_missing() const {
    return std::any_of(missing.begin(), missing.end(), [](std::uint8_t b) { return b != 0; });
}

std::size_t Timeseries::missing_count() const {
    std::size_t n = 0;
    for (std::uint8_t b : missing) n += b != 0;
    return n;
}

bool Timeseries::is_missing(std::size_t t, std::size_t c) const {
    if (missing.empty()) return false;
    return missing[t * channels() + c] != 0;
}

void Timeseries::set_missing(std::size_t t, std::size_t c) {
    if (missing.empty()) missing.assign(values.size(), 0);
    missing[t * channels() + c] = 1;
}

std::vector<std::pair<std::size_t, std::size_t>> Timeseries::missing_positions() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t t = 0; t < length(); ++t)
        for (std::size_t c = 0; c < channels(); ++c)
            if (is_missing(t, c)) out.emplace_back(t, c);
    return out;
}

Matrix Timeseries::missing_mask() const {
    Matrix m(length(), channels());
    for (std::size_t t = 0; t < length(); ++t)
        for (std::size_t c = 0; c < channels(); ++c)
            if (is_missing(t, c)) m(t, c) = real(1);
    return m;
}

std::size_t ConvEmbedder::output_windows(std::size_t t) const {
    if (t < window) {
        throw std::invalid_argument("embed: input length " + std::to_string(t) +
                                    " shorter than window " + std::to_string(window));
    }
    return (t - window) / stride + 1;
}

void ConvEmbedder::validate() const {
    if (window < 1 || stride < 1 || dim < 1) {
        throw std::invalid_argument("embedder: window, stride and dim must be >= 1");
    }
    if (kernels.rows() != dim || kernels.cols() != channels * window) {
        throw ShapeError("embedder: kernels " + shape_str(kernels) + " expected " +
                         std::to_string(dim) + "x" + std::to_string(channels * window));
    }
    if (positions.rows() != n_max || positions.cols() != dim) {
        throw ShapeError("embedder: position table " + shape_str(positions));
    }
}

ConvEmbedder ConvEmbedder::random(std::size_t channels, std::size_t window, std::size_t stride,
                                  std::size_t dim, std::size_t n_max, Rng& rng) {
    ConvEmbedder e;
    e.channels = channels;
    e.window = window;
    e.stride = stride;
    e.dim = dim;
    e.n_max = n_max;
    real sd = real(1) / std::sqrt(static_cast<real>(channels * window));
    e.kernels = Matrix::random_normal(dim, channels * window, 0, sd, rng);
    e.bias = Matrix(1, dim);
    // Zero-started position table: repeated windows begin with identical
    // embeddings and positional signal grows only as training needs it.
    e.positions = Matrix(n_max, dim);
    e.cls = Matrix::random_normal(1, dim, 0, real(0.02), rng);
    real sd_dec = real(1) / std::sqrt(static_cast<real>(dim));
    e.decoder_kernels = Matrix::random_normal(dim, channels * window, 0, sd_dec, rng);
    e.decoder_bias = Matrix(1, channels);
    e.validate();
    return e;
}

Matrix im2col(const Matrix& values, std::size_t window, std::size_t stride) {
    if (values.rows() < window) {
        throw std::invalid_argument("im2col: input length " + std::to_string(values.rows()) +
                                    " shorter than window " + std::to_string(window));
    }
    const std::size_t n = (values.rows() - window) / stride + 1;
    const std::size_t m = values.cols();
    Matrix out(n, m * window);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < m; ++c)
            for (std::size_t l = 0; l < window; ++l)
                out(i, c * window + l) = values(i * stride + l, c);
    return out;
}

namespace {
void check_embed_input(const Timeseries& ts, const ConvEmbedder& e, bool check_nmax = true) {
    e.validate();
    if (ts.channels() != e.channels) {
        throw ShapeError("embed: series has " + std::to_string(ts.channels()) +
                         " channels, embedder expects " + std::to_string(e.channels));
    }
    std::size_t n = e.output_windows(ts.length());
    if (check_nmax && n > e.n_max) {
        throw std::invalid_argument("embed: " + std::to_string(n) +
                                    " windows exceed the position table (n_max = " +
                                    std::to_string(e.n_max) + ")");
    }
}
} // namespace

Matrix embed(const Timeseries& ts, const ConvEmbedder& e, bool with_cls) {
    check_embed_input(ts, e);
    const std::size_t n = e.output_windows(ts.length());
    Matrix windows = im2col(ts.values, e.window, e.stride);
    Matrix x = matmul(windows, transpose(e.kernels));
    x = add_rowvec(x, e.bias);
    x = add(x, slice_rows(e.positions, 0, n));
    if (with_cls) x = concat_rows(e.cls, x);
    return x;
}

Matrix decode(const Matrix& z, const ConvEmbedder& e, std::size_t t) {
    e.validate();
    const std::size_t n = e.output_windows(t);
    if (z.rows() != n || z.cols() != e.dim) {
        throw ShapeError("decode: embeddings " + shape_str(z) + " do not match geometry (" +
                         std::to_string(n) + " windows x " + std::to_string(e.dim) + ")");
    }
    Matrix contrib = matmul(z, e.decoder_kernels); // n x (m*w)
    Matrix out(t, e.channels);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < e.channels; ++c)
            for (std::size_t l = 0; l < e.window; ++l)
                out(i * e.stride + l, c) += contrib(i, c * e.window + l);
    return add_rowvec(out, e.decoder_bias);
}

Value embed_on_tape(Tape& tape, const Timeseries& ts, const ConvEmbedder& geometry, Value kernels,
                    Value bias, Value positions, Value cls, bool with_cls) {
    check_embed_input(ts, geometry);
    const std::size_t n = geometry.output_windows(ts.length());
    Value windows = tape.input(im2col(ts.values, geometry.window, geometry.stride));
    Value x = tape.matmul(windows, tape.transpose(kernels));
    x = tape.add_rowvec(x, bias);
    x = tape.add(x, tape.slice_rows(positions, 0, n));
    if (with_cls) x = tape.concat_rows(cls, x);
    return x;
}

Value decode_on_tape(Tape& tape, Value z, const ConvEmbedder& geometry, Value decoder_kernels,
                     Value decoder_bias, std::size_t t) {
    Value contrib = tape.matmul(z, decoder_kernels);
    Value frame = tape.col2im(contrib, t, geometry.channels, geometry.window, geometry.stride);
    return tape.add_rowvec(frame, decoder_bias);
}

Timeseries mask_timestamps(const Timeseries& ts, real rate, std::uint64_t seed) {
    if (rate < real(0) || rate >= real(1)) {
        throw std::invalid_argument("mask_timestamps: rate must be in [0, 1)");
    }
    for (real v : ts.values.data()) {
        if (v < real(0)) {
            throw ContractError("mask_timestamps: negative input value; scale to a nonnegative "
                                "range before masking");
        }
    }
    Timeseries out = ts;
    if (rate == real(0)) return out;
    Rng rng(seed);
    for (std::size_t t = 0; t < ts.length(); ++t) {
        if (static_cast<real>(rng.uniform()) >= rate) continue;
        for (std::size_t c = 0; c < ts.channels(); ++c) {
            out.values(t, c) = kMissingSentinel;
            out.set_missing(t, c);
        }
    }
    return out;
}

void ChannelScaler::fit(const std::vector<Timeseries>& train) {
    if (train.empty()) throw std::invalid_argument("scaler: empty training set");
    const std::size_t m = train.front().channels();
    minimum.assign(m, std::numeric_limits<real>::max());
    std::vector<real> maximum(m, std::numeric_limits<real>::lowest());
    for (const Timeseries& ts : train) {
        if (ts.channels() != m) throw ShapeError("scaler: channel count differs across series");
        for (std::size_t t = 0; t < ts.length(); ++t) {
            for (std::size_t c = 0; c < m; ++c) {
                if (ts.is_missing(t, c)) continue;
                minimum[c] = std::min(minimum[c], ts.values(t, c));
                maximum[c] = std::max(maximum[c], ts.values(t, c));
            }
        }
    }
    range.resize(m);
    for (std::size_t c = 0; c < m; ++c)
        range[c] = std::max(maximum[c] - minimum[c], real(1e-9));
}

Timeseries ChannelScaler::apply(const Timeseries& ts) const {
    if (!fitted()) throw ContractError("scaler: apply before fit");
    if (ts.channels() != minimum.size()) {
        throw ShapeError("scaler: series has " + std::to_string(ts.channels()) +
                         " channels, scaler fitted on " + std::to_string(minimum.size()));
    }
    Timeseries out = ts;
    for (std::size_t t = 0; t < ts.length(); ++t) {
        for (std::size_t c = 0; c < ts.channels(); ++c) {
            if (ts.is_missing(t, c)) {
                out.values(t, c) = kMissingSentinel;
            } else {
                real v = (ts.values(t, c) - minimum[c]) / range[c];
                // Unseen data may fall outside the training range; clip so the
                // nonnegativity contract (and the -1 sentinel) stays valid.
                out.values(t, c) = std::clamp(v, real(0), real(1));
            }
        }
    }
    return out;
}

Matrix ChannelScaler::unscale(const Matrix& scaled) const {
    if (!fitted()) throw ContractError("scaler: unscale before fit");
    Matrix out = scaled;
    for (std::size_t t = 0; t < out.rows(); ++t)
        for (std::size_t c = 0; c < out.cols(); ++c)
            out(t, c) = out(t, c) * range[c] + minimum[c];
    return out;
}

Timeseries load_timeseries_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open timeseries file: " + path);
    std::vector<std::vector<std::pair<bool, real>>> rows; // (present, value)
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::vector<std::pair<bool, real>> row;
        std::stringstream ss(line);
        std::string cell;
        bool numeric = true;
        while (std::getline(ss, cell, ',')) {
            if (cell.empty()) {
                row.emplace_back(false, real(0));
                continue;
            }
            try {
                std::size_t pos = 0;
                real v = static_cast<real>(std::stod(cell, &pos));
                if (pos != cell.size()) numeric = false;
                row.emplace_back(true, v);
            } catch (const std::exception&) {
                numeric = false;
                row.emplace_back(false, real(0));
            }
        }
        if (first && !numeric) {
            first = false; // header row
            continue;
        }
        first = false;
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error("timeseries file has no data rows: " + path);
    const std::size_t m = rows.front().size();
    Timeseries ts{Matrix(rows.size(), m)};
    for (std::size_t t = 0; t < rows.size(); ++t) {
        if (rows[t].size() != m) {
            throw std::runtime_error("timeseries file has ragged rows: " + path);
        }
        for (std::size_t c = 0; c < m; ++c) {
            if (rows[t][c].first) {
                ts.values(t, c) = rows[t][c].second;
            } else {
                ts.values(t, c) = kMissingSentinel;
                ts.set_missing(t, c);
            }
        }
    }
    return ts;
}

void save_timeseries_csv(const Timeseries& ts, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write timeseries file: " + path);
    for (std::size_t c = 0; c < ts.channels(); ++c) out << (c ? ",c" : "c") << c;
    out << "\n";
    char buf[64];
    for (std::size_t t = 0; t < ts.length(); ++t) {
        for (std::size_t c = 0; c < ts.channels(); ++c) {
            if (c) out << ",";
            if (!ts.is_missing(t, c)) {
                std::snprintf(buf, sizeof buf, "%.17g", static_cast<double>(ts.values(t, c)));
                out << buf;
            }
        }
        out << "\n";
    }
}

} // namespace ga
