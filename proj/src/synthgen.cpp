#include "atss/synthgen.hpp"

#include "atss/error.hpp"
#include "atss/random.hpp"

#include <fmt/format.h>

#include <cmath>
#include <limits>
#include <vector>

namespace atss {

void SynthConfig::validate() const {
    if (frames == 0 || frames > std::numeric_limits<std::uint16_t>::max()) {
        throw InputError("synth: T must lie in [1, 65535]");
    }
    if (dim == 0) throw InputError("synth: d must be positive");
    if (!(alpha >= 0.0 && alpha < 1.0)) throw InputError("synth: alpha must lie in [0, 1)");
    if (!(rho_cross >= 0.0 && rho_cross <= 1.0)) throw InputError("synth: rho_cross must lie in [0, 1]");
    if (!(sigma_real > 0.0) || !(sigma_fake > 0.0) || !std::isfinite(sigma_real) || !std::isfinite(sigma_fake)) {
        throw InputError("synth: noise scales must be positive and finite");
    }
}

namespace {

using Vec = std::vector<double>;

Vec gaussian_vec(Rng& rng, std::size_t d) {
    Vec v(d);
    for (auto& x : v) x = rng.gaussian();
    return v;
}

Vec normalized(Vec v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    for (auto& x : v) x /= n;
    return v;
}

/// a*x + b*y
Vec mix(double a, const Vec& x, double b, const Vec& y) {
    Vec out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = a * x[i] + b * y[i];
    return out;
}

void append(std::vector<float>& dst, const Vec& v) {
    for (double x : v) dst.push_back(static_cast<float>(x));
}

FrameEmbeddingRecord make_real(const SynthConfig& c, std::size_t index) {
    Rng rng(derive_seed(c.seed, 2 * index));
    FrameEmbeddingRecord r{fmt::format("real_{:06d}", index), Label::real, c.frames, c.dim, {}, {}, {}};
    r.visual.reserve(c.frames * c.dim);
    r.textual.reserve(c.frames * c.dim);
    Vec v = normalized(gaussian_vec(rng, c.dim));
    for (std::size_t t = 0; t < c.frames; ++t) {
        if (t > 0) v = normalized(mix(1.0, v, c.sigma_real, gaussian_vec(rng, c.dim)));
        const Vec e = normalized(mix(c.rho_cross, v, 1.0 - c.rho_cross, gaussian_vec(rng, c.dim)));
        append(r.visual, v);
        append(r.textual, e);
    }
    return r;
}

FrameEmbeddingRecord make_fake(const SynthConfig& c, std::size_t index) {
    Rng rng(derive_seed(c.seed, 2 * index + 1));
    FrameEmbeddingRecord r{fmt::format("fake_{:06d}", index), Label::fake, c.frames, c.dim, {}, {}, {}};
    r.visual.reserve(c.frames * c.dim);
    r.textual.reserve(c.frames * c.dim);
    const Vec anchor_v = normalized(gaussian_vec(rng, c.dim));
    const Vec anchor_e = normalized(mix(c.rho_cross, anchor_v, 1.0 - c.rho_cross, gaussian_vec(rng, c.dim)));
    const double noise = (1.0 - c.alpha) * c.sigma_fake;
    for (std::size_t t = 0; t < c.frames; ++t) {
        append(r.visual, normalized(mix(c.alpha, anchor_v, noise, gaussian_vec(rng, c.dim))));
        append(r.textual, normalized(mix(c.alpha, anchor_e, noise, gaussian_vec(rng, c.dim))));
    }
    return r;
}

}  // namespace

Corpus generate(const SynthConfig& config) {
    config.validate();
    std::vector<FrameEmbeddingRecord> records;
    records.reserve(config.n_real + config.n_fake);
    for (std::size_t i = 0; i < config.n_real; ++i) records.push_back(make_real(config, i));
    for (std::size_t i = 0; i < config.n_fake; ++i) records.push_back(make_fake(config, i));
    return Corpus(std::move(records));
}

double off_diagonal_mean(const Matrix& m) {
    if (m.rows != m.cols) throw ShapeError("off_diagonal_mean: matrix must be square");
    if (m.rows < 2) throw InputError("off-diagonal mean is undefined for T < 2");
    double s = 0.0;
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j)
            if (i != j) s += m(i, j);
    return s / static_cast<double>(m.rows * (m.rows - 1));
}

DensityStats density_statistic(const SimilarityTriplet& t) {
    return {off_diagonal_mean(t.visual), off_diagonal_mean(t.textual), off_diagonal_mean(t.cross)};
}

}  // namespace atss
