#pragma once

#include "atss/embstore.hpp"
#include "atss/simlat.hpp"

#include <cstdint>

namespace atss {

/// Parameters of the two surrogate processes.
///
/// Real videos follow a normalised random walk, so frame similarity decays
/// with temporal distance. Fake videos mix a per-video anchor with small
/// per-frame noise, so every frame stays close to every other one.
struct SynthConfig {
    std::size_t n_real = 500;
    std::size_t n_fake = 500;
    std::size_t frames = 8;
    std::size_t dim = 64;
    double alpha = 0.85;       // anchor weight for fake videos, in [0, 1)
    double sigma_real = 0.8;   // random-walk step scale
    double sigma_fake = 0.15;  // residual noise scale around the anchor
    double rho_cross = 0.7;    // visual/textual coupling, in [0, 1]
    std::uint64_t seed = 0;

    void validate() const;
};

/// Generates n_real records labelled real followed by n_fake labelled fake.
/// Each record draws from its own stream derived from (seed, class, index),
/// so a record's content does not depend on the other counts.
Corpus generate(const SynthConfig& config);

/// Mean of the off-diagonal entries of each matrix.
struct DensityStats {
    double visual = 0.0;
    double textual = 0.0;
    double cross = 0.0;
};

DensityStats density_statistic(const SimilarityTriplet& triplet);
double off_diagonal_mean(const Matrix& m);

}  // namespace atss
