#pragma once

#include "atss/embstore.hpp"
#include "atss/matrix.hpp"

#include <array>
#include <filesystem>
#include <span>
#include <string>

namespace atss {

/// The three T x T cosine self-similarity matrices of one video.
struct SimilarityTriplet {
    Matrix visual;   // cos(v_i, v_j)
    Matrix textual;  // cos(e_i, e_j)
    Matrix cross;    // cos(v_i, e_j); rows index visual frames, columns textual frames

    std::size_t frames() const { return visual.rows; }
    bool operator==(const SimilarityTriplet&) const = default;
};

/// Cosine similarity a.b / (|a| |b|). Throws NumericError when either
/// vector has zero norm or a non-finite entry.
double cosine(std::span<const float> a, std::span<const float> b);
double cosine(std::span<const double> a, std::span<const double> b);

SimilarityTriplet build_triplet(const FrameEmbeddingRecord& record);

/// CSV with three blocks headed S_VISUAL, S_TEXTUAL, S_CROSS. Values use
/// 17 significant digits so the text parses back to the same doubles.
std::string triplet_to_csv(const SimilarityTriplet& triplet);
SimilarityTriplet triplet_from_csv(const std::string& text);
void export_triplet_csv(const SimilarityTriplet& triplet, const std::filesystem::path& path);

}  // namespace atss
