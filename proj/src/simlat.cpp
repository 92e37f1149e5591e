#include "atss/simlat.hpp"

#include "atss/binary_io.hpp"
#include "atss/csv.hpp"
#include "atss/error.hpp"

#include <cmath>
#include <string>

namespace atss {

namespace {

template <typename T>
double cosine_impl(std::span<const T> a, std::span<const T> b) {
    if (a.size() != b.size()) throw ShapeError("cosine: length mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a[i], y = b[i];
        if (!std::isfinite(x) || !std::isfinite(y)) throw NumericError("cosine: non-finite input");
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if (na == 0.0 || nb == 0.0) throw NumericError("cosine: zero-norm input");
    // sqrt(na * nb) rather than sqrt(na) * sqrt(nb): for a == b this gives
    // sqrt(na^2) == na exactly, so identical rows yield exactly 1.
    return dot / std::sqrt(na * nb);
}

void check_nonzero_rows(const FrameEmbeddingRecord& r, const std::vector<float>& m, const char* modality) {
    for (std::size_t t = 0; t < r.frames; ++t) {
        double norm = 0.0;
        for (std::size_t j = 0; j < r.dim; ++j) {
            const double x = m[t * r.dim + j];
            if (!std::isfinite(x)) {
                throw NumericError(std::string("non-finite ") + modality + " embedding at frame " + std::to_string(t));
            }
            norm += x * x;
        }
        if (norm == 0.0) {
            throw NumericError(std::string("zero-norm ") + modality + " embedding at frame " + std::to_string(t));
        }
    }
}

}  // namespace

double cosine(std::span<const float> a, std::span<const float> b) { return cosine_impl(a, b); }
double cosine(std::span<const double> a, std::span<const double> b) { return cosine_impl(a, b); }

SimilarityTriplet build_triplet(const FrameEmbeddingRecord& r) {
    if (r.frames == 0 || r.visual.size() != r.frames * r.dim || r.textual.size() != r.frames * r.dim) {
        throw ShapeError("build_triplet: record '" + r.video_id + "' has inconsistent shape");
    }
    check_nonzero_rows(r, r.visual, "visual");
    check_nonzero_rows(r, r.textual, "textual");

    const std::size_t n = r.frames;
    SimilarityTriplet s{Matrix(n, n), Matrix(n, n), Matrix(n, n)};
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            s.cross(i, j) = cosine(r.visual_row(i), r.textual_row(j));
        }
        for (std::size_t j = i; j < n; ++j) {
            s.visual(i, j) = s.visual(j, i) = cosine(r.visual_row(i), r.visual_row(j));
            s.textual(i, j) = s.textual(j, i) = cosine(r.textual_row(i), r.textual_row(j));
        }
    }
    return s;
}

std::string triplet_to_csv(const SimilarityTriplet& t) {
    std::string out;
    csv::append_block(out, "S_VISUAL", t.visual);
    csv::append_block(out, "S_TEXTUAL", t.textual);
    csv::append_block(out, "S_CROSS", t.cross);
    return out;
}

SimilarityTriplet triplet_from_csv(const std::string& text) {
    auto blocks = csv::parse_blocks(text);
    if (blocks.size() != 3 || blocks[0].first != "S_VISUAL" || blocks[1].first != "S_TEXTUAL" ||
        blocks[2].first != "S_CROSS") {
        throw InputError("similarity CSV must contain S_VISUAL, S_TEXTUAL, S_CROSS blocks in order");
    }
    SimilarityTriplet t{blocks[0].second, blocks[1].second, blocks[2].second};
    const auto n = t.visual.rows;
    for (const Matrix* m : {&t.visual, &t.textual, &t.cross}) {
        if (m->rows != n || m->cols != n) throw InputError("similarity CSV blocks must be square and equal-sized");
    }
    return t;
}

void export_triplet_csv(const SimilarityTriplet& triplet, const std::filesystem::path& path) {
    io::atomic_write(path, triplet_to_csv(triplet));
}

}  // namespace atss
