#pragma once

#include "atss/error.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace atss {

enum class Label : std::uint8_t { real = 0, fake = 1 };

/// One video: T frames of d-dimensional visual and caption embeddings,
/// stored frame-major as 32-bit floats exactly as they appear on disk.
struct FrameEmbeddingRecord {
    std::string video_id;
    Label label = Label::real;
    std::size_t frames = 0;
    std::size_t dim = 0;
    std::vector<float> visual;
    std::vector<float> textual;
    std::vector<std::string> captions;  // empty, or one per frame

    std::span<const float> visual_row(std::size_t t) const { return {visual.data() + t * dim, dim}; }
    std::span<const float> textual_row(std::size_t t) const { return {textual.data() + t * dim, dim}; }

    bool operator==(const FrameEmbeddingRecord&) const = default;
};

/// Ordered set of records sharing one (T, d) with unique video ids.
/// An empty corpus reports frames() == dim() == 0.
class Corpus {
public:
    Corpus() = default;
    explicit Corpus(std::vector<FrameEmbeddingRecord> records);

    const std::vector<FrameEmbeddingRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }
    std::size_t frames() const { return records_.empty() ? 0 : records_.front().frames; }
    std::size_t dim() const { return records_.empty() ? 0 : records_.front().dim; }

    const FrameEmbeddingRecord& operator[](std::size_t i) const { return records_[i]; }
    const FrameEmbeddingRecord* find(std::string_view video_id) const;

    bool operator==(const Corpus&) const = default;

private:
    std::vector<FrameEmbeddingRecord> records_;
};

enum class CorpusErrc {
    bad_magic,
    unsupported_version,
    truncated_record,
    non_finite,
    zero_row,
    duplicate_id,
    invalid_label,
    invalid_shape,
    non_uniform_shape,
    bad_caption_count,
    field_overflow,
};

/// Stable short name for each error class, embedded in the error message.
const char* to_string(CorpusErrc code);

class CorpusError : public InputError {
public:
    CorpusError(CorpusErrc code, const std::string& detail);
    CorpusErrc code() const { return code_; }

private:
    CorpusErrc code_;
};

/// Throws CorpusError describing the first violated record invariant.
void validate_record(const FrameEmbeddingRecord& record);

/// Encodes the corpus in the binary ATSS format. Validates first; nothing is
/// produced for an invalid corpus.
std::vector<std::uint8_t> encode_corpus(const Corpus& corpus);
Corpus decode_corpus(std::span<const std::uint8_t> bytes);

void write_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus read_corpus(const std::filesystem::path& path);

/// One JSON object per line, for debugging:
/// {video_id, label, visual, textual, captions}.
std::string to_json_lines(const Corpus& corpus);

/// Random disjoint split; the validation side holds round(val_fraction * N)
/// records. Both sides keep the input's relative order.
std::pair<Corpus, Corpus> split_train_val(const Corpus& corpus, double val_fraction, std::uint64_t seed);

}  // namespace atss
