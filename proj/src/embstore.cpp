#include "atss/embstore.hpp"

#include "atss/binary_io.hpp"
#include "atss/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

namespace atss {

namespace {

constexpr std::uint8_t kMagic[4] = {0x41, 0x54, 0x53, 0x53};
constexpr std::uint16_t kVersion = 1;

void check_rows(const FrameEmbeddingRecord& r, const std::vector<float>& m, const char* modality) {
    for (std::size_t t = 0; t < r.frames; ++t) {
        bool nonzero = false;
        for (std::size_t j = 0; j < r.dim; ++j) {
            const float x = m[t * r.dim + j];
            if (!std::isfinite(x)) {
                throw CorpusError(CorpusErrc::non_finite, r.video_id + ": " + modality + " frame " + std::to_string(t));
            }
            nonzero = nonzero || x != 0.0f;
        }
        if (!nonzero) {
            throw CorpusError(CorpusErrc::zero_row, r.video_id + ": " + modality + " frame " + std::to_string(t));
        }
    }
}

void check_uniform(const std::vector<FrameEmbeddingRecord>& records) {
    std::unordered_set<std::string_view> ids;
    for (const auto& r : records) {
        if (r.frames != records.front().frames || r.dim != records.front().dim) {
            throw CorpusError(CorpusErrc::non_uniform_shape, r.video_id);
        }
        if (!ids.insert(r.video_id).second) throw CorpusError(CorpusErrc::duplicate_id, r.video_id);
    }
}

}  // namespace

const char* to_string(CorpusErrc code) {
    switch (code) {
        case CorpusErrc::bad_magic: return "bad magic";
        case CorpusErrc::unsupported_version: return "unsupported version";
        case CorpusErrc::truncated_record: return "truncated record";
        case CorpusErrc::non_finite: return "non-finite embedding";
        case CorpusErrc::zero_row: return "zero-norm embedding row";
        case CorpusErrc::duplicate_id: return "duplicate video_id";
        case CorpusErrc::invalid_label: return "invalid label";
        case CorpusErrc::invalid_shape: return "invalid shape";
        case CorpusErrc::non_uniform_shape: return "non-uniform T/d";
        case CorpusErrc::bad_caption_count: return "bad caption count";
        case CorpusErrc::field_overflow: return "field overflow";
    }
    return "unknown";
}

CorpusError::CorpusError(CorpusErrc code, const std::string& detail)
    : InputError(std::string(to_string(code)) + (detail.empty() ? "" : ": " + detail)), code_(code) {}

void validate_record(const FrameEmbeddingRecord& r) {
    if (r.frames == 0 || r.dim == 0) throw CorpusError(CorpusErrc::invalid_shape, r.video_id);
    if (r.visual.size() != r.frames * r.dim || r.textual.size() != r.frames * r.dim) {
        throw CorpusError(CorpusErrc::invalid_shape, r.video_id + ": embedding size does not match T*d");
    }
    if (r.label != Label::real && r.label != Label::fake) throw CorpusError(CorpusErrc::invalid_label, r.video_id);
    if (!r.captions.empty() && r.captions.size() != r.frames) {
        throw CorpusError(CorpusErrc::bad_caption_count, r.video_id);
    }
    check_rows(r, r.visual, "visual");
    check_rows(r, r.textual, "textual");
}

Corpus::Corpus(std::vector<FrameEmbeddingRecord> records) : records_(std::move(records)) {
    for (const auto& r : records_) validate_record(r);
    check_uniform(records_);
}

const FrameEmbeddingRecord* Corpus::find(std::string_view video_id) const {
    auto it = std::find_if(records_.begin(), records_.end(), [&](const auto& r) { return r.video_id == video_id; });
    return it == records_.end() ? nullptr : &*it;
}

std::vector<std::uint8_t> encode_corpus(const Corpus& corpus) {
    constexpr auto u16max = std::numeric_limits<std::uint16_t>::max();
    for (const auto& r : corpus.records()) {
        validate_record(r);
        if (r.video_id.size() > u16max || r.frames > u16max || r.dim > std::numeric_limits<std::uint32_t>::max()) {
            throw CorpusError(CorpusErrc::field_overflow, r.video_id);
        }
        for (const auto& c : r.captions) {
            if (c.size() > u16max) throw CorpusError(CorpusErrc::field_overflow, r.video_id + ": caption");
        }
    }
    check_uniform(corpus.records());

    io::ByteWriter w;
    for (auto b : kMagic) w.u8(b);
    w.u16(kVersion);
    w.u16(0);
    for (const auto& r : corpus.records()) {
        w.u16(static_cast<std::uint16_t>(r.video_id.size()));
        w.bytes(r.video_id);
        w.u8(static_cast<std::uint8_t>(r.label));
        w.u16(static_cast<std::uint16_t>(r.frames));
        w.u32(static_cast<std::uint32_t>(r.dim));
        for (float x : r.visual) w.f32(x);
        for (float x : r.textual) w.f32(x);
        w.u16(static_cast<std::uint16_t>(r.captions.size()));
        for (const auto& c : r.captions) {
            w.u16(static_cast<std::uint16_t>(c.size()));
            w.bytes(c);
        }
    }
    return w.data();
}

Corpus decode_corpus(std::span<const std::uint8_t> bytes) {
    io::ByteReader in(bytes);
    std::vector<FrameEmbeddingRecord> records;
    try {
        for (auto b : kMagic) {
            if (in.u8() != b) throw CorpusError(CorpusErrc::bad_magic, "");
        }
        const auto version = in.u16();
        if (version != kVersion) throw CorpusError(CorpusErrc::unsupported_version, std::to_string(version));
        in.u16();  // reserved

        while (!in.at_end()) {
            FrameEmbeddingRecord r;
            r.video_id = in.bytes(in.u16());
            const auto label = in.u8();
            if (label > 1) throw CorpusError(CorpusErrc::invalid_label, r.video_id);
            r.label = static_cast<Label>(label);
            r.frames = in.u16();
            r.dim = in.u32();
            if (r.frames == 0 || r.dim == 0) throw CorpusError(CorpusErrc::invalid_shape, r.video_id);
            const std::size_t n = r.frames * r.dim;
            // Guard the allocation against a corrupted size field.
            if (in.remaining() < 2 * n * sizeof(float)) throw io::TruncatedInput{};
            r.visual.resize(n);
            r.textual.resize(n);
            for (auto& x : r.visual) x = in.f32();
            for (auto& x : r.textual) x = in.f32();
            const auto ncap = in.u16();
            if (ncap != 0 && ncap != r.frames) throw CorpusError(CorpusErrc::bad_caption_count, r.video_id);
            r.captions.reserve(ncap);
            for (std::size_t i = 0; i < ncap; ++i) r.captions.push_back(in.bytes(in.u16()));
            validate_record(r);
            records.push_back(std::move(r));
        }
    } catch (const io::TruncatedInput&) {
        if (in.position() < 8) throw CorpusError(CorpusErrc::truncated_record, "incomplete header");
        throw CorpusError(CorpusErrc::truncated_record, "record " + std::to_string(records.size()));
    }
    return Corpus(std::move(records));
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    io::atomic_write(path, encode_corpus(corpus));
}

Corpus read_corpus(const std::filesystem::path& path) {
    return decode_corpus(io::read_file(path));
}

std::string to_json_lines(const Corpus& corpus) {
    std::string out;
    auto matrix = [](const FrameEmbeddingRecord& r, const std::vector<float>& m) {
        auto rows = nlohmann::json::array();
        for (std::size_t t = 0; t < r.frames; ++t) {
            rows.push_back(std::vector<float>(m.begin() + t * r.dim, m.begin() + (t + 1) * r.dim));
        }
        return rows;
    };
    for (const auto& r : corpus.records()) {
        nlohmann::json j;
        j["video_id"] = r.video_id;
        j["label"] = static_cast<int>(r.label);
        j["visual"] = matrix(r, r.visual);
        j["textual"] = matrix(r, r.textual);
        j["captions"] = r.captions;
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::pair<Corpus, Corpus> split_train_val(const Corpus& corpus, double val_fraction, std::uint64_t seed) {
    if (corpus.empty()) throw InputError("cannot split an empty corpus");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw InputError("val_fraction must lie in (0, 1)");
    const std::size_t n = corpus.size();
    const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
    if (n_val == 0 || n_val == n) {
        throw InputError("val_fraction " + std::to_string(val_fraction) + " leaves an empty side for N=" +
                         std::to_string(n));
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);

    std::vector<bool> is_val(n, false);
    for (std::size_t i = 0; i < n_val; ++i) is_val[order[i]] = true;

    std::vector<FrameEmbeddingRecord> train, val;
    for (std::size_t i = 0; i < n; ++i) (is_val[i] ? val : train).push_back(corpus[i]);
    return {Corpus(std::move(train)), Corpus(std::move(val))};
}

}  // namespace atss
