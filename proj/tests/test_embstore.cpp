#include "atss/embstore.hpp"

#include "oracles.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <set>

using namespace atss;

namespace {

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("atss_test_" + name);
}

// Offset of the first visual float of the record starting at `record_start`.
std::size_t visual_offset(std::size_t record_start, std::size_t id_len) {
    return record_start + 2 + id_len + 1 + 2 + 4;
}

void put_f32(std::vector<std::uint8_t>& bytes, std::size_t offset, float v) {
    std::memcpy(bytes.data() + offset, &v, sizeof v);
}

CorpusErrc decode_error(const std::vector<std::uint8_t>& bytes) {
    try {
        decode_corpus(bytes);
    } catch (const CorpusError& e) {
        return e.code();
    }
    FAIL("decode accepted a malformed corpus");
    return CorpusErrc::bad_magic;
}

FrameEmbeddingRecord unit_record(std::string id, std::size_t frames, std::size_t dim) {
    FrameEmbeddingRecord r{std::move(id), Label::fake, frames, dim, std::vector<float>(frames * dim, 0.5f),
                           std::vector<float>(frames * dim, -0.25f), {}};
    return r;
}

}  // namespace

TEST_SUITE("embstore") {

TEST_CASE("empty corpus encodes to the 8-byte header") {
    const auto bytes = encode_corpus(Corpus{});
    const std::vector<std::uint8_t> expected{0x41, 0x54, 0x53, 0x53, 0x01, 0x00, 0x00, 0x00};
    CHECK(bytes == expected);

    auto decoded = decode_corpus(bytes);
    CHECK(decoded.empty());
    CHECK(decoded.frames() == 0);
}

TEST_CASE("single record file length follows the field table") {
    Corpus c({unit_record("vid", 8, 64)});
    const auto path = temp_path("single.atss");
    write_corpus(c, path);
    // magic+version+reserved, id_len+id, label, T, d, two T*d f32 blocks, caption_count
    const std::size_t expected = 8 + (2 + 3) + 1 + 2 + 4 + 2 * 8 * 64 * 4 + 2;
    CHECK(std::filesystem::file_size(path) == expected);
    CHECK(read_corpus(path) == c);
    std::filesystem::remove(path);
}

TEST_CASE("write-read-write is byte-identical for a random corpus") {
    Rng rng(11);
    const auto c = oracle::random_corpus(rng, 10, 8, 16);
    const auto first = encode_corpus(c);
    const auto back = decode_corpus(first);
    CHECK(back == c);
    CHECK(encode_corpus(back) == first);
}

TEST_CASE("round-trip property over random shapes and captions") {
    Rng rng(5);
    for (int trial = 0; trial < 25; ++trial) {
        const auto n = rng.below(6);
        const auto frames = 1 + rng.below(10);
        const auto dim = 1 + rng.below(20);
        const auto c = oracle::random_corpus(rng, n, frames, dim);
        const auto bytes = encode_corpus(c);
        REQUIRE(decode_corpus(bytes) == c);
    }
}

TEST_CASE("captions survive the round trip") {
    auto r = unit_record("cap", 2, 3);
    r.captions = {"a dog runs", "a dog r\xC3\xBCns"};
    Corpus c({r});
    CHECK(decode_corpus(encode_corpus(c)) == c);
}

TEST_CASE("malformed files are rejected with their named error") {
    Corpus c({unit_record("abc", 2, 2)});
    const auto good = encode_corpus(c);
    const std::size_t vis = visual_offset(8, 3);

    SUBCASE("bad magic") {
        auto b = good;
        b[0] = 'X';
        CHECK(decode_error(b) == CorpusErrc::bad_magic);
        try {
            decode_corpus(b);
        } catch (const CorpusError& e) {
            CHECK(std::string(e.what()).find("bad magic") != std::string::npos);
        }
    }
    SUBCASE("unsupported version") {
        auto b = good;
        b[4] = 2;
        CHECK(decode_error(b) == CorpusErrc::unsupported_version);
    }
    SUBCASE("truncated header") {
        std::vector<std::uint8_t> b(good.begin(), good.begin() + 5);
        CHECK(decode_error(b) == CorpusErrc::truncated_record);
    }
    SUBCASE("truncated record") {
        for (std::size_t cut : {good.size() - 1, vis + 3, std::size_t{9}}) {
            std::vector<std::uint8_t> b(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(cut));
            CHECK(decode_error(b) == CorpusErrc::truncated_record);
        }
    }
    SUBCASE("non-finite embedding") {
        auto b = good;
        put_f32(b, vis + 4, std::numeric_limits<float>::quiet_NaN());
        CHECK(decode_error(b) == CorpusErrc::non_finite);
        put_f32(b, vis + 4, std::numeric_limits<float>::infinity());
        CHECK(decode_error(b) == CorpusErrc::non_finite);
    }
    SUBCASE("zero-norm row") {
        auto b = good;
        put_f32(b, vis + 8, 0.0f);  // visual frame 1
        put_f32(b, vis + 12, 0.0f);
        CHECK(decode_error(b) == CorpusErrc::zero_row);
    }
    SUBCASE("duplicate video id") {
        auto b = good;
        b.insert(b.end(), good.begin() + 8, good.end());
        CHECK(decode_error(b) == CorpusErrc::duplicate_id);
    }
    SUBCASE("invalid label") {
        auto b = good;
        b[8 + 2 + 3] = 7;
        CHECK(decode_error(b) == CorpusErrc::invalid_label);
    }
    SUBCASE("caption count neither 0 nor T") {
        auto b = good;
        b[b.size() - 2] = 1;
        CHECK(decode_error(b) == CorpusErrc::bad_caption_count);
    }
    SUBCASE("non-uniform T across records") {
        Corpus other({unit_record("xyz", 3, 2)});
        auto b = good;
        const auto more = encode_corpus(other);
        b.insert(b.end(), more.begin() + 8, more.end());
        CHECK(decode_error(b) == CorpusErrc::non_uniform_shape);
    }
}

TEST_CASE("invalid records cannot form a corpus") {
    auto r = unit_record("z", 2, 2);
    r.textual[2] = 0.0f;
    r.textual[3] = 0.0f;
    CHECK_THROWS_AS(Corpus({r}), CorpusError);

    auto nan = unit_record("n", 2, 2);
    nan.visual[0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(validate_record(nan), CorpusError);

    CHECK_THROWS_AS(Corpus({unit_record("same", 2, 2), unit_record("same", 2, 2)}), CorpusError);
}

TEST_CASE("json lines debug dump carries every field") {
    auto r = unit_record("j", 2, 3);
    r.visual[1] = 0.1f;
    r.captions = {"one", "two"};
    Corpus c({r});
    const auto text = to_json_lines(c);
    const auto j = nlohmann::json::parse(text.substr(0, text.find('\n')));
    CHECK(j["video_id"] == "j");
    CHECK(j["label"] == 1);
    CHECK(j["visual"].size() == 2);
    CHECK(j["visual"][0].size() == 3);
    CHECK(static_cast<float>(j["visual"][0][1].get<double>()) == 0.1f);
    CHECK(j["captions"][1] == "two");
}

TEST_CASE("split_train_val sizes and determinism") {
    Rng rng(3);
    const auto ten = oracle::random_corpus(rng, 10, 2, 2);
    auto [tr, va] = split_train_val(ten, 0.1, 42);
    CHECK(tr.size() == 9);
    CHECK(va.size() == 1);

    const auto two = oracle::random_corpus(rng, 2, 2, 2);
    auto [tr2, va2] = split_train_val(two, 0.5, 1);
    CHECK(tr2.size() == 1);
    CHECK(va2.size() == 1);

    auto [tr3, va3] = split_train_val(ten, 0.1, 42);
    CHECK(tr3 == tr);
    CHECK(va3 == va);
}

TEST_CASE("split_train_val partitions are disjoint and cover the corpus") {
    Rng rng(8);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto c = oracle::random_corpus(rng, 5 + rng.below(40), 2, 2);
        auto [tr, va] = split_train_val(c, 0.25, seed);
        std::set<std::string> ids;
        for (const auto& r : tr.records()) ids.insert(r.video_id);
        for (const auto& r : va.records()) CHECK(ids.insert(r.video_id).second);
        CHECK(ids.size() == c.size());
        CHECK(va.size() == static_cast<std::size_t>(std::llround(0.25 * static_cast<double>(c.size()))));
    }
}

TEST_CASE("split_train_val rejects splits with an empty side") {
    Rng rng(2);
    const auto three = oracle::random_corpus(rng, 3, 2, 2);
    CHECK_THROWS_AS(split_train_val(three, 0.1, 0), InputError);
    CHECK_THROWS_AS(split_train_val(three, 0.9, 0), InputError);
    CHECK_THROWS_AS(split_train_val(Corpus{}, 0.5, 0), InputError);
}

}  // TEST_SUITE
