#include "atss/metrics.hpp"

#include "atss/error.hpp"
#include "atss/model.hpp"
#include "oracles.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cmath>

using namespace atss;

namespace {

std::vector<ScoredSample> samples(std::vector<double> scores, std::vector<int> labels) {
    std::vector<ScoredSample> out;
    for (std::size_t i = 0; i < scores.size(); ++i) out.push_back({scores[i], labels[i], "v" + std::to_string(i)});
    return out;
}

/// Scores drawn from a handful of levels so ties are common.
std::vector<ScoredSample> random_tied(Rng& rng) {
    const std::size_t n = 2 + rng.below(63);
    const std::size_t levels = 1 + rng.below(8);
    std::vector<ScoredSample> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i].score = static_cast<double>(rng.below(levels)) / static_cast<double>(levels);
        out[i].label = static_cast<int>(rng.below(2));
    }
    out[0].label = 1;
    out[1].label = 0;
    return out;
}

/// Model whose output layer ignores its input and emits equal logits.
AtssModel constant_model(std::size_t frames) {
    auto m = init_model(EncoderConfig{1, 1, 4, 4}, frames, 0);
    for (auto& w : m.head_out.weight.mutable_value()) w = 0.0;
    return m;
}

FrameEmbeddingRecord tagged(Rng& rng, std::string id, Label label) {
    auto r = oracle::random_record(rng, 3, 4, std::move(id));
    r.label = label;
    return r;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("accuracy examples") {
    auto ones = samples({1.0, 1.0, 1.0}, {1, 1, 1});
    auto a = accuracy(ones);
    CHECK(a.acc == 1.0);
    CHECK(a.counts.tp == 3);

    a = accuracy(samples({0.6, 0.4}, {0, 1}));
    CHECK(a.acc == 0.0);
    CHECK(a.counts.fp == 1);
    CHECK(a.counts.fn == 1);

    a = accuracy(samples({0.5}, {1}));
    CHECK(a.counts.tp == 1);

    CHECK_THROWS_AS(accuracy({}), InputError);
}

TEST_CASE("average precision examples") {
    CHECK(average_precision(samples({0.9, 0.8, 0.7, 0.6}, {1, 0, 1, 0})) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
    CHECK(average_precision(samples({0.9, 0.8, 0.7, 0.6}, {0, 0, 0, 1})) == 0.25);
    CHECK(average_precision(samples({0.9, 0.8, 0.3, 0.1}, {1, 1, 0, 0})) == 1.0);
    CHECK_THROWS_AS(average_precision(samples({0.3, 0.2}, {0, 0})), InputError);

    // A tie spanning one positive and one negative enters as a single point.
    CHECK(average_precision(samples({0.5, 0.5}, {1, 0})) == 0.5);
}

TEST_CASE("roc auc examples") {
    CHECK(roc_auc(samples({0.8, 0.6, 0.4, 0.2}, {1, 0, 1, 0})) == 0.75);
    CHECK(roc_auc(samples({0.3, 0.3, 0.3, 0.3}, {1, 0, 1, 0})) == 0.5);
    CHECK(roc_auc(samples({0.9, 0.8, 0.1}, {1, 1, 0})) == 1.0);
    CHECK_THROWS_AS(roc_auc(samples({0.3, 0.2}, {1, 1})), InputError);
}

TEST_CASE("AP and AUC agree with brute-force oracles on tied random sets") {
    Rng rng(123);
    for (int trial = 0; trial < 200; ++trial) {
        const auto s = random_tied(rng);
        CHECK(std::abs(roc_auc(s) - oracle::brute_force_auc(s)) <= 1e-12);
        CHECK(std::abs(average_precision(s) - oracle::staircase_ap(s)) <= 1e-12);
    }
}

TEST_CASE("rank statistics ignore strictly increasing transforms") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const auto s = random_tied(rng);
        auto t = s;
        for (auto& x : t) x.score = std::exp(3.0 * x.score) / 30.0;
        CHECK(std::abs(roc_auc(s) - roc_auc(t)) <= 1e-12);
        CHECK(std::abs(average_precision(s) - average_precision(t)) <= 1e-12);
    }
}

TEST_CASE("inverting labels and negating scores preserves AUC") {
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        const auto s = random_tied(rng);
        auto flipped = s;
        for (auto& x : flipped) {
            x.label = 1 - x.label;
            x.score = 1.0 - x.score;
        }
        CHECK(std::abs(roc_auc(s) - roc_auc(flipped)) <= 1e-12);

        // Without ties, inverting labels alone maps AUC to 1 - AUC.
        auto distinct = s;
        for (std::size_t i = 0; i < distinct.size(); ++i) distinct[i].score = rng.uniform();
        auto inverted = distinct;
        for (auto& x : inverted) x.label = 1 - x.label;
        CHECK(std::abs(roc_auc(inverted) - (1.0 - roc_auc(distinct))) <= 1e-12);
    }
}

TEST_CASE("report counts are consistent") {
    Rng rng(10);
    for (int trial = 0; trial < 50; ++trial) {
        const auto s = random_tied(rng);
        const auto r = make_report(s);
        CHECK(r.counts.total() == s.size());
        CHECK(r.n_pos + r.n_neg == s.size());
        CHECK(r.counts.tp + r.counts.fn == r.n_pos);
        const double err = static_cast<double>(r.counts.fp + r.counts.fn) / static_cast<double>(s.size());
        CHECK(std::abs(r.acc + err - 1.0) <= 1e-12);
    }
}

TEST_CASE("single-class report omits AP and AUC") {
    const auto r = make_report(samples({0.7, 0.2}, {0, 0}));
    CHECK_FALSE(r.ap.has_value());
    CHECK_FALSE(r.auc.has_value());
    CHECK(r.acc == 0.5);
    const auto j = nlohmann::json::parse(report_to_json(r));
    CHECK(j["ap"].is_null());
    CHECK(j["auc"].is_null());
    CHECK(j["fp"] == 1);
}

TEST_CASE("json report uses 12 significant digits") {
    const auto r = make_report(samples({0.9, 0.8, 0.7, 0.6}, {1, 0, 1, 0}));
    CHECK(report_to_json(r) ==
          R"({"ap":0.833333333333,"auc":0.75,"acc":0.5,"tp":2,"tn":0,"fp":2,"fn":0,"n_pos":2,"n_neg":2})");
}

TEST_CASE("evaluate with a constant model") {
    Rng rng(1);
    const Corpus c({tagged(rng, "a", Label::real), tagged(rng, "b", Label::fake)});
    const auto m = constant_model(3);
    const auto r = evaluate(m, c);
    CHECK(r.acc == 0.5);
    CHECK(*r.auc == 0.5);
    CHECK(evaluate(m, c, 2) == r);

    const auto scored = score_corpus(m, c);
    CHECK(scored[0].video_id == "a");
    CHECK(scored[1].label == 1);
    CHECK(scored[0].score == 0.5);
}

TEST_CASE("evaluate is deterministic across thread counts") {
    Rng rng(2);
    std::vector<FrameEmbeddingRecord> records;
    for (int i = 0; i < 12; ++i) records.push_back(tagged(rng, "r" + std::to_string(i), i % 2 ? Label::fake : Label::real));
    const Corpus c(std::move(records));
    const auto m = init_model(EncoderConfig{1, 1, 4, 4}, 3, 5);
    const auto a = evaluate(m, c, 1);
    CHECK(evaluate(m, c, 1) == a);
    CHECK(evaluate(m, c, 3) == a);
    CHECK(report_to_json(evaluate(m, c, 4)) == report_to_json(a));
}

}  // TEST_SUITE
