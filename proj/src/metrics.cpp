#include "atss/metrics.hpp"

#include "atss/error.hpp"
#include "atss/model.hpp"
#include "atss/parallel.hpp"
#include "atss/simlat.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace atss {

namespace {

void check_samples(std::span<const ScoredSample> samples) {
    for (const auto& s : samples) {
        if (!std::isfinite(s.score) || s.score < 0.0 || s.score > 1.0) {
            throw NumericError("score for '" + s.video_id + "' is not a finite value in [0,1]");
        }
        if (s.label != 0 && s.label != 1) throw InputError("label for '" + s.video_id + "' must be 0 or 1");
    }
}

std::size_t count_positives(std::span<const ScoredSample> samples) {
    return static_cast<std::size_t>(
        std::count_if(samples.begin(), samples.end(), [](const ScoredSample& s) { return s.label == 1; }));
}

}  // namespace

AccuracyResult accuracy(std::span<const ScoredSample> samples, double threshold) {
    if (samples.empty()) throw InputError("accuracy: no samples");
    check_samples(samples);
    AccuracyResult r;
    for (const auto& s : samples) {
        const bool predicted_fake = s.score >= threshold;
        if (s.label == 1) {
            ++(predicted_fake ? r.counts.tp : r.counts.fn);
        } else {
            ++(predicted_fake ? r.counts.fp : r.counts.tn);
        }
    }
    r.acc = static_cast<double>(r.counts.tp + r.counts.tn) / static_cast<double>(r.counts.total());
    return r;
}

double average_precision(std::span<const ScoredSample> samples) {
    check_samples(samples);
    const std::size_t n_pos = count_positives(samples);
    if (n_pos == 0) throw InputError("average precision is undefined without positive samples");

    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return samples[a].score > samples[b].score; });

    double ap = 0.0, prev_recall = 0.0;
    std::size_t tp = 0, seen = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double score = samples[order[i]].score;
        for (; i < order.size() && samples[order[i]].score == score; ++i) {
            tp += static_cast<std::size_t>(samples[order[i]].label);
            ++seen;
        }
        const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
        const double precision = static_cast<double>(tp) / static_cast<double>(seen);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return ap;
}

double roc_auc(std::span<const ScoredSample> samples) {
    check_samples(samples);
    const std::size_t n_pos = count_positives(samples);
    const std::size_t n_neg = samples.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw InputError("ROC AUC needs both positive and negative samples");

    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return samples[a].score < samples[b].score; });

    // Sum of 1-based mid-ranks of the positives.
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && samples[order[j]].score == samples[order[i]].score) ++j;
        const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            if (samples[order[k]].label == 1) rank_sum += mid_rank;
        }
        i = j;
    }
    const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

MetricsReport make_report(std::span<const ScoredSample> samples) {
    const auto acc = accuracy(samples);
    MetricsReport r;
    r.acc = acc.acc;
    r.counts = acc.counts;
    r.n_pos = count_positives(samples);
    r.n_neg = samples.size() - r.n_pos;
    if (r.n_pos > 0 && r.n_neg > 0) {
        r.ap = average_precision(samples);
        r.auc = roc_auc(samples);
    }
    return r;
}

std::vector<ScoredSample> score_corpus(const AtssModel& model, const Corpus& corpus, std::size_t threads) {
    if (!corpus.empty() && corpus.frames() != model.frames) {
        throw ShapeError("corpus has T=" + std::to_string(corpus.frames()) + ", model expects T=" +
                         std::to_string(model.frames));
    }
    std::vector<ScoredSample> out(corpus.size());
    parallel_for(corpus.size(), threads, [&](std::size_t i) {
        const auto& rec = corpus[i];
        out[i] = {forward(model, build_triplet(rec)).p_fake, static_cast<int>(rec.label), rec.video_id};
    });
    return out;
}

MetricsReport evaluate(const AtssModel& model, const Corpus& corpus, std::size_t threads) {
    return make_report(score_corpus(model, corpus, threads));
}

std::string report_to_json(const MetricsReport& r) {
    auto real = [](const std::optional<double>& v) { return v ? fmt::format("{:.12g}", *v) : std::string("null"); };
    return fmt::format(
        "{{\"ap\":{},\"auc\":{},\"acc\":{},\"tp\":{},\"tn\":{},\"fp\":{},\"fn\":{},\"n_pos\":{},\"n_neg\":{}}}",
        real(r.ap), real(r.auc), real(r.acc), r.counts.tp, r.counts.tn, r.counts.fp, r.counts.fn, r.n_pos, r.n_neg);
}

}  // namespace atss
