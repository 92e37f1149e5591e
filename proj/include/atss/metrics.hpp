#pragma once

#include "atss/embstore.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace atss {

struct AtssModel;

/// One scored video; score is p_fake.
struct ScoredSample {
    double score = 0.0;
    int label = 0;  // 0 real, 1 fake
    std::string video_id;
};

struct ConfusionCounts {
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
    std::size_t total() const { return tp + tn + fp + fn; }
    bool operator==(const ConfusionCounts&) const = default;
};

struct AccuracyResult {
    double acc = 0.0;
    ConfusionCounts counts;
};

/// AP and AUC are absent when the samples contain a single class.
struct MetricsReport {
    std::optional<double> ap;
    std::optional<double> auc;
    double acc = 0.0;
    ConfusionCounts counts;
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;

    bool operator==(const MetricsReport&) const = default;
};

inline constexpr double kDecisionThreshold = 0.5;

/// Predicts fake iff score >= threshold.
AccuracyResult accuracy(std::span<const ScoredSample> samples, double threshold = kDecisionThreshold);

/// Step-sum AP over the precision/recall points obtained by lowering the
/// threshold one distinct score at a time; tied scores enter as one group.
/// Throws when there is no positive sample.
double average_precision(std::span<const ScoredSample> samples);

/// Mann-Whitney estimate: P(score_pos > score_neg) + 0.5 P(tie).
/// Throws unless both classes are present.
double roc_auc(std::span<const ScoredSample> samples);

MetricsReport make_report(std::span<const ScoredSample> samples);

/// Scores every record with the model (p_fake) on up to `threads` workers.
std::vector<ScoredSample> score_corpus(const AtssModel& model, const Corpus& corpus, std::size_t threads = 1);
MetricsReport evaluate(const AtssModel& model, const Corpus& corpus, std::size_t threads = 1);

/// {ap, auc, acc, tp, tn, fp, fn, n_pos, n_neg}; absent metrics are null.
/// Reals use 12 significant digits.
std::string report_to_json(const MetricsReport& report);

}  // namespace atss
