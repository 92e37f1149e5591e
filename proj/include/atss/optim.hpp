#pragma once

#include "atss/embstore.hpp"
#include "atss/model.hpp"
#include "atss/nd/tensor.hpp"
#include "atss/simlat.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace atss {

/// Bias-corrected Adam over a fixed list of parameter tensors.
class Adam {
public:
    struct Options {
        double lr = 1e-4;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
    };

    Adam(std::vector<nd::Tensor> params, Options options);

    /// Applies one update from the accumulated gradients. Every parameter
    /// must carry a gradient; the caller zeroes them afterwards.
    void step();

    double lr() const { return options_.lr; }
    void set_lr(double lr);
    std::uint64_t step_count() const { return steps_; }
    const Options& options() const { return options_; }

private:
    std::vector<nd::Tensor> params_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    Options options_;
    std::uint64_t steps_ = 0;
};

/// Max-mode reduce-on-plateau: the lr is multiplied by `factor` once the
/// metric has failed to strictly improve on its best value for more than
/// `patience` consecutive observations; the counter then restarts.
class PlateauScheduler {
public:
    explicit PlateauScheduler(double initial_lr, double factor = 0.5, std::size_t patience = 3);

    /// Feeds one epoch's validation metric and returns the lr to use next.
    double observe(double metric);

    double lr() const { return lr_; }
    std::optional<double> best() const { return best_; }
    std::size_t epochs_since_improvement() const { return stale_; }

private:
    double lr_;
    double factor_;
    std::size_t patience_;
    std::optional<double> best_;
    std::size_t stale_ = 0;
};

struct LabeledTriplet {
    SimilarityTriplet triplet;
    int label = 0;
};

/// Builds similarity triplets for every record on up to `threads` workers.
std::vector<LabeledTriplet> prepare_triplets(const Corpus& corpus, std::size_t threads = 1);

/// Forward/backward over the batch with mean loss reduction, then one Adam
/// step and gradient reset. Returns the batch's mean loss before the step.
double train_batch(AtssModel& model, Adam& adam, std::span<const LabeledTriplet* const> batch);

/// `lr` is the learning rate that was in effect during the epoch.
struct EpochLog {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_auc = 0.0;
    double lr = 0.0;

    bool operator==(const EpochLog&) const = default;
};

struct TrainConfig {
    std::size_t epochs = 200;
    std::size_t batch_size = 32;
    double lr = 1e-4;
    double lr_factor = 0.5;
    std::size_t patience = 3;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    /// Invoked after each epoch is logged, with the model as it stands at the
    /// end of that epoch.
    std::function<void(const EpochLog&, const AtssModel&)> on_epoch;
};

struct TrainResult {
    AtssModel model;  // parameters from the epoch with the best validation AUC
    std::vector<EpochLog> log;
    std::optional<double> best_val_auc;
    std::size_t best_epoch = 0;
};

/// Seeded shuffle -> minibatch Adam -> validation AUC -> plateau scheduler,
/// once per epoch. With zero epochs the input model is returned unchanged.
TrainResult train(AtssModel model, const Corpus& train_set, const Corpus& val_set, const TrainConfig& config);

/// CSV with header `epoch,train_loss,val_auc,lr`.
std::string training_log_csv(std::span<const EpochLog> log);

}  // namespace atss
