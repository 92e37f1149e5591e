#include "atss/optim.hpp"

#include "atss/error.hpp"
#include "atss/metrics.hpp"
#include "atss/nd/ops.hpp"
#include "atss/parallel.hpp"
#include "atss/random.hpp"

#include <fmt/format.h>

#include <cmath>
#include <numeric>

namespace atss {

Adam::Adam(std::vector<nd::Tensor> params, Options options) : params_(std::move(params)), options_(options) {
    if (!(options_.lr > 0.0)) throw InputError("Adam: learning rate must be positive");
    for (const auto& p : params_) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
    }
}

void Adam::set_lr(double lr) {
    if (!(lr > 0.0)) throw InputError("Adam: learning rate must be positive");
    options_.lr = lr;
}

void Adam::step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (!params_[i].has_grad()) throw Error("Adam: parameter " + std::to_string(i) + " has no gradient");
    }
    ++steps_;
    const auto t = static_cast<double>(steps_);
    const double c1 = 1.0 - std::pow(options_.beta1, t);
    const double c2 = 1.0 - std::pow(options_.beta2, t);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto w = params_[i].mutable_value();
        auto g = params_[i].grad();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = options_.beta1 * m[j] + (1.0 - options_.beta1) * g[j];
            v[j] = options_.beta2 * v[j] + (1.0 - options_.beta2) * g[j] * g[j];
            const double m_hat = m[j] / c1;
            const double v_hat = v[j] / c2;
            w[j] -= options_.lr * m_hat / (std::sqrt(v_hat) + options_.eps);
        }
        nd::require_finite(w, "Adam update");
    }
}

PlateauScheduler::PlateauScheduler(double initial_lr, double factor, std::size_t patience)
    : lr_(initial_lr), factor_(factor), patience_(patience) {
    if (!(initial_lr > 0.0)) throw InputError("scheduler: initial lr must be positive");
    if (!(factor > 0.0 && factor < 1.0)) throw InputError("scheduler: factor must lie in (0, 1)");
}

double PlateauScheduler::observe(double metric) {
    if (!std::isfinite(metric)) throw NumericError("scheduler: monitored metric is not finite");
    if (!best_ || metric > *best_) {
        best_ = metric;
        stale_ = 0;
    } else {
        ++stale_;
    }
    if (stale_ > patience_) {
        lr_ *= factor_;
        stale_ = 0;
    }
    return lr_;
}

std::vector<LabeledTriplet> prepare_triplets(const Corpus& corpus, std::size_t threads) {
    std::vector<LabeledTriplet> out(corpus.size());
    parallel_for(corpus.size(), threads, [&](std::size_t i) {
        out[i] = {build_triplet(corpus[i]), static_cast<int>(corpus[i].label)};
    });
    return out;
}

double train_batch(AtssModel& model, Adam& adam, std::span<const LabeledTriplet* const> batch) {
    if (batch.empty()) throw InputError("train_batch: empty batch");
    const double weight = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (const auto* sample : batch) {
        nd::Tape tape;
        auto probs = forward_probs(tape, model, sample->triplet);
        auto l = loss(tape, probs, sample->label);
        total += l.item();
        tape.backward(nd::scale(tape, l, weight));
    }
    adam.step();
    model.zero_grad();
    return total * weight;
}

namespace {

std::vector<nd::Tensor> parameter_handles(AtssModel& model) {
    std::vector<nd::Tensor> params;
    model.for_each_parameter([&](const std::string&, nd::Tensor& t) { params.push_back(t); });
    return params;
}

double validation_auc(const AtssModel& model, const std::vector<LabeledTriplet>& val, std::size_t threads) {
    std::vector<ScoredSample> scored(val.size());
    parallel_for(val.size(), threads, [&](std::size_t i) {
        scored[i] = {forward(model, val[i].triplet).p_fake, val[i].label, {}};
    });
    return roc_auc(scored);
}

}  // namespace

TrainResult train(AtssModel model, const Corpus& train_set, const Corpus& val_set, const TrainConfig& cfg) {
    TrainResult result{model, {}, std::nullopt, 0};
    if (cfg.epochs == 0) return result;

    if (train_set.empty() || val_set.empty()) throw InputError("train: training and validation sets must be nonempty");
    if (train_set.frames() != model.frames || val_set.frames() != model.frames) {
        throw ShapeError("train: corpus frame count does not match the model's T=" + std::to_string(model.frames));
    }
    if (train_set.dim() != val_set.dim()) throw ShapeError("train: training and validation embedding sizes differ");
    if (cfg.batch_size == 0) throw InputError("train: batch size must be positive");
    const auto n_val_pos = std::count_if(val_set.records().begin(), val_set.records().end(),
                                         [](const auto& r) { return r.label == Label::fake; });
    if (n_val_pos == 0 || static_cast<std::size_t>(n_val_pos) == val_set.size()) {
        throw InputError("train: validation split must contain both real and fake videos");
    }

    const auto train_data = prepare_triplets(train_set, cfg.threads);
    const auto val_data = prepare_triplets(val_set, cfg.threads);

    Adam adam(parameter_handles(model), {.lr = cfg.lr});
    PlateauScheduler scheduler(cfg.lr, cfg.lr_factor, cfg.patience);

    std::vector<std::size_t> order(train_data.size());
    std::vector<const LabeledTriplet*> batch;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(cfg.seed, epoch));
        for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            batch.clear();
            for (std::size_t i = start; i < end; ++i) batch.push_back(&train_data[order[i]]);
            loss_sum += train_batch(model, adam, batch) * static_cast<double>(batch.size());
        }

        EpochLog entry{epoch, loss_sum / static_cast<double>(order.size()), validation_auc(model, val_data, cfg.threads),
                       adam.lr()};
        result.log.push_back(entry);
        if (!result.best_val_auc || entry.val_auc > *result.best_val_auc) {
            result.best_val_auc = entry.val_auc;
            result.best_epoch = epoch;
            result.model = model.clone();
        }
        adam.set_lr(scheduler.observe(entry.val_auc));
        if (cfg.on_epoch) cfg.on_epoch(entry, model);
    }
    return result;
}

std::string training_log_csv(std::span<const EpochLog> log) {
    std::string out = "epoch,train_loss,val_auc,lr\n";
    for (const auto& e : log) {
        out += fmt::format("{},{:.17g},{:.17g},{:.17g}\n", e.epoch, e.train_loss, e.val_auc, e.lr);
    }
    return out;
}

}  // namespace atss
