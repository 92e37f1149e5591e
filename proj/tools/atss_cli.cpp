// atss: command-line front end for synthesising corpora, training and
// evaluating the detector, and dumping similarity/attention matrices.
//
// Exit codes: 0 success, 1 internal error, 2 usage or input error.

#include "atss/binary_io.hpp"
#include "atss/embstore.hpp"
#include "atss/error.hpp"
#include "atss/metrics.hpp"
#include "atss/model.hpp"
#include "atss/optim.hpp"
#include "atss/random.hpp"
#include "atss/simlat.hpp"
#include "atss/synthgen.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

namespace fs = std::filesystem;

namespace {

constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;

// Stream ids under the single --seed of `train`; `eval --subset` reuses the
// split stream to regenerate the same partition.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;

atss::Corpus load_corpus(const std::string& path) {
    if (!fs::exists(path)) throw atss::InputError("data file not found: " + path);
    return atss::read_corpus(path);
}

const atss::FrameEmbeddingRecord& find_video(const atss::Corpus& corpus, const std::string& id) {
    const auto* rec = corpus.find(id);
    if (!rec) throw atss::InputError("video not found: " + id);
    return *rec;
}

atss::AtssModel load_model(const std::string& path) {
    if (!fs::exists(path)) throw atss::InputError("model file not found: " + path);
    return atss::load_checkpoint(path);
}

struct SynthArgs {
    std::string out;
    atss::SynthConfig config;
};

int run_synth(const SynthArgs& a) {
    a.config.validate();
    const auto corpus = atss::generate(a.config);
    atss::write_corpus(corpus, a.out);
    std::printf("wrote %zu records (%zu real, %zu fake) to %s\n", corpus.size(), a.config.n_real, a.config.n_fake,
                a.out.c_str());
    if (corpus.empty() || a.config.frames < 2) return 0;

    atss::DensityStats sums[2];
    std::size_t counts[2] = {0, 0};
    for (const auto& r : corpus.records()) {
        const auto d = atss::density_statistic(atss::build_triplet(r));
        auto& s = sums[static_cast<int>(r.label)];
        s.visual += d.visual;
        s.textual += d.textual;
        s.cross += d.cross;
        ++counts[static_cast<int>(r.label)];
    }
    const char* names[2] = {"real", "fake"};
    for (int c = 0; c < 2; ++c) {
        if (!counts[c]) continue;
        const double n = static_cast<double>(counts[c]);
        std::printf("density %s: visual=%.6f textual=%.6f cross=%.6f\n", names[c], sums[c].visual / n,
                    sums[c].textual / n, sums[c].cross / n);
    }
    if (counts[0] && counts[1]) {
        const double n0 = static_cast<double>(counts[0]), n1 = static_cast<double>(counts[1]);
        std::printf("density gap (fake - real): visual=%.6f textual=%.6f cross=%.6f\n",
                    sums[1].visual / n1 - sums[0].visual / n0, sums[1].textual / n1 - sums[0].textual / n0,
                    sums[1].cross / n1 - sums[0].cross / n0);
    }
    return 0;
}

struct TrainArgs {
    std::string data;
    std::string model_out;
    std::string log_out;
    double val_frac = 0.1;
    std::uint64_t seed = 0;
    atss::EncoderConfig encoder;
    atss::TrainConfig train;
};

int run_train(TrainArgs& a) {
    a.encoder.validate();
    if (!(a.train.lr > 0.0)) throw atss::InputError("--lr must be positive");
    if (a.train.batch_size == 0) throw atss::InputError("--batch-size must be positive");
    if (!(a.train.lr_factor > 0.0 && a.train.lr_factor < 1.0)) throw atss::InputError("--lr-factor must lie in (0, 1)");
    if (!(a.val_frac > 0.0 && a.val_frac < 1.0)) throw atss::InputError("--val-frac must lie in (0, 1)");

    const auto corpus = load_corpus(a.data);
    if (corpus.empty()) throw atss::InputError("data file has no records: " + a.data);
    auto [train_set, val_set] = atss::split_train_val(corpus, a.val_frac, a.seed);
    std::printf("train %zu / val %zu records, T=%zu d=%zu\n", train_set.size(), val_set.size(), corpus.frames(),
                corpus.dim());

    auto model = atss::init_model(a.encoder, corpus.frames(), atss::derive_seed(a.seed, kInitStream));
    a.train.seed = atss::derive_seed(a.seed, kShuffleStream);
    a.train.on_epoch = [](const atss::EpochLog& e, const atss::AtssModel&) {
        std::printf("epoch %zu train_loss=%.6f val_auc=%.6f lr=%g\n", e.epoch, e.train_loss, e.val_auc, e.lr);
        std::fflush(stdout);
    };
    const auto result = atss::train(std::move(model), train_set, val_set, a.train);

    atss::save_checkpoint(result.model, a.model_out);
    if (!a.log_out.empty()) atss::io::atomic_write(a.log_out, atss::training_log_csv(result.log));
    if (result.best_val_auc) {
        std::printf("best val_auc=%.6f at epoch %zu; checkpoint written to %s\n", *result.best_val_auc,
                    result.best_epoch, a.model_out.c_str());
    } else {
        std::printf("no epochs run; initial checkpoint written to %s\n", a.model_out.c_str());
    }
    return 0;
}

struct EvalArgs {
    std::string data;
    std::string model;
    std::string report;
    std::string subset = "all";
    double val_frac = 0.1;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
};

int run_eval(const EvalArgs& a) {
    auto corpus = load_corpus(a.data);
    const auto model = load_model(a.model);
    if (a.subset != "all") {
        auto [train_set, val_set] = atss::split_train_val(corpus, a.val_frac, a.seed);
        corpus = a.subset == "train" ? std::move(train_set) : std::move(val_set);
    }
    const auto report = atss::evaluate(model, corpus, a.threads);
    const auto json = atss::report_to_json(report);
    if (a.report.empty()) {
        std::printf("%s\n", json.c_str());
    } else {
        atss::io::atomic_write(a.report, json + "\n");
        std::printf("report written to %s\n", a.report.c_str());
    }
    return 0;
}

struct DumpArgs {
    std::string data;
    std::string model;
    std::string video_id;
    std::string out;
};

int run_simmat(const DumpArgs& a) {
    const auto corpus = load_corpus(a.data);
    atss::export_triplet_csv(atss::build_triplet(find_video(corpus, a.video_id)), a.out);
    return 0;
}

int run_attn(const DumpArgs& a) {
    const auto corpus = load_corpus(a.data);
    const auto model = load_model(a.model);
    const auto triplet = atss::build_triplet(find_video(corpus, a.video_id));
    atss::io::atomic_write(a.out, atss::attention_to_csv(atss::export_attention_density(model, triplet)));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ATSS detector: temporal self-similarity features, training and evaluation"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* cmd_synth = app.add_subcommand("synth", "Generate a synthetic real/fake embedding corpus");
    cmd_synth->add_option("--out", synth.out, "Output corpus file")->required();
    cmd_synth->add_option("--n-real", synth.config.n_real, "Number of real-like videos")->capture_default_str();
    cmd_synth->add_option("--n-fake", synth.config.n_fake, "Number of fake-like videos")->capture_default_str();
    cmd_synth->add_option("--T", synth.config.frames, "Frames per video")->capture_default_str();
    cmd_synth->add_option("--d", synth.config.dim, "Embedding dimension")->capture_default_str();
    cmd_synth->add_option("--alpha", synth.config.alpha, "Anchor strength for fake videos")->capture_default_str();
    cmd_synth->add_option("--sigma-real", synth.config.sigma_real, "Random-walk step scale")->capture_default_str();
    cmd_synth->add_option("--sigma-fake", synth.config.sigma_fake, "Residual noise scale")->capture_default_str();
    cmd_synth->add_option("--rho-cross", synth.config.rho_cross, "Visual/textual coupling")->capture_default_str();
    cmd_synth->add_option("--seed", synth.config.seed, "Random seed")->capture_default_str();

    TrainArgs tr;
    auto* cmd_train = app.add_subcommand("train", "Train on a corpus and save the best checkpoint");
    cmd_train->add_option("--data", tr.data, "Corpus file")->required();
    cmd_train->add_option("--model-out", tr.model_out, "Checkpoint output path")->required();
    cmd_train->add_option("--log-out", tr.log_out, "Per-epoch CSV log path");
    cmd_train->add_option("--val-frac", tr.val_frac, "Validation fraction")->capture_default_str();
    cmd_train->add_option("--epochs", tr.train.epochs, "Training epochs")->capture_default_str();
    cmd_train->add_option("--lr", tr.train.lr, "Initial learning rate")->capture_default_str();
    cmd_train->add_option("--batch-size", tr.train.batch_size, "Minibatch size")->capture_default_str();
    cmd_train->add_option("--lr-factor", tr.train.lr_factor, "Plateau reduction factor")->capture_default_str();
    cmd_train->add_option("--patience", tr.train.patience, "Plateau patience in epochs")->capture_default_str();
    cmd_train->add_option("--d-model", tr.encoder.d_model, "Encoder width")->capture_default_str();
    cmd_train->add_option("--layers", tr.encoder.n_layers, "Encoder layers")->capture_default_str();
    cmd_train->add_option("--heads", tr.encoder.n_heads, "Attention heads")->capture_default_str();
    cmd_train->add_option("--d-ff", tr.encoder.d_ff, "Feed-forward width")->capture_default_str();
    cmd_train->add_option("--seed", tr.seed, "Random seed")->capture_default_str();
    cmd_train->add_option("--threads", tr.train.threads, "Worker threads for similarity/validation")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    EvalArgs ev;
    auto* cmd_eval = app.add_subcommand("eval", "Evaluate a checkpoint and print a JSON metrics report");
    cmd_eval->add_option("--data", ev.data, "Corpus file")->required();
    cmd_eval->add_option("--model", ev.model, "Checkpoint file")->required();
    cmd_eval->add_option("--report", ev.report, "Write the JSON report here instead of stdout");
    cmd_eval->add_option("--subset", ev.subset, "Records to score: all, train or val")
        ->check(CLI::IsMember({"all", "train", "val"}))
        ->capture_default_str();
    cmd_eval->add_option("--val-frac", ev.val_frac, "Validation fraction used for --subset")->capture_default_str();
    cmd_eval->add_option("--seed", ev.seed, "Seed used for --subset")->capture_default_str();
    cmd_eval->add_option("--threads", ev.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();

    DumpArgs sm;
    auto* cmd_simmat = app.add_subcommand("simmat", "Dump one video's similarity matrices as CSV");
    cmd_simmat->add_option("--data", sm.data, "Corpus file")->required();
    cmd_simmat->add_option("--video-id", sm.video_id, "Video id")->required();
    cmd_simmat->add_option("--out", sm.out, "CSV output path")->required();

    DumpArgs at;
    auto* cmd_attn = app.add_subcommand("attn", "Dump head-averaged encoder attention for one video as CSV");
    cmd_attn->add_option("--data", at.data, "Corpus file")->required();
    cmd_attn->add_option("--model", at.model, "Checkpoint file")->required();
    cmd_attn->add_option("--video-id", at.video_id, "Video id")->required();
    cmd_attn->add_option("--out", at.out, "CSV output path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*cmd_synth) return run_synth(synth);
        if (*cmd_train) return run_train(tr);
        if (*cmd_eval) return run_eval(ev);
        if (*cmd_simmat) return run_simmat(sm);
        if (*cmd_attn) return run_attn(at);
    } catch (const atss::InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
    return kExitInternal;
}
