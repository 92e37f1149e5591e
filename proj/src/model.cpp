#include "atss/model.hpp"

#include "atss/binary_io.hpp"
#include "atss/csv.hpp"
#include "atss/error.hpp"

#include <cmath>
#include <cstring>
#include <limits>

namespace atss {

using nd::Tape;
using nd::Tensor;

const char* branch_name(Branch b) {
    switch (b) {
        case Branch::visual: return "visual";
        case Branch::textual: return "textual";
        case Branch::cross: return "cross";
    }
    return "?";
}

void EncoderConfig::validate() const {
    if (n_layers == 0 || n_heads == 0 || d_model == 0 || d_ff == 0) {
        throw InputError("encoder config values must all be positive");
    }
    if (d_model % n_heads != 0) {
        throw InputError("d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                         std::to_string(n_heads));
    }
}

namespace {

constexpr const char* kBranchTag[3] = {"v", "t", "c"};
constexpr const char* kFusionTag[3] = {"t2v", "v2t", "c"};

template <typename L, typename F>
void visit_linear(const std::string& prefix, L& layer, F& f) {
    f(prefix + ".weight", layer.weight);
    f(prefix + ".bias", layer.bias);
}

template <typename N, typename F>
void visit_norm(const std::string& prefix, N& norm, F& f) {
    f(prefix + ".gamma", norm.gamma);
    f(prefix + ".beta", norm.beta);
}

template <typename A, typename F>
void visit_attention(const std::string& prefix, A& attn, F& f) {
    visit_linear(prefix + ".query", attn.query, f);
    visit_linear(prefix + ".key", attn.key, f);
    visit_linear(prefix + ".value", attn.value, f);
    visit_linear(prefix + ".output", attn.output, f);
}

template <typename M, typename F>
void visit_model(M& m, F& f) {
    for (std::size_t b = 0; b < 3; ++b) {
        const std::string base = std::string("encoder.") + kBranchTag[b];
        auto& enc = m.encoders[b];
        visit_linear(base + ".input_proj", enc.input_proj, f);
        for (std::size_t l = 0; l < enc.layers.size(); ++l) {
            const std::string lp = base + ".layer" + std::to_string(l);
            auto& layer = enc.layers[l];
            visit_attention(lp + ".attn", layer.attention, f);
            visit_norm(lp + ".norm1", layer.norm1, f);
            visit_linear(lp + ".ff1", layer.ff1, f);
            visit_linear(lp + ".ff2", layer.ff2, f);
            visit_norm(lp + ".norm2", layer.norm2, f);
        }
    }
    for (std::size_t s = 0; s < 3; ++s) {
        const std::string base = std::string("fusion.") + kFusionTag[s];
        visit_attention(base + ".attn", m.fusion[s].attention, f);
        visit_norm(base + ".norm", m.fusion[s].norm, f);
    }
    visit_linear("head.hidden", m.head_hidden, f);
    visit_linear("head.out", m.head_out, f);
}

nd::Linear zero_linear(std::size_t in, std::size_t out) {
    return {Tensor::zeros({in, out}, true), Tensor::zeros({out}, true)};
}

nd::AttentionParams zero_attention(std::size_t dm, std::size_t heads) {
    return {zero_linear(dm, dm), zero_linear(dm, dm), zero_linear(dm, dm), zero_linear(dm, dm), heads};
}

/// Allocates every parameter with weights zero, biases zero, gains one.
AtssModel skeleton(const EncoderConfig& cfg, std::size_t frames) {
    cfg.validate();
    if (frames == 0) throw InputError("frame count must be positive");
    AtssModel m;
    m.config = cfg;
    m.frames = frames;
    for (auto& enc : m.encoders) {
        enc.input_proj = zero_linear(frames, cfg.d_model);
        for (std::size_t l = 0; l < cfg.n_layers; ++l) {
            enc.layers.push_back({zero_attention(cfg.d_model, cfg.n_heads), nd::unit_layer_norm(cfg.d_model),
                                  zero_linear(cfg.d_model, cfg.d_ff), zero_linear(cfg.d_ff, cfg.d_model),
                                  nd::unit_layer_norm(cfg.d_model)});
        }
    }
    for (auto& block : m.fusion) {
        block = {zero_attention(cfg.d_model, cfg.n_heads), nd::unit_layer_norm(cfg.d_model)};
    }
    m.head_hidden = zero_linear(3 * cfg.d_model, cfg.d_model);
    m.head_out = zero_linear(cfg.d_model, 2);
    return m;
}

bool ends_with(const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

void AtssModel::for_each_parameter(const std::function<void(const std::string&, nd::Tensor&)>& fn) {
    visit_model(*this, fn);
}

void AtssModel::for_each_parameter(const std::function<void(const std::string&, const nd::Tensor&)>& fn) const {
    visit_model(*this, fn);
}

std::size_t AtssModel::parameter_count() const {
    std::size_t n = 0;
    for_each_parameter([&](const std::string&, const Tensor& t) { n += t.size(); });
    return n;
}

void AtssModel::zero_grad() {
    for_each_parameter([](const std::string&, Tensor& t) { t.zero_grad(); });
}

AtssModel AtssModel::clone() const {
    AtssModel copy = *this;
    copy.for_each_parameter([](const std::string&, Tensor& t) { t = t.clone(); });
    return copy;
}

bool AtssModel::same_parameters(const AtssModel& other) const {
    if (config != other.config || frames != other.frames) return false;
    std::vector<std::span<const double>> mine, theirs;
    for_each_parameter([&](const std::string&, const Tensor& t) { mine.push_back(t.value()); });
    other.for_each_parameter([&](const std::string&, const Tensor& t) { theirs.push_back(t.value()); });
    if (mine.size() != theirs.size()) return false;
    for (std::size_t i = 0; i < mine.size(); ++i) {
        if (mine[i].size() != theirs[i].size() ||
            std::memcmp(mine[i].data(), theirs[i].data(), mine[i].size_bytes()) != 0) {
            return false;
        }
    }
    return true;
}

AtssModel init_model(const EncoderConfig& config, std::size_t frames, std::uint64_t seed) {
    auto model = skeleton(config, frames);
    Rng rng(seed);
    model.for_each_parameter([&](const std::string& name, Tensor& t) {
        if (!ends_with(name, ".weight")) return;
        const double limit = std::sqrt(6.0 / static_cast<double>(t.dim(0) + t.dim(1)));
        for (auto& w : t.mutable_value()) w = rng.uniform(-limit, limit);
    });
    return model;
}

Tensor encode_branch(Tape& tape, const AtssModel& model, Branch branch, const Matrix& s,
                     std::vector<Matrix>* attention) {
    const std::size_t n = model.frames;
    if (s.rows != n || s.cols != n) {
        throw ShapeError("encode_branch: expected a " + std::to_string(n) + "x" + std::to_string(n) +
                         " similarity matrix, got " + std::to_string(s.rows) + "x" + std::to_string(s.cols));
    }
    const auto& enc = model.encoders[static_cast<std::size_t>(branch)];
    auto h = nd::linear(tape, Tensor::from({n, n}, s.data), enc.input_proj);
    for (std::size_t l = 0; l < enc.layers.size(); ++l) {
        const auto& layer = enc.layers[l];
        const bool last = l + 1 == enc.layers.size();
        auto a = nd::multi_head_attention(tape, h, h, h, layer.attention, last ? attention : nullptr);
        h = nd::layer_norm(tape, nd::add(tape, h, a), layer.norm1);
        auto f = nd::linear(tape, nd::relu(tape, nd::linear(tape, h, layer.ff1)), layer.ff2);
        h = nd::layer_norm(tape, nd::add(tape, h, f), layer.norm2);
    }
    return h;
}

FusedFeatures fuse(Tape& tape, const AtssModel& model, const Tensor& h_v, const Tensor& h_t, const Tensor& h_c) {
    const nd::Shape expected{model.frames, model.config.d_model};
    for (const Tensor* h : {&h_v, &h_t, &h_c}) {
        if (h->shape() != expected) {
            throw ShapeError("fuse: branch features must be " + nd::to_string(expected) + ", got " +
                             nd::to_string(h->shape()));
        }
    }
    auto block = [&](FusionSlot slot, const Tensor& query, const Tensor& context) {
        const auto& b = model.fusion[static_cast<std::size_t>(slot)];
        auto attended = nd::multi_head_attention(tape, query, context, context, b.attention);
        return nd::layer_norm(tape, nd::add(tape, query, attended), b.norm);
    };
    const auto stacked = nd::concat_rows(tape, h_v, h_t);

    FusedFeatures out;
    out.pooled[0] = nd::mean_pool_rows(tape, block(FusionSlot::text_to_visual, h_v, h_t));
    out.pooled[1] = nd::mean_pool_rows(tape, block(FusionSlot::visual_to_text, h_t, h_v));
    out.pooled[2] = nd::mean_pool_rows(tape, block(FusionSlot::cross, h_c, stacked));
    out.z = nd::concat_channels(tape, out.pooled);
    return out;
}

Tensor forward_probs(Tape& tape, const AtssModel& model, const SimilarityTriplet& triplet) {
    if (triplet.frames() != model.frames) {
        throw ShapeError("forward: triplet has T=" + std::to_string(triplet.frames()) + ", model expects T=" +
                         std::to_string(model.frames));
    }
    auto h_v = encode_branch(tape, model, Branch::visual, triplet.visual);
    auto h_t = encode_branch(tape, model, Branch::textual, triplet.textual);
    auto h_c = encode_branch(tape, model, Branch::cross, triplet.cross);
    auto fused = fuse(tape, model, h_v, h_t, h_c);

    auto z = nd::reshape(tape, fused.z, {1, fused.z.size()});
    auto hidden = nd::relu(tape, nd::linear(tape, z, model.head_hidden));
    auto logits = nd::linear(tape, hidden, model.head_out);
    return nd::reshape(tape, nd::softmax_rows(tape, logits), {2});
}

Prediction forward(const AtssModel& model, const SimilarityTriplet& triplet) {
    Tape tape(false);
    auto probs = forward_probs(tape, model, triplet);
    return {probs.value()[0], probs.value()[1]};
}

Tensor loss(Tape& tape, const Tensor& probs, int label) { return nd::cross_entropy(tape, probs, label); }

std::array<BranchAttention, 3> export_attention_density(const AtssModel& model, const SimilarityTriplet& triplet) {
    if (triplet.frames() != model.frames) throw ShapeError("attention export: triplet T does not match model");
    const Matrix* mats[3] = {&triplet.visual, &triplet.textual, &triplet.cross};
    std::array<BranchAttention, 3> out;
    const std::size_t n = model.frames;
    for (auto b : kBranches) {
        const auto idx = static_cast<std::size_t>(b);
        Tape tape(false);
        std::vector<Matrix> heads;
        encode_branch(tape, model, b, *mats[idx], &heads);

        Matrix mean(n, n);
        for (const auto& h : heads)
            for (std::size_t k = 0; k < mean.data.size(); ++k) mean.data[k] += h.data[k];
        for (auto& v : mean.data) v /= static_cast<double>(heads.size());

        std::vector<double> density(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) density[j] += mean(i, j);
        for (auto& v : density) v /= static_cast<double>(n);
        out[idx] = {std::move(mean), std::move(density)};
    }
    return out;
}

std::string attention_to_csv(const std::array<BranchAttention, 3>& attention) {
    constexpr const char* kTag[3] = {"VISUAL", "TEXTUAL", "CROSS"};
    std::string out;
    for (std::size_t b = 0; b < 3; ++b) {
        csv::append_block(out, std::string("ATTN_") + kTag[b], attention[b].head_mean);
        Matrix row(1, attention[b].density.size());
        row.data = attention[b].density;
        csv::append_block(out, std::string("DENSITY_") + kTag[b], row);
    }
    return out;
}

namespace {

constexpr std::uint8_t kCheckpointMagic[4] = {'A', 'T', 'S', 'M'};
constexpr std::uint16_t kCheckpointVersion = 1;

template <typename T>
T narrow(std::size_t v, const char* field) {
    if (v > std::numeric_limits<T>::max()) throw InputError(std::string("checkpoint field overflow: ") + field);
    return static_cast<T>(v);
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const AtssModel& model) {
    io::ByteWriter w;
    for (auto b : kCheckpointMagic) w.u8(b);
    w.u16(kCheckpointVersion);
    w.u16(narrow<std::uint16_t>(model.frames, "T"));
    w.u32(narrow<std::uint32_t>(model.config.d_model, "d_model"));
    w.u16(narrow<std::uint16_t>(model.config.n_layers, "n_layers"));
    w.u16(narrow<std::uint16_t>(model.config.n_heads, "n_heads"));
    w.u32(narrow<std::uint32_t>(model.config.d_ff, "d_ff"));
    model.for_each_parameter([&](const std::string& name, const Tensor& t) {
        w.u16(narrow<std::uint16_t>(name.size(), "name"));
        w.bytes(name);
        w.u8(static_cast<std::uint8_t>(t.rank()));
        for (auto d : t.shape()) w.u32(narrow<std::uint32_t>(d, "dim"));
        for (double v : t.value()) w.f64(v);
    });
    return w.data();
}

AtssModel decode_checkpoint(std::span<const std::uint8_t> bytes) {
    io::ByteReader in(bytes);
    try {
        for (auto b : kCheckpointMagic) {
            if (in.u8() != b) throw InputError("checkpoint: bad magic");
        }
        const auto version = in.u16();
        if (version != kCheckpointVersion) {
            throw InputError("checkpoint: unsupported version " + std::to_string(version));
        }
        EncoderConfig cfg;
        const std::size_t frames = in.u16();
        cfg.d_model = in.u32();
        cfg.n_layers = in.u16();
        cfg.n_heads = in.u16();
        cfg.d_ff = in.u32();
        auto model = skeleton(cfg, frames);
        model.for_each_parameter([&](const std::string& name, Tensor& t) {
            const auto stored = in.bytes(in.u16());
            if (stored != name) throw InputError("checkpoint: expected parameter '" + name + "', found '" + stored + "'");
            const std::size_t rank = in.u8();
            nd::Shape shape(rank);
            for (auto& d : shape) d = in.u32();
            if (shape != t.shape()) {
                throw InputError("checkpoint: parameter '" + name + "' has shape " + nd::to_string(shape) +
                                 ", expected " + nd::to_string(t.shape()));
            }
            for (auto& v : t.mutable_value()) v = in.f64();
            nd::require_finite(t.value(), "checkpoint parameter");
        });
        if (!in.at_end()) throw InputError("checkpoint: trailing bytes after last parameter");
        return model;
    } catch (const io::TruncatedInput&) {
        throw InputError("checkpoint: truncated file");
    } catch (const NumericError& e) {
        throw InputError(std::string("checkpoint: ") + e.what());
    }
}

void save_checkpoint(const AtssModel& model, const std::filesystem::path& path) {
    io::atomic_write(path, encode_checkpoint(model));
}

AtssModel load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

}  // namespace atss
