#pragma once

#include "atss/matrix.hpp"
#include "atss/nd/layers.hpp"
#include "atss/simlat.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace atss {

/// Similarity branches, in the order their encoders are stored.
enum class Branch { visual = 0, textual = 1, cross = 2 };
inline constexpr std::array<Branch, 3> kBranches = {Branch::visual, Branch::textual, Branch::cross};
const char* branch_name(Branch b);

/// Width and depth of each branch encoder. Fusion blocks reuse n_heads.
struct EncoderConfig {
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    std::size_t d_model = 32;
    std::size_t d_ff = 32;

    void validate() const;
    bool operator==(const EncoderConfig&) const = default;
};

/// Post-norm Transformer encoder layer:
///   x = norm1(x + attn(x, x, x));  x = norm2(x + ff2(relu(ff1(x))))
struct EncoderLayer {
    nd::AttentionParams attention;
    nd::LayerNormParams norm1;
    nd::Linear ff1;
    nd::Linear ff2;
    nd::LayerNormParams norm2;
};

/// Token projection T -> d_model followed by the layer stack.
struct BranchEncoder {
    nd::Linear input_proj;
    std::vector<EncoderLayer> layers;
};

/// norm(query + attn(query, context, context))
struct CrossBlock {
    nd::AttentionParams attention;
    nd::LayerNormParams norm;
};

enum class FusionSlot { text_to_visual = 0, visual_to_text = 1, cross = 2 };

/// All learnable state of the detector.
///
/// Parameters are visited, initialised and serialised in one fixed order:
///   encoder.{v,t,c}.input_proj.{weight,bias}
///   encoder.{v,t,c}.layer<i>.{attn.{query,key,value,output},norm1,ff1,ff2,norm2}
///   fusion.{t2v,v2t,c}.{attn.{query,key,value,output},norm}
///   head.hidden, head.out
/// where a linear contributes .weight then .bias, a norm .gamma then .beta.
struct AtssModel {
    EncoderConfig config;
    std::size_t frames = 0;
    std::array<BranchEncoder, 3> encoders;
    std::array<CrossBlock, 3> fusion;
    nd::Linear head_hidden;  // 3*d_model -> d_model
    nd::Linear head_out;     // d_model -> 2

    void for_each_parameter(const std::function<void(const std::string&, nd::Tensor&)>& fn);
    void for_each_parameter(const std::function<void(const std::string&, const nd::Tensor&)>& fn) const;

    std::size_t parameter_count() const;
    void zero_grad();
    /// Deep copy; the result shares no storage with *this.
    AtssModel clone() const;
    /// True when every parameter holds bitwise-identical values.
    bool same_parameters(const AtssModel& other) const;
};

/// Builds a model with Xavier-uniform weights, zero biases, unit norm gains.
AtssModel init_model(const EncoderConfig& config, std::size_t frames, std::uint64_t seed);

struct Prediction {
    double p_real = 0.5;
    double p_fake = 0.5;
};

/// H = encoder_b(input_proj_b(s)), shape [T, d_model]. When `attention` is
/// non-null it receives the per-head attention matrices of the last layer.
nd::Tensor encode_branch(nd::Tape& tape, const AtssModel& model, Branch branch, const Matrix& s,
                         std::vector<Matrix>* attention = nullptr);

struct FusedFeatures {
    std::array<nd::Tensor, 3> pooled;  // indexed by FusionSlot, each [d_model]
    nd::Tensor z;                      // [3*d_model], pooled parts in slot order
};

/// Cross-attentive fusion: text->visual, visual->text, and cross over the
/// stacked [h_v; h_t] context of length 2T; each mean-pooled over time.
FusedFeatures fuse(nd::Tape& tape, const AtssModel& model, const nd::Tensor& h_v, const nd::Tensor& h_t,
                   const nd::Tensor& h_c);

/// Full pipeline to the two-class distribution [p_real, p_fake].
nd::Tensor forward_probs(nd::Tape& tape, const AtssModel& model, const SimilarityTriplet& triplet);

/// Inference convenience; records nothing.
Prediction forward(const AtssModel& model, const SimilarityTriplet& triplet);

/// Cross-entropy of [p_real, p_fake] against a 0/1 label.
nd::Tensor loss(nd::Tape& tape, const nd::Tensor& probs, int label);

struct BranchAttention {
    Matrix head_mean;              // [T, T], mean over heads of the last encoder layer
    std::vector<double> density;   // [T], column means of head_mean
};

std::array<BranchAttention, 3> export_attention_density(const AtssModel& model, const SimilarityTriplet& triplet);
std::string attention_to_csv(const std::array<BranchAttention, 3>& attention);

std::vector<std::uint8_t> encode_checkpoint(const AtssModel& model);
AtssModel decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const AtssModel& model, const std::filesystem::path& path);
AtssModel load_checkpoint(const std::filesystem::path& path);

}  // namespace atss
