#pragma once

// Dual 1-D residual convolutional encoders, contrastive alignment head,
// temporal cross-attention integrator, gated feature refinement, and task
// decoder heads. Parameters are autodiff leaf nodes; forward passes build
// eager graphs over them.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "neuroclip/autodiff.hpp"
#include "neuroclip/dataset.hpp"
#include "neuroclip/matrix.hpp"

namespace neuroclip::model {

using ad::NodePtr;

struct ModelDims {
    std::size_t eeg_channels = 4;
    std::size_t fnirs_channels = 6;
    std::size_t embed_dim = 32;  // D
    std::size_t stem_width = 16;
    std::size_t block_widths_1 = 16;
    std::size_t block_widths_2 = 32;
    std::size_t block_widths_3 = 32;
    std::size_t n_heads = 4;
};

struct Conv1dLayer {
    NodePtr w;  // [C_out x C_in x K]
    NodePtr b;  // [C_out x 1]
    std::size_t stride = 1;
    std::size_t padding = 1;
};

struct ResidualBlock {
    Conv1dLayer c1, c2;
    Conv1dLayer proj;  // 1x1 shortcut; empty (null w) when channels match
    bool has_proj = false;
};

struct EncoderParams {
    Conv1dLayer stem;  // kernel 7, stride 2
    ResidualBlock b1, b2, b3;
    NodePtr token_w, token_b;  // lift final activations to D per time step
    NodePtr pool_w, pool_b;    // project temporal mean to D
    std::size_t in_channels = 0;
};

struct AlignmentHead {
    NodePtr tau;   // alpha = exp(tau)
    NodePtr beta;  // scalar bias
};

struct IntegratorParams {
    std::vector<NodePtr> wq, wk, wv;  // per head, [D x d_k]
    NodePtr wo;                       // [D x D]
    std::size_t n_heads = 4;
};

struct GatingParams {
    NodePtr w, v;  // [D x D]
};

struct DecoderHead {
    NodePtr w1, b1, w2, b2;  // D -> D -> n_classes, GELU between
    std::size_t n_classes = 2;
};

struct ModelParams {
    // Parameters are shared-pointer leaves; copying would alias them.
    ModelParams() = default;
    ModelParams(const ModelParams&) = delete;
    ModelParams& operator=(const ModelParams&) = delete;
    ModelParams(ModelParams&&) = default;
    ModelParams& operator=(ModelParams&&) = default;

    ModelDims dims;
    EncoderParams eeg_enc, fnirs_enc;
    AlignmentHead align;
    IntegratorParams integrator;
    GatingParams gating;
    std::map<std::string, DecoderHead> heads;

    // Registration order is the checkpoint order.
    std::vector<std::pair<std::string, NodePtr>> named_params;

    std::vector<NodePtr> all_params() const;
    std::vector<NodePtr> encoder_params() const;   // both encoders
    std::vector<NodePtr> fusion_params() const;    // integrator + gating
    std::vector<NodePtr> head_params(const std::string& head_id) const;
    const DecoderHead& head(const std::string& head_id) const;
    void zero_all_grads() const;
};

ModelParams make_model(const ModelDims& dims, std::uint64_t seed);
void add_head(ModelParams& m, const std::string& head_id, std::size_t n_classes,
              std::uint64_t seed);

struct EncodeOut {
    NodePtr activations;  // final conv-stack output [N_K x T'], the saliency tap
    NodePtr tokens;       // [T' x D]
    NodePtr pooled;       // [1 x D], L2-normalized
    NodePtr pooled_raw;   // [1 x D], before normalization
};

enum class Modality { eeg, fnirs };

EncodeOut encode(const EncoderParams& enc, const Matrix& epoch);

// S = exp(tau) * Xf Xe^T + beta. Rows of both inputs must be unit-norm.
NodePtr similarity_logits(const NodePtr& eeg_embeds, const NodePtr& fnirs_embeds,
                          const AlignmentHead& head);
NodePtr contrastive_loss(const NodePtr& similarity);

NodePtr cross_attention_fuse(const NodePtr& eeg_tokens, const NodePtr& fnirs_tokens,
                             const IntegratorParams& p);
NodePtr roi_gated_refine(const NodePtr& fused, const GatingParams& g);

struct ForwardOut {
    NodePtr logits;       // [1 x n_classes]
    NodePtr activations;  // encoder tap of the modality driving the decode
};

ForwardOut forward_full(const ModelParams& m, const MultimodalEpoch& epoch,
                        const std::string& head_id);
ForwardOut forward_unimodal(const ModelParams& m, const Matrix& epoch, Modality mod,
                            const std::string& head_id);
// Gated embedding (temporal mean of the refined fused representation), [1 x D].
NodePtr fused_embedding(const ModelParams& m, const MultimodalEpoch& epoch);

void save_checkpoint(const ModelParams& m, const std::string& dir);
ModelParams load_checkpoint(const std::string& dir);

ad::Tensor tensor_from(const Matrix& m);

}  // namespace neuroclip::model
