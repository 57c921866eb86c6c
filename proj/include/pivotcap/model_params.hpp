#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pivotcap/model_config.hpp"

namespace pivotcap {

// Biases and layer-norm vectors are stored 1 x d so every tensor is a matrix.
struct AttentionWeights {
    Eigen::MatrixXf wq, wk, wv, wo;
    Eigen::MatrixXf bq, bk, bv, bo;
};

struct LayerNormWeights {
    Eigen::MatrixXf gain, bias;
};

struct FfnWeights {
    Eigen::MatrixXf w1, b1, w2, b2;
};

struct EncoderLayerParams {
    AttentionWeights attn;
    Eigen::MatrixXf mem_k, mem_v; // memory slots, appended to keys/values
    LayerNormWeights ln1, ln2;
    FfnWeights ffn;
};

struct DecoderLayerParams {
    AttentionWeights self_attn;
    AttentionWeights cross_attn;
    LayerNormWeights ln1, ln2, ln3;
    FfnWeights ffn;
};

struct ModelParams {
    ModelConfig config;
    Eigen::MatrixXf token_embedding;     // vocab x d
    Eigen::MatrixXf indicator_embedding; // 2 x d
    Eigen::MatrixXf visual_w, visual_b;  // d_v x d, 1 x d
    std::vector<EncoderLayerParams> encoder;
    std::vector<DecoderLayerParams> decoder;
    LayerNormWeights enc_final_ln;
    LayerNormWeights final_ln;
    Eigen::MatrixXf out_w, out_b; // d x vocab, 1 x vocab

    // visits every learnable tensor in a fixed canonical order
    void for_each_tensor(const std::function<void(const std::string&, Eigen::MatrixXf&)>& fn);
    void for_each_tensor(
        const std::function<void(const std::string&, const Eigen::MatrixXf&)>& fn) const;

    std::uint64_t actual_param_count() const;
};

// Uniform fan-based init for weights and embeddings, zeros for biases, ones
// for layer-norm gains; residual-writing projections (attention output, ffn
// second layer) are additionally scaled by 1/sqrt(2 * total layers).
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

// Archive: magic, config document, then named float32 tensors. Loading is
// exact (bitwise) and validates shapes against the stored config.
void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);

} // namespace pivotcap
