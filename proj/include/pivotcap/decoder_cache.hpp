#pragma once

#include <vector>

#include <Eigen/Dense>

#include "pivotcap/bpe.hpp"
#include "pivotcap/model_params.hpp"

namespace pivotcap {

// Gradient-free encoder forward (n_regions x d_v -> n_regions x d_model).
Eigen::MatrixXf encode_features(const ModelParams& params, const Eigen::MatrixXf& visual);

// Incremental decoding state. init() runs the encoder and pushes the prompt
// (keywords + indicator) through the decoder as one block, because keywords
// attend each other bidirectionally and cannot be fed one at a time. Each
// layer caches self-attention keys/values (growing) and the projected
// encoder keys/values (fixed). step() appends one caption token and returns
// next-token logits. Copyable so beam search can fork a state per beam.
class DecoderCache {
public:
    explicit DecoderCache(const ModelParams& params) : p_(&params) {}

    void init(const Eigen::MatrixXf& visual, const TokenSequence& keyword_tokens,
              int indicator_index);
    Eigen::RowVectorXf step(TokenId token);

    int caption_length() const { return cap_len_; }
    bool ready() const { return ready_; }

private:
    const ModelParams* p_;
    bool ready_ = false;
    int cap_len_ = 0;
    std::vector<Eigen::MatrixXf> self_k_, self_v_;   // per decoder layer, rows grow
    std::vector<Eigen::MatrixXf> cross_k_, cross_v_; // per decoder layer, fixed
};

} // namespace pivotcap
