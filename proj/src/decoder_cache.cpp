#include "pivotcap/decoder_cache.hpp"

#include <cmath>

#include "pivotcap/error.hpp"
#include "pivotcap/net.hpp"

namespace pivotcap {

namespace {

Eigen::MatrixXf linear(const Eigen::MatrixXf& x, const Eigen::MatrixXf& w,
                       const Eigen::MatrixXf& b) {
    return (x * w).rowwise() + b.row(0);
}

Eigen::MatrixXf layer_norm(const Eigen::MatrixXf& x, const LayerNormWeights& ln) {
    constexpr float eps = 1e-5f;
    Eigen::MatrixXf y(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const float mean = x.row(r).mean();
        const float var = (x.row(r).array() - mean).square().mean();
        const float inv = 1.0f / std::sqrt(var + eps);
        y.row(r) = ((x.row(r).array() - mean) * inv) * ln.gain.row(0).array() +
                   ln.bias.row(0).array();
    }
    return y;
}

Eigen::MatrixXf gelu(const Eigen::MatrixXf& x) {
    return x.unaryExpr([](float v) { return 0.5f * v * (1.0f + std::erf(v * 0.7071067811865475f)); });
}

Eigen::MatrixXf ffn(const Eigen::MatrixXf& x, const FfnWeights& f) {
    return linear(gelu(linear(x, f.w1, f.b1)), f.w2, f.b2);
}

// Per-head scaled dot-product attention; caller applies the output
// projection. bias, when present, is an additive S_q x S_k matrix.
Eigen::MatrixXf mha(const Eigen::MatrixXf& q, const Eigen::MatrixXf& k,
                    const Eigen::MatrixXf& v, int heads, const Eigen::MatrixXf* bias) {
    const Eigen::Index dh = q.cols() / heads;
    const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(dh));
    Eigen::MatrixXf out(q.rows(), q.cols());
    for (int h = 0; h < heads; ++h) {
        Eigen::MatrixXf scores =
            q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose() * inv_sqrt;
        if (bias) scores += *bias;
        for (Eigen::Index r = 0; r < scores.rows(); ++r) {
            const float mx = scores.row(r).maxCoeff();
            Eigen::ArrayXf e = (scores.row(r).array() - mx).exp();
            scores.row(r) = e / e.sum();
        }
        out.middleCols(h * dh, dh) = scores * v.middleCols(h * dh, dh);
    }
    return out;
}

Eigen::MatrixXf with_memory(const Eigen::MatrixXf& proj, const Eigen::MatrixXf& mem) {
    if (mem.rows() == 0) return proj;
    Eigen::MatrixXf joined(proj.rows() + mem.rows(), proj.cols());
    joined << proj, mem;
    return joined;
}

Eigen::MatrixXf prompt_bias(int n_keywords) {
    const int size = n_keywords + 1;
    Eigen::MatrixXf bias = Eigen::MatrixXf::Constant(size, size, -1e9f);
    bias.topLeftCorner(n_keywords, n_keywords).setZero();
    bias.row(n_keywords).setZero();
    return bias;
}

} // namespace

Eigen::MatrixXf encode_features(const ModelParams& params, const Eigen::MatrixXf& visual) {
    const ModelConfig& cfg = params.config;
    if (visual.rows() < 1)
        throw_error(ErrorCategory::argument, "visual features need at least one region");
    if (visual.cols() != cfg.d_v)
        throw_error(ErrorCategory::argument,
                    "visual feature dim " + std::to_string(visual.cols()) +
                        " does not match d_v " + std::to_string(cfg.d_v));
    Eigen::MatrixXf x = linear(visual, params.visual_w, params.visual_b);
    if (cfg.visual_pos_encoding)
        x += sinusoidal_positions(static_cast<int>(visual.rows()), cfg.d_model).cast<float>();
    for (const EncoderLayerParams& layer : params.encoder) {
        if (cfg.pre_norm) {
            Eigen::MatrixXf n1 = layer_norm(x, layer.ln1);
            Eigen::MatrixXf k = with_memory(linear(n1, layer.attn.wk, layer.attn.bk), layer.mem_k);
            Eigen::MatrixXf v = with_memory(linear(n1, layer.attn.wv, layer.attn.bv), layer.mem_v);
            Eigen::MatrixXf a =
                mha(linear(n1, layer.attn.wq, layer.attn.bq), k, v, cfg.heads, nullptr);
            x += linear(a, layer.attn.wo, layer.attn.bo);
            x += ffn(layer_norm(x, layer.ln2), layer.ffn);
        } else {
            Eigen::MatrixXf k = with_memory(linear(x, layer.attn.wk, layer.attn.bk), layer.mem_k);
            Eigen::MatrixXf v = with_memory(linear(x, layer.attn.wv, layer.attn.bv), layer.mem_v);
            Eigen::MatrixXf a =
                mha(linear(x, layer.attn.wq, layer.attn.bq), k, v, cfg.heads, nullptr);
            x = layer_norm(x + linear(a, layer.attn.wo, layer.attn.bo), layer.ln1);
            x = layer_norm(x + ffn(x, layer.ffn), layer.ln2);
        }
    }
    if (cfg.pre_norm) x = layer_norm(x, params.enc_final_ln);
    return x;
}

void DecoderCache::init(const Eigen::MatrixXf& visual, const TokenSequence& keyword_tokens,
                        int indicator_index) {
    const ModelConfig& cfg = p_->config;
    if (indicator_index < 0 || indicator_index >= p_->indicator_embedding.rows())
        throw_error(ErrorCategory::argument,
                    "indicator index out of range: " + std::to_string(indicator_index));
    const Eigen::MatrixXf enc = encode_features(*p_, visual);

    const std::size_t layers = p_->decoder.size();
    self_k_.assign(layers, {});
    self_v_.assign(layers, {});
    cross_k_.assign(layers, {});
    cross_v_.assign(layers, {});
    for (std::size_t l = 0; l < layers; ++l) {
        const AttentionWeights& c = p_->decoder[l].cross_attn;
        cross_k_[l] = linear(enc, c.wk, c.bk);
        cross_v_[l] = linear(enc, c.wv, c.bv);
    }

    const int n_kw = static_cast<int>(keyword_tokens.size());
    Eigen::MatrixXf x(n_kw + 1, cfg.d_model);
    for (int i = 0; i < n_kw; ++i) {
        const TokenId id = keyword_tokens[static_cast<std::size_t>(i)];
        if (id < 0 || id >= p_->token_embedding.rows())
            throw_error(ErrorCategory::argument, "keyword token out of vocab: " + std::to_string(id));
        x.row(i) = p_->token_embedding.row(id);
    }
    x.row(n_kw) = p_->indicator_embedding.row(indicator_index);

    const Eigen::MatrixXf bias = prompt_bias(n_kw);
    for (std::size_t l = 0; l < layers; ++l) {
        const DecoderLayerParams& layer = p_->decoder[l];
        if (cfg.pre_norm) {
            Eigen::MatrixXf n1 = layer_norm(x, layer.ln1);
            self_k_[l] = linear(n1, layer.self_attn.wk, layer.self_attn.bk);
            self_v_[l] = linear(n1, layer.self_attn.wv, layer.self_attn.bv);
            Eigen::MatrixXf a = mha(linear(n1, layer.self_attn.wq, layer.self_attn.bq),
                                    self_k_[l], self_v_[l], cfg.heads, &bias);
            x += linear(a, layer.self_attn.wo, layer.self_attn.bo);
            Eigen::MatrixXf n2 = layer_norm(x, layer.ln2);
            Eigen::MatrixXf cr = mha(linear(n2, layer.cross_attn.wq, layer.cross_attn.bq),
                                     cross_k_[l], cross_v_[l], cfg.heads, nullptr);
            x += linear(cr, layer.cross_attn.wo, layer.cross_attn.bo);
            x += ffn(layer_norm(x, layer.ln3), layer.ffn);
        } else {
            self_k_[l] = linear(x, layer.self_attn.wk, layer.self_attn.bk);
            self_v_[l] = linear(x, layer.self_attn.wv, layer.self_attn.bv);
            Eigen::MatrixXf a = mha(linear(x, layer.self_attn.wq, layer.self_attn.bq),
                                    self_k_[l], self_v_[l], cfg.heads, &bias);
            x = layer_norm(x + linear(a, layer.self_attn.wo, layer.self_attn.bo), layer.ln1);
            Eigen::MatrixXf cr = mha(linear(x, layer.cross_attn.wq, layer.cross_attn.bq),
                                     cross_k_[l], cross_v_[l], cfg.heads, nullptr);
            x = layer_norm(x + linear(cr, layer.cross_attn.wo, layer.cross_attn.bo), layer.ln2);
            x = layer_norm(x + ffn(x, layer.ffn), layer.ln3);
        }
    }
    cap_len_ = 0;
    ready_ = true;
}

Eigen::RowVectorXf DecoderCache::step(TokenId token) {
    if (!ready_)
        throw_error(ErrorCategory::state, "decoder cache used before init");
    const ModelConfig& cfg = p_->config;
    if (token < 0 || token >= p_->token_embedding.rows())
        throw_error(ErrorCategory::argument, "token out of vocab: " + std::to_string(token));

    Eigen::MatrixXf x = p_->token_embedding.row(token) +
                        sinusoidal_positions(1, cfg.d_model, cap_len_).cast<float>();
    ++cap_len_;

    for (std::size_t l = 0; l < p_->decoder.size(); ++l) {
        const DecoderLayerParams& layer = p_->decoder[l];
        if (cfg.pre_norm) {
            Eigen::MatrixXf n1 = layer_norm(x, layer.ln1);
            self_k_[l].conservativeResize(self_k_[l].rows() + 1, Eigen::NoChange);
            self_v_[l].conservativeResize(self_v_[l].rows() + 1, Eigen::NoChange);
            self_k_[l].bottomRows(1) = linear(n1, layer.self_attn.wk, layer.self_attn.bk);
            self_v_[l].bottomRows(1) = linear(n1, layer.self_attn.wv, layer.self_attn.bv);
            Eigen::MatrixXf a = mha(linear(n1, layer.self_attn.wq, layer.self_attn.bq),
                                    self_k_[l], self_v_[l], cfg.heads, nullptr);
            x += linear(a, layer.self_attn.wo, layer.self_attn.bo);
            Eigen::MatrixXf n2 = layer_norm(x, layer.ln2);
            Eigen::MatrixXf cr = mha(linear(n2, layer.cross_attn.wq, layer.cross_attn.bq),
                                     cross_k_[l], cross_v_[l], cfg.heads, nullptr);
            x += linear(cr, layer.cross_attn.wo, layer.cross_attn.bo);
            x += ffn(layer_norm(x, layer.ln3), layer.ffn);
        } else {
            self_k_[l].conservativeResize(self_k_[l].rows() + 1, Eigen::NoChange);
            self_v_[l].conservativeResize(self_v_[l].rows() + 1, Eigen::NoChange);
            self_k_[l].bottomRows(1) = linear(x, layer.self_attn.wk, layer.self_attn.bk);
            self_v_[l].bottomRows(1) = linear(x, layer.self_attn.wv, layer.self_attn.bv);
            Eigen::MatrixXf a = mha(linear(x, layer.self_attn.wq, layer.self_attn.bq),
                                    self_k_[l], self_v_[l], cfg.heads, nullptr);
            x = layer_norm(x + linear(a, layer.self_attn.wo, layer.self_attn.bo), layer.ln1);
            Eigen::MatrixXf cr = mha(linear(x, layer.cross_attn.wq, layer.cross_attn.bq),
                                     cross_k_[l], cross_v_[l], cfg.heads, nullptr);
            x = layer_norm(x + linear(cr, layer.cross_attn.wo, layer.cross_attn.bo), layer.ln2);
            x = layer_norm(x + ffn(x, layer.ffn), layer.ln3);
        }
    }
    if (cfg.pre_norm) x = layer_norm(x, p_->final_ln);
    return linear(x, p_->out_w, p_->out_b).row(0);
}

} // namespace pivotcap
