#include "pivotcap/net.hpp"

#include <cmath>
#include <type_traits>

#include "pivotcap/error.hpp"

namespace pivotcap {

namespace {

template <typename T>
using Idx = typename Tape<T>::Index;

template <typename T>
Idx<T> layer_norm(TapeModel<T>& m, Idx<T> x, const std::string& prefix) {
    return m.tape.layer_norm_rows(x, m.node(prefix + ".gain"), m.node(prefix + ".bias"));
}

template <typename T>
Idx<T> ffn(TapeModel<T>& m, Idx<T> x, const std::string& prefix) {
    auto& t = m.tape;
    Idx<T> h = t.gelu(t.add_rowvec(t.matmul(x, m.node(prefix + ".w1")), m.node(prefix + ".b1")));
    return t.add_rowvec(t.matmul(h, m.node(prefix + ".w2")), m.node(prefix + ".b2"));
}

// Multi-head attention. Memory slots (if any) live directly in key/value
// space, so they join after the projections and receive no bias term.
template <typename T>
Idx<T> attention(TapeModel<T>& m, Idx<T> x_q, Idx<T> x_kv, const std::string& prefix,
                 std::type_identity_t<const Mat<T>*> bias, Idx<T> mem_k = -1, Idx<T> mem_v = -1) {
    auto& t = m.tape;
    const int heads = m.cfg.heads;
    const int dh = m.cfg.head_dim();
    Idx<T> q = t.add_rowvec(t.matmul(x_q, m.node(prefix + ".wq")), m.node(prefix + ".bq"));
    Idx<T> k = t.add_rowvec(t.matmul(x_kv, m.node(prefix + ".wk")), m.node(prefix + ".bk"));
    Idx<T> v = t.add_rowvec(t.matmul(x_kv, m.node(prefix + ".wv")), m.node(prefix + ".bv"));
    if (mem_k >= 0) {
        k = t.concat_rows(k, mem_k);
        v = t.concat_rows(v, mem_v);
    }
    const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
    std::vector<Idx<T>> outs;
    outs.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        Idx<T> qh = t.slice_cols(q, static_cast<Eigen::Index>(h) * dh, dh);
        Idx<T> kh = t.slice_cols(k, static_cast<Eigen::Index>(h) * dh, dh);
        Idx<T> vh = t.slice_cols(v, static_cast<Eigen::Index>(h) * dh, dh);
        Idx<T> scores = t.scale(t.matmul(qh, t.transpose(kh)), inv_sqrt);
        if (bias) scores = t.add_constant(scores, *bias);
        outs.push_back(t.matmul(t.softmax_rows(scores), vh));
    }
    Idx<T> merged = heads == 1 ? outs[0] : t.hstack(outs);
    return t.add_rowvec(t.matmul(merged, m.node(prefix + ".wo")), m.node(prefix + ".bo"));
}

template <typename T>
Idx<T> encoder_layer(TapeModel<T>& m, Idx<T> x, int layer) {
    auto& t = m.tape;
    const std::string base = "enc." + std::to_string(layer);
    Idx<T> mem_k = m.cfg.memory_slots > 0 ? m.node(base + ".mem_k") : Idx<T>(-1);
    Idx<T> mem_v = m.cfg.memory_slots > 0 ? m.node(base + ".mem_v") : Idx<T>(-1);
    if (m.cfg.pre_norm) {
        Idx<T> n1 = layer_norm(m, x, base + ".ln1");
        Idx<T> a = t.add(x, attention(m, n1, n1, base + ".attn", nullptr, mem_k, mem_v));
        Idx<T> n2 = layer_norm(m, a, base + ".ln2");
        return t.add(a, ffn(m, n2, base + ".ffn"));
    }
    Idx<T> a = layer_norm(m, t.add(x, attention(m, x, x, base + ".attn", nullptr, mem_k, mem_v)),
                          base + ".ln1");
    return layer_norm(m, t.add(a, ffn(m, a, base + ".ffn")), base + ".ln2");
}

template <typename T>
Idx<T> decoder_layer(TapeModel<T>& m, Idx<T> x, Idx<T> enc_out, int layer, const Mat<T>& self_bias) {
    auto& t = m.tape;
    const std::string base = "dec." + std::to_string(layer);
    if (m.cfg.pre_norm) {
        Idx<T> n1 = layer_norm(m, x, base + ".ln1");
        Idx<T> a = t.add(x, attention(m, n1, n1, base + ".self", &self_bias));
        Idx<T> n2 = layer_norm(m, a, base + ".ln2");
        Idx<T> b = t.add(a, attention(m, n2, enc_out, base + ".cross", nullptr));
        Idx<T> n3 = layer_norm(m, b, base + ".ln3");
        return t.add(b, ffn(m, n3, base + ".ffn"));
    }
    Idx<T> a = layer_norm(m, t.add(x, attention(m, x, x, base + ".self", &self_bias)), base + ".ln1");
    Idx<T> b = layer_norm(m, t.add(a, attention(m, a, enc_out, base + ".cross", nullptr)), base + ".ln2");
    return layer_norm(m, t.add(b, ffn(m, b, base + ".ffn")), base + ".ln3");
}

} // namespace

Eigen::MatrixXd sinusoidal_positions(int length, int d_model, int start) {
    Eigen::MatrixXd pe(length, d_model);
    for (int pos = 0; pos < length; ++pos) {
        for (int i = 0; i < d_model; i += 2) {
            const double angle =
                (pos + start) / std::pow(10000.0, static_cast<double>(i) / d_model);
            pe(pos, i) = std::sin(angle);
            if (i + 1 < d_model) pe(pos, i + 1) = std::cos(angle);
        }
    }
    return pe;
}

template <typename T>
typename Tape<T>::Index TapeModel<T>::node(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end())
        throw_error(ErrorCategory::state, "unknown parameter tensor: " + name);
    return it->second;
}

template <typename T>
TapeModel<T> make_tape_model(const ModelParams& p) {
    TapeModel<T> m;
    m.cfg = p.config;
    p.for_each_tensor([&](const std::string& name, const Eigen::MatrixXf& tensor) {
        m.params.emplace(name, m.tape.input(tensor.template cast<T>()));
    });
    return m;
}

template <typename T>
typename Tape<T>::Index encode_tape(TapeModel<T>& m, const Eigen::MatrixXf& visual) {
    if (visual.rows() < 1)
        throw_error(ErrorCategory::argument, "visual features need at least one region");
    if (visual.cols() != m.cfg.d_v)
        throw_error(ErrorCategory::argument,
                    "visual feature dim " + std::to_string(visual.cols()) + " does not match d_v " +
                        std::to_string(m.cfg.d_v));
    auto& t = m.tape;
    Idx<T> x = t.add_rowvec(t.matmul(t.input(visual.cast<T>()), m.node("visual.w")),
                            m.node("visual.b"));
    if (m.cfg.visual_pos_encoding) {
        Mat<T> pe = sinusoidal_positions(static_cast<int>(visual.rows()), m.cfg.d_model)
                        .template cast<T>();
        x = t.add_constant(x, pe);
    }
    for (int l = 0; l < m.cfg.encoder_layers; ++l) x = encoder_layer(m, x, l);
    if (m.cfg.pre_norm) x = layer_norm(m, x, "enc_final_ln");
    return x;
}

template <typename T>
typename Tape<T>::Index decode_tape(TapeModel<T>& m, typename Tape<T>::Index enc_out,
                                    const TokenSequence& keyword_tokens, int indicator_index,
                                    const TokenSequence& caption_in, const BoolMat& mask) {
    if (caption_in.empty())
        throw_error(ErrorCategory::argument, "caption input must hold at least one token");
    if (indicator_index < 0 || indicator_index >= m.tape.value(m.node("indicator_embedding")).rows())
        throw_error(ErrorCategory::argument,
                    "indicator index out of range: " + std::to_string(indicator_index));
    const int n_kw = static_cast<int>(keyword_tokens.size());
    const int n_cap = static_cast<int>(caption_in.size());
    const int total = n_kw + 1 + n_cap;
    if (mask.rows() != total || mask.cols() != total)
        throw_error(ErrorCategory::argument,
                    "attention mask is " + std::to_string(mask.rows()) + "x" +
                        std::to_string(mask.cols()) + ", expected " + std::to_string(total));
    auto& t = m.tape;

    Idx<T> cap = t.gather_rows(m.node("token_embedding"), caption_in);
    Mat<T> pe = sinusoidal_positions(n_cap, m.cfg.d_model).template cast<T>();
    cap = t.add_constant(cap, pe);
    Idx<T> ind = t.gather_rows(m.node("indicator_embedding"), {indicator_index});
    Idx<T> x;
    if (n_kw > 0) {
        // keywords keep retrieval order and carry no positional signal
        Idx<T> kw = t.gather_rows(m.node("token_embedding"), keyword_tokens);
        x = t.concat_rows(t.concat_rows(kw, ind), cap);
    } else {
        x = t.concat_rows(ind, cap);
    }

    const Mat<T> bias = mask_bias<T>(mask);
    for (int l = 0; l < m.cfg.decoder_layers; ++l) x = decoder_layer(m, x, enc_out, l, bias);
    if (m.cfg.pre_norm) x = layer_norm(m, x, "final_ln");
    Idx<T> cap_rows = t.slice_rows(x, n_kw + 1, n_cap);
    return t.add_rowvec(t.matmul(cap_rows, m.node("out.w")), m.node("out.b"));
}

template <typename T>
typename Tape<T>::Index caption_nll_sum(Tape<T>& tape, typename Tape<T>::Index logits,
                                        const TokenSequence& targets,
                                        const std::vector<bool>& target_real) {
    const Eigen::Index rows = tape.value(logits).rows();
    const Eigen::Index vocab = tape.value(logits).cols();
    if (static_cast<Eigen::Index>(targets.size()) != rows)
        throw_error(ErrorCategory::argument,
                    "target count " + std::to_string(targets.size()) + " does not match " +
                        std::to_string(rows) + " logit rows");
    if (!target_real.empty() && target_real.size() != targets.size())
        throw_error(ErrorCategory::argument, "target mask length does not match targets");
    Mat<T> weights = Mat<T>::Zero(rows, vocab);
    for (Eigen::Index i = 0; i < rows; ++i) {
        if (!target_real.empty() && !target_real[static_cast<std::size_t>(i)]) continue;
        const TokenId id = targets[static_cast<std::size_t>(i)];
        if (id < 0 || id >= vocab)
            throw_error(ErrorCategory::argument, "target id out of vocab: " + std::to_string(id));
        weights(i, id) = T(-1);
    }
    return tape.weighted_sum(tape.log_softmax_rows(logits), weights);
}

template <typename T>
typename Tape<T>::Index prompt_lm_loss(Tape<T>& tape,
                                       const std::vector<typename Tape<T>::Index>& sample_logits,
                                       const std::vector<TokenSequence>& targets,
                                       const std::vector<std::vector<bool>>& target_real) {
    if (sample_logits.empty())
        throw_error(ErrorCategory::argument, "loss needs at least one sample");
    if (targets.size() != sample_logits.size() ||
        (!target_real.empty() && target_real.size() != sample_logits.size()))
        throw_error(ErrorCategory::argument, "loss inputs disagree on batch size");
    std::size_t token_count = 0;
    typename Tape<T>::Index total = -1;
    static const std::vector<bool> kNoMask;
    for (std::size_t s = 0; s < sample_logits.size(); ++s) {
        const std::vector<bool>& real = target_real.empty() ? kNoMask : target_real[s];
        typename Tape<T>::Index nll = caption_nll_sum(tape, sample_logits[s], targets[s], real);
        total = total < 0 ? nll : tape.add(total, nll);
        if (real.empty())
            token_count += targets[s].size();
        else
            for (bool b : real) token_count += b ? 1 : 0;
    }
    if (token_count == 0)
        throw_error(ErrorCategory::argument, "loss has no real target tokens");
    return tape.scale(total, T(1) / static_cast<T>(token_count));
}

template struct TapeModel<float>;
template struct TapeModel<double>;
template TapeModel<float> make_tape_model<float>(const ModelParams&);
template TapeModel<double> make_tape_model<double>(const ModelParams&);
template Tape<float>::Index encode_tape<float>(TapeModel<float>&, const Eigen::MatrixXf&);
template Tape<double>::Index encode_tape<double>(TapeModel<double>&, const Eigen::MatrixXf&);
template Tape<float>::Index decode_tape<float>(TapeModel<float>&, Tape<float>::Index,
                                               const TokenSequence&, int, const TokenSequence&,
                                               const BoolMat&);
template Tape<double>::Index decode_tape<double>(TapeModel<double>&, Tape<double>::Index,
                                                 const TokenSequence&, int, const TokenSequence&,
                                                 const BoolMat&);
template Tape<float>::Index caption_nll_sum<float>(Tape<float>&, Tape<float>::Index,
                                                   const TokenSequence&, const std::vector<bool>&);
template Tape<double>::Index caption_nll_sum<double>(Tape<double>&, Tape<double>::Index,
                                                     const TokenSequence&, const std::vector<bool>&);
template Tape<float>::Index prompt_lm_loss<float>(Tape<float>&,
                                                  const std::vector<Tape<float>::Index>&,
                                                  const std::vector<TokenSequence>&,
                                                  const std::vector<std::vector<bool>>&);
template Tape<double>::Index prompt_lm_loss<double>(Tape<double>&,
                                                    const std::vector<Tape<double>::Index>&,
                                                    const std::vector<TokenSequence>&,
                                                    const std::vector<std::vector<bool>>&);

} // namespace pivotcap
