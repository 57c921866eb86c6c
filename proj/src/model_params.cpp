#include "pivotcap/model_params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "pivotcap/error.hpp"
#include "pivotcap/matio.hpp"
#include "pivotcap/rng.hpp"

namespace pivotcap {

namespace {

constexpr char kMagic[4] = {'P', 'C', 'K', 'P'};

template <typename Fn>
void visit_attention(const std::string& prefix, AttentionWeights& a, Fn&& fn) {
    fn(prefix + ".wq", a.wq);
    fn(prefix + ".wk", a.wk);
    fn(prefix + ".wv", a.wv);
    fn(prefix + ".wo", a.wo);
    fn(prefix + ".bq", a.bq);
    fn(prefix + ".bk", a.bk);
    fn(prefix + ".bv", a.bv);
    fn(prefix + ".bo", a.bo);
}

template <typename Fn>
void visit_ln(const std::string& prefix, LayerNormWeights& ln, Fn&& fn) {
    fn(prefix + ".gain", ln.gain);
    fn(prefix + ".bias", ln.bias);
}

template <typename Fn>
void visit_ffn(const std::string& prefix, FfnWeights& f, Fn&& fn) {
    fn(prefix + ".w1", f.w1);
    fn(prefix + ".b1", f.b1);
    fn(prefix + ".w2", f.w2);
    fn(prefix + ".b2", f.b2);
}

template <typename Fn>
void visit_all(ModelParams& p, Fn&& fn) {
    fn("token_embedding", p.token_embedding);
    fn("indicator_embedding", p.indicator_embedding);
    fn("visual.w", p.visual_w);
    fn("visual.b", p.visual_b);
    for (std::size_t i = 0; i < p.encoder.size(); ++i) {
        const std::string base = "enc." + std::to_string(i);
        auto& layer = p.encoder[i];
        visit_attention(base + ".attn", layer.attn, fn);
        fn(base + ".mem_k", layer.mem_k);
        fn(base + ".mem_v", layer.mem_v);
        visit_ln(base + ".ln1", layer.ln1, fn);
        visit_ln(base + ".ln2", layer.ln2, fn);
        visit_ffn(base + ".ffn", layer.ffn, fn);
    }
    for (std::size_t i = 0; i < p.decoder.size(); ++i) {
        const std::string base = "dec." + std::to_string(i);
        auto& layer = p.decoder[i];
        visit_attention(base + ".self", layer.self_attn, fn);
        visit_attention(base + ".cross", layer.cross_attn, fn);
        visit_ln(base + ".ln1", layer.ln1, fn);
        visit_ln(base + ".ln2", layer.ln2, fn);
        visit_ln(base + ".ln3", layer.ln3, fn);
        visit_ffn(base + ".ffn", layer.ffn, fn);
    }
    visit_ln("enc_final_ln", p.enc_final_ln, fn);
    visit_ln("final_ln", p.final_ln, fn);
    fn("out.w", p.out_w);
    fn("out.b", p.out_b);
}

} // namespace

void ModelParams::for_each_tensor(
    const std::function<void(const std::string&, Eigen::MatrixXf&)>& fn) {
    visit_all(*this, fn);
}

void ModelParams::for_each_tensor(
    const std::function<void(const std::string&, const Eigen::MatrixXf&)>& fn) const {
    visit_all(const_cast<ModelParams&>(*this),
              [&fn](const std::string& name, Eigen::MatrixXf& m) { fn(name, m); });
}

std::uint64_t ModelParams::actual_param_count() const {
    std::uint64_t n = 0;
    for_each_tensor([&n](const std::string&, const Eigen::MatrixXf& m) {
        n += static_cast<std::uint64_t>(m.size());
    });
    return n;
}

namespace {

void allocate(ModelParams& p) {
    const auto& c = p.config;
    const int d = c.d_model;
    const int f = c.ffn_dim();
    p.token_embedding.resize(c.bpe_vocab, d);
    p.indicator_embedding.resize(2, d);
    p.visual_w.resize(c.d_v, d);
    p.visual_b.resize(1, d);
    auto alloc_attn = [d](AttentionWeights& a) {
        a.wq.resize(d, d);
        a.wk.resize(d, d);
        a.wv.resize(d, d);
        a.wo.resize(d, d);
        a.bq.resize(1, d);
        a.bk.resize(1, d);
        a.bv.resize(1, d);
        a.bo.resize(1, d);
    };
    auto alloc_ln = [d](LayerNormWeights& ln) {
        ln.gain.resize(1, d);
        ln.bias.resize(1, d);
    };
    auto alloc_ffn = [d, f](FfnWeights& w) {
        w.w1.resize(d, f);
        w.b1.resize(1, f);
        w.w2.resize(f, d);
        w.b2.resize(1, d);
    };
    p.encoder.resize(static_cast<std::size_t>(c.encoder_layers));
    for (auto& layer : p.encoder) {
        alloc_attn(layer.attn);
        layer.mem_k.resize(c.memory_slots, d);
        layer.mem_v.resize(c.memory_slots, d);
        alloc_ln(layer.ln1);
        alloc_ln(layer.ln2);
        alloc_ffn(layer.ffn);
    }
    p.decoder.resize(static_cast<std::size_t>(c.decoder_layers));
    for (auto& layer : p.decoder) {
        alloc_attn(layer.self_attn);
        alloc_attn(layer.cross_attn);
        alloc_ln(layer.ln1);
        alloc_ln(layer.ln2);
        alloc_ln(layer.ln3);
        alloc_ffn(layer.ffn);
    }
    alloc_ln(p.enc_final_ln);
    alloc_ln(p.final_ln);
    p.out_w.resize(d, c.bpe_vocab);
    p.out_b.resize(1, c.bpe_vocab);
}

} // namespace

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    ModelParams p;
    p.config = config;
    allocate(p);

    const float residual_scale =
        1.0f / std::sqrt(2.0f * static_cast<float>(config.total_layers()));

    // fill in canonical visiting order so the layout fully determines the
    // random stream
    p.for_each_tensor([&](const std::string& name, Eigen::MatrixXf& m) {
        Rng rng(derive_seed(seed, name));
        const auto dot = name.rfind('.');
        const std::string leaf = dot == std::string::npos ? name : name.substr(dot + 1);
        if (leaf == "gain") {
            m.setOnes();
            return;
        }
        if (leaf[0] == 'b' || leaf == "bias") {
            m.setZero();
            return;
        }
        const double limit =
            std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index cidx = 0; cidx < m.cols(); ++cidx)
                m(r, cidx) = static_cast<float>(rng.uniform(-limit, limit));
        if (leaf == "wo" || leaf == "w2") m *= residual_scale;
    });
    return p;
}

void save_checkpoint(const std::string& path, const ModelParams& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw_error(ErrorCategory::io, "cannot open for writing: " + path);
    out.write(kMagic, 4);
    write_string(out, params.config.to_json());
    std::uint32_t count = 0;
    params.for_each_tensor([&count](const std::string&, const Eigen::MatrixXf&) { ++count; });
    write_u32(out, count);
    params.for_each_tensor([&out](const std::string& name, const Eigen::MatrixXf& m) {
        write_string(out, name);
        write_matrix(out, m);
    });
    if (!out) throw_error(ErrorCategory::io, "write failed: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_error(ErrorCategory::io, "cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw_error(ErrorCategory::data, path + ": not a checkpoint file");
    ModelParams p;
    p.config = ModelConfig::from_json(read_string(in, path));
    allocate(p);
    const auto count = read_u32(in, path);
    std::uint32_t expected = 0;
    p.for_each_tensor([&expected](const std::string&, const Eigen::MatrixXf&) { ++expected; });
    if (count != expected)
        throw_error(ErrorCategory::data, path + ": tensor count mismatch");
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = read_string(in, path);
        Eigen::MatrixXf m = read_matrix(in, path);
        bool found = false;
        p.for_each_tensor([&](const std::string& n, Eigen::MatrixXf& slot) {
            if (n != name) return;
            found = true;
            if (slot.rows() != m.rows() || slot.cols() != m.cols())
                throw_error(ErrorCategory::data,
                            path + ": shape mismatch for " + name);
            slot = m;
        });
        if (!found) throw_error(ErrorCategory::data, path + ": unknown tensor " + name);
    }
    return p;
}

} // namespace pivotcap
