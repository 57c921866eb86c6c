#include "pivotcap/model_config.hpp"

#include <set>

#include <json.hpp>

#include "pivotcap/error.hpp"

namespace pivotcap {

void ModelConfig::validate() const {
    if (decoder_layers < 1 || encoder_layers < 1)
        throw_error(ErrorCategory::config, "layer counts must be >= 1");
    if (d_model < 1 || heads < 1 || d_v < 1 || bpe_vocab < 4 || max_len < 2)
        throw_error(ErrorCategory::config, "model dimensions must be positive");
    if (d_model % heads != 0)
        throw_error(ErrorCategory::config,
                    "d_model " + std::to_string(d_model) + " not divisible by heads " +
                        std::to_string(heads));
    if (memory_slots < 0)
        throw_error(ErrorCategory::config, "memory_slots must be >= 0");
    if (k_keywords < 0)
        throw_error(ErrorCategory::config, "k_keywords must be >= 0");
}

ModelConfig ModelConfig::preset(const std::string& name) {
    ModelConfig c;
    if (name == "tiny") {
        c.decoder_layers = 3;
        c.d_model = 384;
        c.heads = 6;
    } else if (name == "small") {
        c.decoder_layers = 6;
        c.d_model = 512;
        c.heads = 8;
    } else if (name == "base") {
        c.decoder_layers = 12;
        c.d_model = 768;
        c.heads = 12;
    } else if (name == "large") {
        c.decoder_layers = 24;
        c.d_model = 1024;
        c.heads = 16;
    } else {
        throw_error(ErrorCategory::config,
                    "unknown preset '" + name + "' (tiny, small, base, large)");
    }
    return c;
}

std::uint64_t ModelConfig::param_count() const {
    const std::uint64_t d = static_cast<std::uint64_t>(d_model);
    const std::uint64_t v = static_cast<std::uint64_t>(bpe_vocab);
    const std::uint64_t f = static_cast<std::uint64_t>(ffn_dim());
    const std::uint64_t m = static_cast<std::uint64_t>(memory_slots);

    const std::uint64_t attn = 4 * d * d + 4 * d;
    const std::uint64_t ln = 2 * d;
    const std::uint64_t ffn = d * f + f + f * d + d;

    std::uint64_t count = 0;
    count += v * d;                                    // token embedding
    count += 2 * d;                                    // indicator embeddings
    count += static_cast<std::uint64_t>(d_v) * d + d;  // visual projection
    count += static_cast<std::uint64_t>(encoder_layers) * (attn + 2 * m * d + 2 * ln + ffn);
    count += static_cast<std::uint64_t>(decoder_layers) * (2 * attn + 3 * ln + ffn);
    count += 2 * ln;                                   // encoder + decoder final norms
    count += d * v + v;                                // output projection
    return count;
}

std::string ModelConfig::to_json() const {
    nlohmann::json doc = {
        {"decoder_layers", decoder_layers},
        {"encoder_layers", encoder_layers},
        {"d_model", d_model},
        {"heads", heads},
        {"memory_slots", memory_slots},
        {"k_keywords", k_keywords},
        {"max_len", max_len},
        {"bpe_vocab", bpe_vocab},
        {"d_v", d_v},
        {"pre_norm", pre_norm},
        {"visual_pos_encoding", visual_pos_encoding},
    };
    return doc.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw_error(ErrorCategory::data, std::string("bad model config: ") + e.what());
    }
    ModelConfig c;
    static const std::set<std::string> known = {
        "decoder_layers", "encoder_layers", "d_model",  "heads",
        "memory_slots",   "k_keywords",     "max_len",  "bpe_vocab",
        "d_v",            "pre_norm",       "visual_pos_encoding"};
    for (auto it = doc.begin(); it != doc.end(); ++it)
        if (!known.count(it.key()))
            throw_error(ErrorCategory::config, "unknown model config key '" + it.key() + "'");
    try {
        if (doc.contains("decoder_layers")) c.decoder_layers = doc["decoder_layers"].get<int>();
        if (doc.contains("encoder_layers")) c.encoder_layers = doc["encoder_layers"].get<int>();
        if (doc.contains("d_model")) c.d_model = doc["d_model"].get<int>();
        if (doc.contains("heads")) c.heads = doc["heads"].get<int>();
        if (doc.contains("memory_slots")) c.memory_slots = doc["memory_slots"].get<int>();
        if (doc.contains("k_keywords")) c.k_keywords = doc["k_keywords"].get<int>();
        if (doc.contains("max_len")) c.max_len = doc["max_len"].get<int>();
        if (doc.contains("bpe_vocab")) c.bpe_vocab = doc["bpe_vocab"].get<int>();
        if (doc.contains("d_v")) c.d_v = doc["d_v"].get<int>();
        if (doc.contains("pre_norm")) c.pre_norm = doc["pre_norm"].get<bool>();
        if (doc.contains("visual_pos_encoding"))
            c.visual_pos_encoding = doc["visual_pos_encoding"].get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw_error(ErrorCategory::data, std::string("bad model config: ") + e.what());
    }
    c.validate();
    return c;
}

} // namespace pivotcap
