#pragma once

#include <cstdint>
#include <string>

namespace pivotcap {

// Architecture hyperparameters. decoder_layers/d_model/heads follow the
// published size grid; encoder_layers defaults to 3 and memory_slots to 40.
struct ModelConfig {
    int decoder_layers = 3;
    int encoder_layers = 3;
    int d_model = 384;
    int heads = 6;
    int memory_slots = 40;
    int k_keywords = 5;
    int max_len = 80;
    int bpe_vocab = 2048;
    int d_v = 96;
    bool pre_norm = true;
    bool visual_pos_encoding = false;

    void validate() const;
    int head_dim() const { return d_model / heads; }
    int ffn_dim() const { return 4 * d_model; }
    int total_layers() const { return encoder_layers + decoder_layers; }

    // tiny / small / base / large
    static ModelConfig preset(const std::string& name);

    // analytic count over every learnable tensor; no allocation
    std::uint64_t param_count() const;

    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
};

} // namespace pivotcap
