#pragma once

#include <string>

#include "pivotcap/inference.hpp"
#include "pivotcap/model_config.hpp"
#include "pivotcap/scst.hpp"
#include "pivotcap/trainer.hpp"

namespace pivotcap {

struct DataConfig {
    std::string train_manifest;
    std::string eval_manifest;
    std::string eval_refs;
    std::string corpus;
    std::string dictionary;
    std::string index;
    std::string tokenizer;
    std::string blocklist;
    std::string synonyms;
    std::string markers;
    std::string embed_spec = "mock:42:96";
    int vocab_limit = 10000;
};

// One structured document drives train, finetune-scst, generate and ablate.
// Unknown keys are rejected at every level; missing keys keep their
// defaults. load() resolves data paths relative to the file's directory and
// the output directory against PIVOTCAP_OUTPUT_ROOT when that is set.
struct RunConfig {
    std::string output_dir;
    std::uint64_t seed = 1;
    std::string indicator = "hc"; // generation-time style
    ModelConfig model;
    TrainConfig train;
    ScstConfig scst;
    DecodeConfig decode;
    DataConfig data;

    std::string to_json() const;
    static RunConfig from_json(const std::string& text);

    static RunConfig load(const std::string& path);
    void save(const std::string& path) const;

    void resolve_paths(const std::string& base_dir);
};

const char* strategy_name(DecodeStrategy s);

} // namespace pivotcap
