#include "pivotcap/run_config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "pivotcap/dataset.hpp"
#include "pivotcap/error.hpp"

namespace pivotcap {

namespace {

using nlohmann::json;

void reject_unknown(const json& doc, const std::set<std::string>& known,
                    const std::string& where) {
    if (!doc.is_object())
        throw_error(ErrorCategory::config, where + " must be a JSON object");
    for (auto it = doc.begin(); it != doc.end(); ++it)
        if (!known.count(it.key()))
            throw_error(ErrorCategory::config,
                        "unknown key '" + it.key() + "' in " + where);
}

template <typename T>
void pick(const json& doc, const char* key, T& target) {
    if (!doc.contains(key)) return;
    try {
        target = doc[key].get<T>();
    } catch (const json::exception& e) {
        throw_error(ErrorCategory::data, std::string("bad value for '") + key + "': " + e.what());
    }
}

TrainConfig train_from_json(const json& doc) {
    reject_unknown(doc,
                   {"total_steps", "batch_size", "warmup_steps", "lr_scale", "clip_norm",
                    "checkpoint_interval", "seed", "checkpoint_path", "metrics_path"},
                   "train config");
    TrainConfig c;
    pick(doc, "total_steps", c.total_steps);
    pick(doc, "batch_size", c.batch_size);
    pick(doc, "warmup_steps", c.warmup_steps);
    pick(doc, "lr_scale", c.lr_scale);
    pick(doc, "clip_norm", c.clip_norm);
    pick(doc, "checkpoint_interval", c.checkpoint_interval);
    pick(doc, "seed", c.seed);
    pick(doc, "checkpoint_path", c.checkpoint_path);
    pick(doc, "metrics_path", c.metrics_path);
    return c;
}

ScstConfig scst_from_json(const json& doc) {
    reject_unknown(doc,
                   {"beam_size", "learning_rate", "batch_size", "total_steps", "clip_norm",
                    "seed", "reward", "checkpoint_path", "metrics_path"},
                   "scst config");
    ScstConfig c;
    pick(doc, "beam_size", c.beam_size);
    pick(doc, "learning_rate", c.learning_rate);
    pick(doc, "batch_size", c.batch_size);
    pick(doc, "total_steps", c.total_steps);
    pick(doc, "clip_norm", c.clip_norm);
    pick(doc, "seed", c.seed);
    pick(doc, "reward", c.reward);
    pick(doc, "checkpoint_path", c.checkpoint_path);
    pick(doc, "metrics_path", c.metrics_path);
    return c;
}

DecodeConfig decode_from_json(const json& doc) {
    reject_unknown(doc, {"strategy", "beam_size", "max_len", "length_penalty", "seed"},
                   "decode config");
    DecodeConfig c;
    if (doc.contains("strategy")) c.strategy = strategy_from_name(doc["strategy"].get<std::string>());
    pick(doc, "beam_size", c.beam_size);
    pick(doc, "max_len", c.max_len);
    pick(doc, "length_penalty", c.length_penalty);
    pick(doc, "seed", c.seed);
    return c;
}

DataConfig data_from_json(const json& doc) {
    reject_unknown(doc,
                   {"train_manifest", "eval_manifest", "eval_refs", "corpus", "dictionary",
                    "index", "tokenizer", "blocklist", "synonyms", "markers", "embed_spec",
                    "vocab_limit"},
                   "data config");
    DataConfig c;
    pick(doc, "train_manifest", c.train_manifest);
    pick(doc, "eval_manifest", c.eval_manifest);
    pick(doc, "eval_refs", c.eval_refs);
    pick(doc, "corpus", c.corpus);
    pick(doc, "dictionary", c.dictionary);
    pick(doc, "index", c.index);
    pick(doc, "tokenizer", c.tokenizer);
    pick(doc, "blocklist", c.blocklist);
    pick(doc, "synonyms", c.synonyms);
    pick(doc, "markers", c.markers);
    pick(doc, "embed_spec", c.embed_spec);
    pick(doc, "vocab_limit", c.vocab_limit);
    return c;
}

void resolve(std::string& path, const std::filesystem::path& base) {
    if (path.empty()) return;
    std::filesystem::path p(path);
    if (p.is_relative()) path = (base / p).lexically_normal().string();
}

} // namespace

const char* strategy_name(DecodeStrategy s) {
    return s == DecodeStrategy::beam ? "beam" : "greedy";
}

std::string RunConfig::to_json() const {
    json doc = {
        {"output_dir", output_dir},
        {"seed", seed},
        {"indicator", indicator},
        {"model", json::parse(model.to_json())},
        {"train",
         {{"total_steps", train.total_steps},
          {"batch_size", train.batch_size},
          {"warmup_steps", train.warmup_steps},
          {"lr_scale", train.lr_scale},
          {"clip_norm", train.clip_norm},
          {"checkpoint_interval", train.checkpoint_interval},
          {"seed", train.seed},
          {"checkpoint_path", train.checkpoint_path},
          {"metrics_path", train.metrics_path}}},
        {"scst",
         {{"beam_size", scst.beam_size},
          {"learning_rate", scst.learning_rate},
          {"batch_size", scst.batch_size},
          {"total_steps", scst.total_steps},
          {"clip_norm", scst.clip_norm},
          {"seed", scst.seed},
          {"reward", scst.reward},
          {"checkpoint_path", scst.checkpoint_path},
          {"metrics_path", scst.metrics_path}}},
        {"decode",
         {{"strategy", strategy_name(decode.strategy)},
          {"beam_size", decode.beam_size},
          {"max_len", decode.max_len},
          {"length_penalty", decode.length_penalty},
          {"seed", decode.seed}}},
        {"data",
         {{"train_manifest", data.train_manifest},
          {"eval_manifest", data.eval_manifest},
          {"eval_refs", data.eval_refs},
          {"corpus", data.corpus},
          {"dictionary", data.dictionary},
          {"index", data.index},
          {"tokenizer", data.tokenizer},
          {"blocklist", data.blocklist},
          {"synonyms", data.synonyms},
          {"markers", data.markers},
          {"embed_spec", data.embed_spec},
          {"vocab_limit", data.vocab_limit}}},
    };
    return doc.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw_error(ErrorCategory::data, std::string("bad run config: ") + e.what());
    }
    reject_unknown(doc, {"output_dir", "seed", "indicator", "model", "train", "scst", "decode",
                         "data"},
                   "run config");
    RunConfig c;
    pick(doc, "output_dir", c.output_dir);
    pick(doc, "seed", c.seed);
    pick(doc, "indicator", c.indicator);
    style_from_name(c.indicator); // validates the value
    if (doc.contains("model")) c.model = ModelConfig::from_json(doc["model"].dump());
    if (doc.contains("train")) c.train = train_from_json(doc["train"]);
    if (doc.contains("scst")) c.scst = scst_from_json(doc["scst"]);
    if (doc.contains("decode")) c.decode = decode_from_json(doc["decode"]);
    if (doc.contains("data")) c.data = data_from_json(doc["data"]);
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw_error(ErrorCategory::io, "cannot open config: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    RunConfig c = from_json(buf.str());
    c.resolve_paths(std::filesystem::path(path).parent_path().string());
    return c;
}

void RunConfig::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw_error(ErrorCategory::io, "cannot write config: " + path);
    out << to_json() << "\n";
}

void RunConfig::resolve_paths(const std::string& base_dir) {
    const std::filesystem::path base(base_dir);
    resolve(data.train_manifest, base);
    resolve(data.eval_manifest, base);
    resolve(data.eval_refs, base);
    resolve(data.corpus, base);
    resolve(data.dictionary, base);
    resolve(data.index, base);
    resolve(data.tokenizer, base);
    resolve(data.blocklist, base);
    resolve(data.synonyms, base);
    resolve(data.markers, base);

    const char* root = std::getenv("PIVOTCAP_OUTPUT_ROOT");
    if (!output_dir.empty() && root && *root) resolve(output_dir, std::filesystem::path(root));
}

} // namespace pivotcap
