#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <unordered_map>

#include <CLI11.hpp>
#include <json.hpp>

#include "pivotcap/dataset.hpp"
#include "pivotcap/embedding.hpp"
#include "pivotcap/error.hpp"
#include "pivotcap/evaluation.hpp"
#include "pivotcap/inference.hpp"
#include "pivotcap/keyword_index.hpp"
#include "pivotcap/matio.hpp"
#include "pivotcap/pipeline.hpp"
#include "pivotcap/run_config.hpp"
#include "pivotcap/scst.hpp"
#include "pivotcap/synthetic.hpp"
#include "pivotcap/trainer.hpp"
#include "pivotcap/vocab.hpp"

namespace {

using namespace pivotcap;
using nlohmann::json;
namespace fs = std::filesystem;

// Exclusive advisory lock on <dir>/.lock, held for the life of the command.
class OutputLock {
public:
    explicit OutputLock(const std::string& dir) {
        fs::create_directories(dir);
        const std::string path = (fs::path(dir) / ".lock").string();
        fd_ = ::open(path.c_str(), O_CREAT | O_RDWR, 0644);
        if (fd_ < 0) throw_error(ErrorCategory::io, "cannot open lock file: " + path);
        if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
            ::close(fd_);
            fd_ = -1;
            throw_error(ErrorCategory::state, "output directory is locked: " + dir);
        }
    }
    ~OutputLock() {
        if (fd_ >= 0) {
            ::flock(fd_, LOCK_UN);
            ::close(fd_);
        }
    }
    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;

private:
    int fd_ = -1;
};

void require_exists(const std::string& path, const char* what) {
    if (path.empty()) throw_error(ErrorCategory::config, std::string(what) + " not set");
    if (!fs::exists(path))
        throw_error(ErrorCategory::io, std::string(what) + " not found: " + path);
}

void ensure_parent(const std::string& path) {
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

void write_text(const std::string& path, const std::string& text) {
    ensure_parent(path);
    std::ofstream out(path);
    if (!out) throw_error(ErrorCategory::io, "cannot write: " + path);
    out << text;
}

// The per-run provenance record written next to every command's outputs.
void write_run_record(const std::string& path, const json& doc) {
    write_text(path, doc.dump(2) + "\n");
}

std::string output_rooted(std::string dir) {
    const char* root = std::getenv("PIVOTCAP_OUTPUT_ROOT");
    if (root && *root && fs::path(dir).is_relative())
        dir = (fs::path(root) / dir).lexically_normal().string();
    return dir;
}

// Manifest rows deduplicated on image id (first row wins); generation and
// keyword extraction only need each image once.
std::vector<ManifestEntry> unique_images(const std::vector<ManifestEntry>& entries) {
    std::vector<ManifestEntry> out;
    std::set<std::string> seen;
    for (const auto& e : entries)
        if (seen.insert(e.image_id).second) out.push_back(e);
    return out;
}

Eigen::MatrixXf load_features(const std::string& manifest_dir, const ManifestEntry& e) {
    return read_matrix_file((fs::path(manifest_dir) / e.features_path).string());
}

// By-reference paths inside artifacts resolve against the artifact's own
// directory, so store them relative to it (absolute when that fails).
std::string ref_path(const std::string& target, const std::string& artifact) {
    std::error_code ec;
    const fs::path rel =
        fs::relative(fs::absolute(target), fs::absolute(artifact).parent_path(), ec);
    if (ec || rel.empty()) return fs::absolute(target).lexically_normal().string();
    return rel.string();
}

// ---- build-vocab ----------------------------------------------------------

struct BuildVocabArgs {
    std::string corpus;
    std::string blocklist;
    std::string out;
    std::size_t limit = 10000;
};

void cmd_build_vocab(const BuildVocabArgs& a) {
    require_exists(a.corpus, "corpus");
    std::unordered_set<std::string> blocked;
    if (!a.blocklist.empty()) {
        require_exists(a.blocklist, "blocklist");
        blocked = load_blocklist(a.blocklist);
    }
    const auto dict = build_keyword_dictionary(line_source_from_file(a.corpus), a.limit, blocked);
    ensure_parent(a.out);
    save_dictionary(a.out, dict);
    write_run_record(a.out + ".run.json", {{"command", "build-vocab"},
                                           {"corpus", a.corpus},
                                           {"blocklist", a.blocklist},
                                           {"limit", a.limit},
                                           {"out", a.out}});
    std::cout << "wrote " << a.out << " (" << dict.entries.size() << " entries)\n";
}

// ---- index-keywords -------------------------------------------------------

struct IndexArgs {
    std::string dictionary;
    std::string model_spec = "mock:42:96";
    std::string out;
};

void cmd_index_keywords(const IndexArgs& a) {
    require_exists(a.dictionary, "dictionary");
    const auto dict = load_dictionary(a.dictionary);
    const auto model = make_embedding_model(a.model_spec);
    KeywordIndex index = build_index(dict, *model);
    index.dictionary_path = ref_path(a.dictionary, a.out);
    ensure_parent(a.out);
    save_index(index, a.out);
    write_run_record(a.out + ".run.json", {{"command", "index-keywords"},
                                           {"dictionary", a.dictionary},
                                           {"model", a.model_spec},
                                           {"out", a.out}});
    std::cout << "wrote " << a.out << " (" << index.matrix.rows() << " x "
              << index.matrix.cols() << ")\n";
}

// ---- extract-keywords -----------------------------------------------------

struct ExtractArgs {
    std::string index;
    std::string manifest;
    std::string out;
    std::size_t k = 5;
};

void cmd_extract_keywords(const ExtractArgs& a) {
    require_exists(a.index, "index");
    require_exists(a.manifest, "manifest");
    const KeywordIndex index = load_index(a.index);
    const auto entries = unique_images(load_manifest(a.manifest));
    const std::string dir = fs::path(a.manifest).parent_path().string();

    std::ostringstream lines;
    for (const auto& e : entries) {
        const auto ks = extract_keywords(load_features(dir, e), index, a.k);
        lines << json{{"image_id", e.image_id},
                      {"keywords", ks.keywords},
                      {"scores", ks.scores}}
                     .dump()
              << "\n";
    }
    write_text(a.out, lines.str());
    write_run_record(a.out + ".run.json", {{"command", "extract-keywords"},
                                           {"index", a.index},
                                           {"manifest", a.manifest},
                                           {"k", a.k},
                                           {"out", a.out}});
    std::cout << "wrote " << a.out << " (" << entries.size() << " images)\n";
}

// ---- synth-data -----------------------------------------------------------

struct SynthArgs {
    std::string spec;
    std::string out_dir;
    std::uint64_t seed = 0;
    std::size_t images = 0;
    bool has_seed = false;
    bool has_images = false;
};

void cmd_synth_data(const SynthArgs& a) {
    SyntheticSpec spec;
    if (!a.spec.empty()) {
        require_exists(a.spec, "spec");
        spec = load_synthetic_spec(a.spec);
    }
    if (a.has_seed) spec.seed = a.seed;
    if (a.has_images) spec.n_images = a.images;

    const std::string out_dir = output_rooted(a.out_dir);
    OutputLock lock(out_dir);
    const auto out = generate_synthetic(spec, out_dir);
    save_synthetic_spec((fs::path(out_dir) / "resolved_spec.json").string(), spec);
    std::cout << "wrote " << out.train_manifest << " (" << out.concepts.size() << " concepts, "
              << out.holdout.size() << " holdout)\n";
}

// ---- config-driven commands -----------------------------------------------

// Missing artifact paths default into the run's output directory so one
// config can drive the whole pipeline.
void default_artifact_paths(RunConfig& cfg) {
    const fs::path dir(cfg.output_dir);
    if (cfg.data.tokenizer.empty()) cfg.data.tokenizer = (dir / "tokenizer.json").string();
    if (cfg.data.dictionary.empty()) cfg.data.dictionary = (dir / "dictionary.tsv").string();
    if (cfg.data.index.empty()) cfg.data.index = (dir / "keywords.idx").string();
    if (cfg.train.checkpoint_path.empty())
        cfg.train.checkpoint_path = (dir / "model.ckpt").string();
    if (cfg.train.metrics_path.empty()) cfg.train.metrics_path = (dir / "metrics.jsonl").string();
    if (cfg.scst.checkpoint_path.empty())
        cfg.scst.checkpoint_path = (dir / "model_scst.ckpt").string();
    if (cfg.scst.metrics_path.empty())
        cfg.scst.metrics_path = (dir / "scst_metrics.jsonl").string();
}

SampleLoader make_loader(const RunConfig& cfg, const BpeTokenizer& tok,
                         const KeywordIndex& index) {
    return SampleLoader(fs::path(cfg.data.train_manifest).parent_path().string(), tok, index,
                        static_cast<std::size_t>(cfg.model.k_keywords),
                        default_indicator_mapping(),
                        static_cast<std::size_t>(cfg.model.max_len));
}

void cmd_train(RunConfig cfg) {
    if (cfg.output_dir.empty())
        throw_error(ErrorCategory::config, "train needs an output_dir");
    require_exists(cfg.data.train_manifest, "train_manifest");
    OutputLock lock(cfg.output_dir);
    default_artifact_paths(cfg);
    write_text((fs::path(cfg.output_dir) / "resolved_config.json").string(),
               cfg.to_json() + "\n");

    const BpeTokenizer tok = ensure_tokenizer(cfg);
    const KeywordIndex index = ensure_index(cfg);
    const SampleLoader loader = make_loader(cfg, tok, index);
    auto entries = load_manifest(cfg.data.train_manifest);
    BatchIterator stream({std::move(entries)}, {1.0},
                         static_cast<std::size_t>(cfg.train.batch_size), cfg.train.seed);

    ModelParams params = init_params(cfg.model, cfg.seed);
    const auto metrics = train(params, loader, stream, cfg.train);
    std::cout << "trained " << metrics.size() << " steps, final loss "
              << (metrics.empty() ? 0.0 : metrics.back().loss) << ", checkpoint "
              << cfg.train.checkpoint_path << "\n";
}

void cmd_finetune_scst(RunConfig cfg, std::string checkpoint) {
    if (cfg.output_dir.empty())
        throw_error(ErrorCategory::config, "finetune-scst needs an output_dir");
    require_exists(cfg.data.train_manifest, "train_manifest");
    OutputLock lock(cfg.output_dir);
    default_artifact_paths(cfg);
    if (checkpoint.empty()) checkpoint = cfg.train.checkpoint_path;
    require_exists(checkpoint, "checkpoint");
    write_text((fs::path(cfg.output_dir) / "resolved_config.json").string(),
               cfg.to_json() + "\n");

    ModelParams params = load_checkpoint(checkpoint);
    const BpeTokenizer tok = ensure_tokenizer(cfg);
    const KeywordIndex index = ensure_index(cfg);
    RunConfig loader_cfg = cfg;
    loader_cfg.model = params.config;
    const SampleLoader loader = make_loader(loader_cfg, tok, index);
    const auto samples = load_samples(cfg.data.train_manifest, loader);

    const RewardFn evaluator = make_cider_evaluator(samples, tok);
    const auto metrics = scst_finetune(params, samples, tok, evaluator, cfg.scst);
    std::cout << "finetuned " << metrics.size() << " steps, final reward "
              << (metrics.empty() ? 0.0 : metrics.back().cider) << ", checkpoint "
              << cfg.scst.checkpoint_path << "\n";
}

// ---- generate ---------------------------------------------------------------

struct GenerateArgs {
    std::string config;
    std::string checkpoint;
    std::string manifest;
    std::string tokenizer;
    std::string index;
    std::string indicator;
    std::string out;
    std::string strategy;
    int beam_size = 0;
    int max_len = -1;
    double length_penalty = -1.0;
};

void cmd_generate(const GenerateArgs& a) {
    RunConfig cfg;
    if (!a.config.empty()) cfg = RunConfig::load(a.config);
    if (!cfg.output_dir.empty()) default_artifact_paths(cfg);
    std::string checkpoint = a.checkpoint.empty() ? cfg.train.checkpoint_path : a.checkpoint;
    std::string manifest = a.manifest.empty() ? cfg.data.eval_manifest : a.manifest;
    std::string tokenizer = a.tokenizer.empty() ? cfg.data.tokenizer : a.tokenizer;
    std::string index_path = a.index.empty() ? cfg.data.index : a.index;
    const std::string indicator = a.indicator.empty() ? cfg.indicator : a.indicator;

    DecodeConfig dcfg = cfg.decode;
    if (!a.strategy.empty()) dcfg.strategy = strategy_from_name(a.strategy);
    if (a.beam_size > 0) dcfg.beam_size = a.beam_size;
    if (a.max_len >= 0) dcfg.max_len = a.max_len;
    if (a.length_penalty >= 0.0) dcfg.length_penalty = a.length_penalty;
    dcfg.validate();

    require_exists(checkpoint, "checkpoint");
    require_exists(manifest, "manifest");
    require_exists(tokenizer, "tokenizer");
    require_exists(index_path, "index");
    const Style style = style_from_name(indicator);

    const ModelParams params = load_checkpoint(checkpoint);
    const BpeTokenizer tok = BpeTokenizer::load(tokenizer);
    const KeywordIndex index = load_index(index_path);
    const auto entries = unique_images(load_manifest(manifest));
    const std::string dir = fs::path(manifest).parent_path().string();
    const std::size_t k = static_cast<std::size_t>(params.config.k_keywords);

    std::ostringstream lines;
    for (const auto& e : entries) {
        const Eigen::MatrixXf visual = load_features(dir, e);
        const auto keywords = extract_keywords(visual, index, k);
        const auto result = generate(params, visual, keywords, StyleIndicator{style}, tok, dcfg);
        lines << json{{"image_id", e.image_id},
                      {"caption", result.caption},
                      {"score", result.score},
                      {"indicator", indicator}}
                     .dump()
              << "\n";
    }
    write_text(a.out, lines.str());
    write_run_record(a.out + ".run.json",
                     {{"command", "generate"},
                      {"checkpoint", checkpoint},
                      {"manifest", manifest},
                      {"tokenizer", tokenizer},
                      {"index", index_path},
                      {"indicator", indicator},
                      {"decode",
                       {{"strategy", strategy_name(dcfg.strategy)},
                        {"beam_size", dcfg.beam_size},
                        {"max_len", dcfg.max_len},
                        {"length_penalty", dcfg.length_penalty}}},
                      {"out", a.out}});
    std::cout << "wrote " << a.out << " (" << entries.size() << " captions)\n";
}

// ---- evaluate ---------------------------------------------------------------

struct EvaluateArgs {
    std::string candidates;
    std::string references;
    std::string out_dir;
    std::string synonyms;
    std::string markers;
    std::string gazetteer;
    std::string corpus;
    std::int64_t tail_threshold = 1;
};

std::unordered_map<std::string, std::string> load_candidate_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw_error(ErrorCategory::io, "cannot open candidates: " + path);
    std::unordered_map<std::string, std::string> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json doc;
        try {
            doc = json::parse(line);
        } catch (const json::exception& e) {
            throw_error(ErrorCategory::data, "bad candidate line " + std::to_string(lineno) +
                                                 ": " + e.what());
        }
        if (!doc.contains("image_id") || !doc.contains("caption"))
            throw_error(ErrorCategory::data, "candidate line " + std::to_string(lineno) +
                                                 " needs image_id and caption");
        out[doc["image_id"].get<std::string>()] = doc["caption"].get<std::string>();
    }
    return out;
}

std::unordered_map<std::string, std::int64_t> word_counts_from_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw_error(ErrorCategory::io, "cannot open corpus: " + path);
    std::unordered_map<std::string, std::int64_t> counts;
    std::string line;
    while (std::getline(in, line))
        for (const auto& w : split_unigrams(line)) ++counts[w];
    return counts;
}

void cmd_evaluate(const EvaluateArgs& a) {
    require_exists(a.candidates, "candidates");
    require_exists(a.references, "references");
    const std::string out_dir = output_rooted(a.out_dir);
    OutputLock lock(out_dir);

    auto items = load_eval_items(a.references);
    const auto candidates = load_candidate_lines(a.candidates);
    for (auto& item : items) {
        const auto it = candidates.find(item.image_id);
        if (it == candidates.end())
            throw_error(ErrorCategory::data, "no candidate for image '" + item.image_id + "'");
        item.candidate = it->second;
    }

    const CiderResult cider = cider_d(items);
    json report = {{"cider", cider.mean}, {"n_images", items.size()}};
    json per_image = json::array();
    for (std::size_t i = 0; i < items.size(); ++i)
        per_image.push_back({{"image_id", items[i].image_id}, {"cider", cider.per_image[i]}});
    report["per_image"] = per_image;

    std::ostringstream text;
    text << "images      " << items.size() << "\n";
    text << "cider       " << cider.mean << "\n";

    SynonymTable synonyms;
    if (!a.synonyms.empty()) {
        require_exists(a.synonyms, "synonyms");
        synonyms = load_synonyms(a.synonyms);
    }
    double cover_sum = 0.0;
    std::size_t labeled = 0;
    for (const auto& item : items) {
        if (item.labels.empty()) continue;
        cover_sum += coverage(item.candidate, item.labels, synonyms);
        ++labeled;
    }
    if (labeled > 0) {
        const double cover = cover_sum / static_cast<double>(labeled);
        report["coverage"] = cover;
        text << "coverage    " << cover << "\n";
    }

    std::vector<std::string> captions;
    captions.reserve(items.size());
    for (const auto& item : items) captions.push_back(item.candidate);

    if (!a.markers.empty()) {
        require_exists(a.markers, "markers");
        const auto compliance = style_compliance(captions, load_markers(a.markers));
        report["compliance"] = {{"hc", compliance.hc}, {"mc", compliance.mc}};
        text << "hc_compliance " << compliance.hc << "\n";
        text << "mc_compliance " << compliance.mc << "\n";
    }

    if (!a.corpus.empty()) {
        require_exists(a.corpus, "corpus");
        std::set<std::string> gazetteer;
        if (!a.gazetteer.empty()) {
            require_exists(a.gazetteer, "gazetteer");
            for (const auto& w : load_blocklist(a.gazetteer)) gazetteer.insert(w);
        }
        const auto stats = long_tail_stats(captions, word_counts_from_corpus(a.corpus),
                                           a.tail_threshold, gazetteer);
        report["long_tail"] = {{"novel_words", stats.novel_word_count},
                               {"named_entities", stats.named_entity_count}};
        text << "novel_words " << stats.novel_word_count << "\n";
        text << "named_entities " << stats.named_entity_count << "\n";
    }

    write_text((fs::path(out_dir) / "report.json").string(), report.dump(2) + "\n");
    write_text((fs::path(out_dir) / "report.txt").string(), text.str());
    write_run_record((fs::path(out_dir) / "report.run.json").string(),
                     {{"command", "evaluate"},
                      {"candidates", a.candidates},
                      {"references", a.references},
                      {"synonyms", a.synonyms},
                      {"markers", a.markers},
                      {"gazetteer", a.gazetteer},
                      {"corpus", a.corpus},
                      {"tail_threshold", a.tail_threshold}});
    std::cout << "cider " << cider.mean << " over " << items.size() << " images, report in "
              << out_dir << "\n";
}

// ---- ablate -----------------------------------------------------------------

void cmd_ablate(RunConfig cfg) {
    if (cfg.output_dir.empty())
        throw_error(ErrorCategory::config, "ablate needs an output_dir");
    OutputLock lock(cfg.output_dir);
    default_artifact_paths(cfg);
    write_text((fs::path(cfg.output_dir) / "resolved_config.json").string(),
               cfg.to_json() + "\n");

    const AblationRun run = run_ablation(cfg);
    write_text((fs::path(cfg.output_dir) / "ablation.json").string(),
               run.report.to_json() + "\n");
    write_text((fs::path(cfg.output_dir) / "ablation.txt").string(), run.report.to_text());
    std::cout << run.report.to_text();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"content-style separated image captioning pipeline"};
    app.require_subcommand(0, 1);
    std::function<void()> action;

    BuildVocabArgs vocab_args;
    auto* sc_vocab = app.add_subcommand("build-vocab", "count corpus unigrams into a dictionary");
    sc_vocab->add_option("--corpus", vocab_args.corpus, "text corpus, one caption per line")
        ->required();
    sc_vocab->add_option("--limit", vocab_args.limit, "max dictionary entries");
    sc_vocab->add_option("--blocklist", vocab_args.blocklist, "person-name blocklist file");
    sc_vocab->add_option("--out", vocab_args.out, "dictionary output path")->required();
    sc_vocab->callback([&] { action = [&] { cmd_build_vocab(vocab_args); }; });

    IndexArgs index_args;
    auto* sc_index = app.add_subcommand("index-keywords", "embed a dictionary into an index");
    sc_index->add_option("--dictionary", index_args.dictionary, "dictionary file")->required();
    sc_index->add_option("--model", index_args.model_spec, "embedding model spec");
    sc_index->add_option("--out", index_args.out, "index output path")->required();
    sc_index->callback([&] { action = [&] { cmd_index_keywords(index_args); }; });

    ExtractArgs extract_args;
    auto* sc_extract = app.add_subcommand("extract-keywords", "top-k keywords per image");
    sc_extract->add_option("--index", extract_args.index, "keyword index file")->required();
    sc_extract->add_option("--manifest", extract_args.manifest, "image manifest")->required();
    sc_extract->add_option("--k", extract_args.k, "keywords per image");
    sc_extract->add_option("--out", extract_args.out, "JSON-lines output path")->required();
    sc_extract->callback([&] { action = [&] { cmd_extract_keywords(extract_args); }; });

    SynthArgs synth_args;
    auto* sc_synth = app.add_subcommand("synth-data", "generate the synthetic two-style corpus");
    sc_synth->add_option("--spec", synth_args.spec, "spec JSON (defaults when omitted)");
    sc_synth->add_option("--out-dir", synth_args.out_dir, "output directory")->required();
    auto* seed_opt = sc_synth->add_option("--seed", synth_args.seed, "override spec seed");
    auto* img_opt = sc_synth->add_option("--images", synth_args.images, "override image count");
    sc_synth->callback([&, seed_opt, img_opt] {
        synth_args.has_seed = seed_opt->count() > 0;
        synth_args.has_images = img_opt->count() > 0;
        action = [&] { cmd_synth_data(synth_args); };
    });

    // shared config/override plumbing for the config-driven commands
    struct ConfigOverrides {
        std::string config;
        std::string output_dir;
        std::uint64_t seed = 0;
        int steps = 0;
        int batch_size = 0;
        CLI::Option* out_opt = nullptr;
        CLI::Option* seed_opt = nullptr;
        CLI::Option* steps_opt = nullptr;
        CLI::Option* batch_opt = nullptr;
    };
    auto add_config_options = [](CLI::App* sub, ConfigOverrides& o) {
        sub->add_option("--config", o.config, "run config JSON")->required();
        o.out_opt = sub->add_option("--output-dir", o.output_dir, "override output directory");
        o.seed_opt = sub->add_option("--seed", o.seed, "override model seed");
        o.steps_opt = sub->add_option("--steps", o.steps, "override step count");
        o.batch_opt = sub->add_option("--batch-size", o.batch_size, "override batch size");
    };
    auto load_with_overrides = [](const ConfigOverrides& o, bool scst) {
        RunConfig cfg = RunConfig::load(o.config);
        if (o.out_opt->count()) cfg.output_dir = o.output_dir;
        if (o.seed_opt->count()) cfg.seed = o.seed;
        if (o.steps_opt->count()) (scst ? cfg.scst.total_steps : cfg.train.total_steps) = o.steps;
        if (o.batch_opt->count())
            (scst ? cfg.scst.batch_size : cfg.train.batch_size) = o.batch_size;
        cfg.resolve_paths(fs::current_path().string());
        return cfg;
    };

    ConfigOverrides train_over;
    auto* sc_train = app.add_subcommand("train", "language-model training run");
    add_config_options(sc_train, train_over);
    sc_train->callback(
        [&] { action = [&] { cmd_train(load_with_overrides(train_over, false)); }; });

    ConfigOverrides scst_over;
    std::string scst_checkpoint;
    auto* sc_scst = app.add_subcommand("finetune-scst", "reward fine-tuning from a checkpoint");
    add_config_options(sc_scst, scst_over);
    sc_scst->add_option("--checkpoint", scst_checkpoint, "starting checkpoint");
    sc_scst->callback([&] {
        action = [&] { cmd_finetune_scst(load_with_overrides(scst_over, true), scst_checkpoint); };
    });

    GenerateArgs gen_args;
    auto* sc_gen = app.add_subcommand("generate", "decode captions for a manifest");
    sc_gen->add_option("--config", gen_args.config, "run config JSON for defaults");
    sc_gen->add_option("--checkpoint", gen_args.checkpoint, "model checkpoint");
    sc_gen->add_option("--manifest", gen_args.manifest, "image manifest");
    sc_gen->add_option("--tokenizer", gen_args.tokenizer, "tokenizer file");
    sc_gen->add_option("--index", gen_args.index, "keyword index file");
    sc_gen->add_option("--indicator", gen_args.indicator, "style indicator: hc or mc");
    sc_gen->add_option("--strategy", gen_args.strategy, "greedy or beam");
    sc_gen->add_option("--beam-size", gen_args.beam_size, "beam width");
    sc_gen->add_option("--max-len", gen_args.max_len, "decode length cap (0 = model max)");
    sc_gen->add_option("--length-penalty", gen_args.length_penalty, "score normalization power");
    sc_gen->add_option("--out", gen_args.out, "caption JSON-lines output")->required();
    sc_gen->callback([&] { action = [&] { cmd_generate(gen_args); }; });

    EvaluateArgs eval_args;
    auto* sc_eval = app.add_subcommand("evaluate", "score a caption file against references");
    sc_eval->add_option("--candidates", eval_args.candidates, "caption JSON-lines")->required();
    sc_eval->add_option("--references", eval_args.references, "reference JSON-lines")->required();
    sc_eval->add_option("--out-dir", eval_args.out_dir, "report directory")->required();
    sc_eval->add_option("--synonyms", eval_args.synonyms, "synonym table JSON");
    sc_eval->add_option("--markers", eval_args.markers, "style marker JSON");
    sc_eval->add_option("--gazetteer", eval_args.gazetteer, "named-entity word list");
    sc_eval->add_option("--corpus", eval_args.corpus, "base corpus for long-tail counts");
    sc_eval->add_option("--tail-threshold", eval_args.tail_threshold,
                        "novel = base count below this");
    sc_eval->callback([&] { action = [&] { cmd_evaluate(eval_args); }; });

    ConfigOverrides ablate_over;
    auto* sc_ablate = app.add_subcommand("ablate", "three-arm conditioning comparison");
    add_config_options(sc_ablate, ablate_over);
    sc_ablate->callback(
        [&] { action = [&] { cmd_ablate(load_with_overrides(ablate_over, false)); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error: argument: " << e.what() << "\n";
        return static_cast<int>(ErrorCategory::argument);
    }

    if (!action) {
        std::cerr << "error: argument: no subcommand given\n";
        return static_cast<int>(ErrorCategory::argument);
    }
    try {
        action();
    } catch (const Error& e) {
        std::cerr << "error: " << error_category_name(e.category()) << ": " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: state: " << e.what() << "\n";
        return static_cast<int>(ErrorCategory::state);
    }
    return 0;
}
