#include "pivotcap/pipeline.hpp"

#include <filesystem>
#include <unordered_map>
#include <unordered_set>

#include "pivotcap/embedding.hpp"
#include "pivotcap/error.hpp"
#include "pivotcap/inference.hpp"
#include "pivotcap/matio.hpp"
#include "pivotcap/trainer.hpp"
#include "pivotcap/vocab.hpp"

namespace pivotcap {

namespace {

std::string parent_dir(const std::string& path) {
    return std::filesystem::path(path).parent_path().string();
}

} // namespace

BpeTokenizer ensure_tokenizer(const RunConfig& cfg) {
    const std::string& path = cfg.data.tokenizer;
    if (!path.empty() && std::filesystem::exists(path)) return BpeTokenizer::load(path);
    if (cfg.data.corpus.empty())
        throw_error(ErrorCategory::config, "no tokenizer file and no corpus to train one from");
    BpeTokenizer tok = BpeTokenizer::train(line_source_from_file(cfg.data.corpus),
                                           static_cast<std::size_t>(cfg.model.bpe_vocab));
    if (!path.empty()) tok.save(path);
    return tok;
}

KeywordIndex ensure_index(const RunConfig& cfg) {
    if (!cfg.data.index.empty() && std::filesystem::exists(cfg.data.index))
        return load_index(cfg.data.index);

    KeywordDictionary dict;
    if (!cfg.data.dictionary.empty() && std::filesystem::exists(cfg.data.dictionary)) {
        dict = load_dictionary(cfg.data.dictionary);
    } else {
        if (cfg.data.corpus.empty())
            throw_error(ErrorCategory::config, "no index, dictionary or corpus configured");
        std::unordered_set<std::string> blocked;
        if (!cfg.data.blocklist.empty()) blocked = load_blocklist(cfg.data.blocklist);
        dict = build_keyword_dictionary(line_source_from_file(cfg.data.corpus),
                                        static_cast<std::size_t>(cfg.data.vocab_limit), blocked);
        if (!cfg.data.dictionary.empty()) save_dictionary(cfg.data.dictionary, dict);
    }

    const auto model = make_embedding_model(cfg.data.embed_spec);
    KeywordIndex index = build_index(dict, *model);
    if (!cfg.data.index.empty() && !cfg.data.dictionary.empty()) {
        std::error_code ec;
        const auto rel = std::filesystem::relative(
            std::filesystem::absolute(cfg.data.dictionary),
            std::filesystem::absolute(cfg.data.index).parent_path(), ec);
        index.dictionary_path =
            (ec || rel.empty())
                ? std::filesystem::absolute(cfg.data.dictionary).lexically_normal().string()
                : rel.string();
        save_index(index, cfg.data.index);
    } else {
        index.dictionary_path = cfg.data.dictionary;
    }
    return index;
}

std::vector<CaptionSample> load_samples(const std::string& manifest_path,
                                        const SampleLoader& loader) {
    std::vector<CaptionSample> samples;
    for (const auto& entry : load_manifest(manifest_path)) samples.push_back(loader.load(entry));
    return samples;
}

void apply_variant(std::vector<CaptionSample>& samples, const VariantSpec& spec) {
    for (auto& s : samples) {
        if (!spec.use_keywords) {
            s.keywords = KeywordSet{};
            s.keyword_tokens.clear();
        }
        if (!spec.use_indicator) s.indicator = StyleIndicator{Style::human_collected};
    }
}

std::vector<EvalItem> generate_candidates(const ModelParams& params,
                                          const BpeTokenizer& tokenizer,
                                          const KeywordIndex& index,
                                          const std::string& manifest_path,
                                          const std::string& refs_path, bool use_keywords,
                                          StyleIndicator indicator, const DecodeConfig& dcfg) {
    const auto entries = load_manifest(manifest_path);
    const std::string dir = parent_dir(manifest_path);
    std::unordered_map<std::string, const ManifestEntry*> by_id;
    for (const auto& e : entries) by_id.emplace(e.image_id, &e);

    std::vector<EvalItem> items = load_eval_items(refs_path);
    const std::size_t k = static_cast<std::size_t>(params.config.k_keywords);
    for (auto& item : items) {
        const auto it = by_id.find(item.image_id);
        if (it == by_id.end())
            throw_error(ErrorCategory::data,
                        "no manifest entry for image '" + item.image_id + "'");
        const Eigen::MatrixXf visual = read_matrix_file(
            (std::filesystem::path(dir) / it->second->features_path).string());
        KeywordSet keywords;
        if (use_keywords) keywords = extract_keywords(visual, index, k);
        item.candidate =
            generate(params, visual, keywords, indicator, tokenizer, dcfg).caption;
    }
    return items;
}

VariantScores score_candidates(const std::vector<EvalItem>& items, const SynonymTable& synonyms,
                               const StyleMarkers& markers) {
    VariantScores out;
    out.cider = cider_d(items).mean;

    double cover_sum = 0.0;
    std::size_t labeled = 0;
    std::vector<std::string> captions;
    captions.reserve(items.size());
    for (const auto& item : items) {
        captions.push_back(item.candidate);
        if (item.labels.empty()) continue;
        cover_sum += coverage(item.candidate, item.labels, synonyms);
        ++labeled;
    }
    if (labeled > 0) out.coverage = cover_sum / static_cast<double>(labeled);
    out.compliance = style_compliance(captions, markers);
    return out;
}

AblationRun run_ablation(const RunConfig& cfg) {
    if (cfg.data.train_manifest.empty() || cfg.data.eval_manifest.empty() ||
        cfg.data.eval_refs.empty())
        throw_error(ErrorCategory::config,
                    "ablation needs train_manifest, eval_manifest and eval_refs");

    const BpeTokenizer tokenizer = ensure_tokenizer(cfg);
    const KeywordIndex index = ensure_index(cfg);
    const SampleLoader loader(parent_dir(cfg.data.train_manifest), tokenizer, index,
                              static_cast<std::size_t>(cfg.model.k_keywords),
                              default_indicator_mapping(),
                              static_cast<std::size_t>(cfg.model.max_len));
    const std::vector<CaptionSample> base = load_samples(cfg.data.train_manifest, loader);

    SynonymTable synonyms;
    if (!cfg.data.synonyms.empty()) synonyms = load_synonyms(cfg.data.synonyms);
    StyleMarkers markers;
    if (!cfg.data.markers.empty()) markers = load_markers(cfg.data.markers);

    AblationRun run;
    run.variants = {{"no_keywords", false, false},
                    {"keywords", true, false},
                    {"keywords_indicator", true, true}};

    TrainConfig tcfg = cfg.train;
    tcfg.checkpoint_path.clear();
    tcfg.metrics_path.clear();

    std::vector<VariantResult> results;
    for (const auto& variant : run.variants) {
        std::vector<CaptionSample> samples = base;
        apply_variant(samples, variant);
        ModelParams params = init_params(cfg.model, cfg.seed);
        train_in_memory(params, samples, tcfg);

        const auto items = generate_candidates(
            params, tokenizer, index, cfg.data.eval_manifest, cfg.data.eval_refs,
            variant.use_keywords, StyleIndicator{Style::human_collected}, cfg.decode);
        const VariantScores scores = score_candidates(items, synonyms, markers);

        VariantResult row;
        row.name = variant.name;
        row.corpus_id = cfg.data.eval_refs;
        row.cider = scores.cider;
        row.coverage = scores.coverage;
        row.compliance = scores.compliance.hc;
        results.push_back(row);
        run.models.push_back(std::move(params));
    }
    run.report = ablation_report(results);
    return run;
}

} // namespace pivotcap
