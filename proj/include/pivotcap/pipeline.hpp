#pragma once

#include <string>
#include <vector>

#include "pivotcap/dataset.hpp"
#include "pivotcap/evaluation.hpp"
#include "pivotcap/run_config.hpp"

namespace pivotcap {

// Loads the configured tokenizer, training it from the corpus (and saving
// it back) when the file does not exist yet.
BpeTokenizer ensure_tokenizer(const RunConfig& cfg);

// Load-or-build for the keyword index: an existing index file wins,
// otherwise the dictionary (itself built from the corpus when missing) is
// embedded with the configured model. Built artifacts are saved to their
// configured paths.
KeywordIndex ensure_index(const RunConfig& cfg);

// Materializes every manifest row through the loader.
std::vector<CaptionSample> load_samples(const std::string& manifest_path,
                                        const SampleLoader& loader);

// An ablation arm: which conditioning signals the model sees.
struct VariantSpec {
    std::string name;
    bool use_keywords = true;
    bool use_indicator = true;
};

// Strips disabled conditioning in place: keywords are emptied and the
// indicator collapses to the human-collected row.
void apply_variant(std::vector<CaptionSample>& samples, const VariantSpec& spec);

// Decodes one caption per reference item. Every item must have a manifest
// entry (first row per image id wins); features resolve relative to the
// manifest's directory.
std::vector<EvalItem> generate_candidates(const ModelParams& params,
                                          const BpeTokenizer& tokenizer,
                                          const KeywordIndex& index,
                                          const std::string& manifest_path,
                                          const std::string& refs_path, bool use_keywords,
                                          StyleIndicator indicator, const DecodeConfig& dcfg);

struct VariantScores {
    double cider = 0.0;
    double coverage = 0.0; // mean over items that carry labels
    ComplianceResult compliance;
};

VariantScores score_candidates(const std::vector<EvalItem>& items, const SynonymTable& synonyms,
                               const StyleMarkers& markers);

struct AblationRun {
    std::vector<VariantSpec> variants;
    std::vector<ModelParams> models; // one per variant, same order
    AblationReport report;
};

// Trains the three standard arms (no keywords, keywords, keywords plus true
// indicator) from identical initial weights, then scores human-style
// generations over the eval manifest. The compliance column reports the
// human-style rate.
AblationRun run_ablation(const RunConfig& cfg);

} // namespace pivotcap
