#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace pivotcap {

struct EvalItem {
    std::string image_id;
    std::string candidate;
    std::vector<std::string> references;
    std::vector<std::string> labels;
};

// JSON-lines {image_id, references: [...], labels: [...], candidate?}.
std::vector<EvalItem> load_eval_items(const std::string& path);
void save_eval_items(const std::string& path, const std::vector<EvalItem>& items);

// Lowercased whitespace tokens; the metric-side tokenizer.
std::vector<std::string> metric_tokens(const std::string& text);

// CIDEr-D over a fixed reference corpus. The document-frequency table counts
// each n-gram once per image (over that image's whole reference set) and the
// idf is log(N) - log(max(1, df)). Candidate tf-idf entries are min-clipped
// against the reference before the dot product, and a Gaussian penalty on
// the length difference (parameter sigma) damps each n-gram order. Scores
// average over n = 1..n_max, then over references, and scale by 10.
class CiderScorer {
public:
    CiderScorer(std::vector<std::vector<std::string>> reference_sets, int n_max = 4,
                double sigma = 6.0);

    double score(const std::string& candidate, std::size_t image_index) const;
    std::size_t corpus_size() const { return refs_.size(); }

private:
    struct SentenceStats {
        std::vector<std::unordered_map<std::string, double>> vec; // tf-idf per n
        std::vector<double> norm;
        int length = 0; // unigram count
    };
    SentenceStats stats_for(const std::vector<std::string>& tokens) const;
    double similarity(const SentenceStats& hyp, const SentenceStats& ref) const;

    int n_max_;
    double sigma_;
    std::vector<std::vector<std::vector<std::string>>> refs_; // [image][ref] -> tokens
    std::unordered_map<std::string, double> doc_freq_;
    double log_corpus_ = 0.0;
};

struct CiderResult {
    std::vector<double> per_image;
    double mean = 0.0;
};

CiderResult cider_d(const std::vector<EvalItem>& corpus, int n_max = 4, double sigma = 6.0);

using SynonymTable = std::map<std::string, std::vector<std::string>>;

SynonymTable load_synonyms(const std::string& path); // JSON {word: [synonyms...]}

// Fraction of labels present in the caption verbatim or through a listed
// synonym; matching is on lowercased word boundaries.
double coverage(const std::string& caption, const std::vector<std::string>& labels,
                const SynonymTable& synonyms);

struct LongTailStats {
    std::size_t novel_word_count = 0;
    std::size_t named_entity_count = 0;
};

LongTailStats long_tail_stats(const std::vector<std::string>& captions,
                              const std::unordered_map<std::string, std::int64_t>& base_counts,
                              std::int64_t threshold, const std::set<std::string>& gazetteer);

struct StyleMarkers {
    std::vector<std::string> hc;
    std::vector<std::string> mc;
};

StyleMarkers load_markers(const std::string& path); // JSON {hc: [...], mc: [...]}

// A caption complies with a style when it contains at least one of that
// style's markers and none of the other style's. Mixed captions comply with
// neither.
struct ComplianceResult {
    double hc = 0.0;
    double mc = 0.0;
};

ComplianceResult style_compliance(const std::vector<std::string>& captions,
                                  const StyleMarkers& markers);

struct VariantResult {
    std::string name;
    std::string corpus_id; // all variants must share one evaluation corpus
    double cider = 0.0;
    double coverage = 0.0;
    double compliance = 0.0;
};

// Comparison across variants in input order with deltas against the first
// row. to_json() is machine-readable; to_text() is an aligned-column table.
struct AblationReport {
    std::vector<VariantResult> variants;

    std::string to_json() const;
    std::string to_text() const;
};

AblationReport ablation_report(const std::vector<VariantResult>& variants);

} // namespace pivotcap
