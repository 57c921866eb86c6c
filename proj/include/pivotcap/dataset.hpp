#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pivotcap/bpe.hpp"
#include "pivotcap/keyword_index.hpp"
#include "pivotcap/rng.hpp"

namespace pivotcap {

// The observable style variable: exactly two values at training time, each
// backed by its own learnable embedding row.
enum class Style { human_collected = 0, machine_collected = 1 };

struct StyleIndicator {
    Style value = Style::human_collected;

    int embedding_index() const { return static_cast<int>(value); }
    bool operator==(const StyleIndicator&) const = default;
};

const char* style_name(Style s);
Style style_from_name(const std::string& name);

using IndicatorMapping = std::map<std::string, Style>;

// coco/flickr30k/openimages -> HC, sbu/wit/cc3m/cc12m/yfcc100m -> MC, plus
// the synthetic tags synth_hc/synth_mc.
IndicatorMapping default_indicator_mapping();

StyleIndicator assign_indicator(const std::string& source_tag, const IndicatorMapping& mapping);

// One manifest row. features_path is relative to the manifest's directory.
struct ManifestEntry {
    std::string image_id;
    std::string features_path;
    std::string caption;
    std::string source_tag;
    std::string split;
};

std::vector<ManifestEntry> load_manifest(const std::string& path);
void save_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

// The training quadruple plus provenance. caption is bos ... eos;
// keyword_tokens is the keywords' token ids concatenated in retrieval order.
struct CaptionSample {
    std::string image_id;
    Eigen::MatrixXf visual;
    TokenSequence caption;
    KeywordSet keywords;
    TokenSequence keyword_tokens;
    StyleIndicator indicator;
    std::string source_tag;
};

// Concatenated token ids of the keywords, preserving retrieval order.
TokenSequence encode_keywords(const BpeTokenizer& tokenizer,
                              const std::vector<std::string>& keywords);

// Materializes manifest entries: reads the feature grid, retrieves keywords,
// tokenizes and wraps the caption (truncated to max_len with end-of-sequence
// re-appended).
class SampleLoader {
public:
    SampleLoader(std::string manifest_dir, const BpeTokenizer& tokenizer,
                 const KeywordIndex& index, std::size_t k, IndicatorMapping mapping,
                 std::size_t max_len);

    CaptionSample load(const ManifestEntry& entry) const;

private:
    std::string manifest_dir_;
    const BpeTokenizer& tokenizer_;
    const KeywordIndex& index_;
    std::size_t k_;
    IndicatorMapping mapping_;
    std::size_t max_len_;
};

// Seeded weighted sampler over several manifest sources. Each source runs
// its own shuffled epoch stream; with a single positive-weight source an
// epoch covers every sample exactly once before repeating.
class BatchIterator {
public:
    BatchIterator(std::vector<std::vector<ManifestEntry>> sources, std::vector<double> weights,
                  std::size_t batch_size, std::uint64_t seed);

    std::vector<ManifestEntry> next();

private:
    const ManifestEntry& draw();

    std::vector<std::vector<ManifestEntry>> sources_;
    std::vector<double> weights_;
    double weight_sum_ = 0.0;
    std::size_t batch_size_;
    std::vector<std::vector<std::size_t>> orders_;
    std::vector<std::size_t> cursors_;
    Rng rng_;
};

// Captions padded to the longest in the batch; pad_mask marks real tokens.
struct Batch {
    std::vector<CaptionSample> samples;
    std::vector<std::vector<bool>> pad_mask;
    std::size_t caption_len = 0;
};

Batch pad_batch(std::vector<CaptionSample> samples);

} // namespace pivotcap
