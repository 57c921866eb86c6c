#include "pivotcap/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "pivotcap/error.hpp"
#include "pivotcap/matio.hpp"

namespace pivotcap {

const char* style_name(Style s) {
    return s == Style::human_collected ? "hc" : "mc";
}

Style style_from_name(const std::string& name) {
    if (name == "hc" || name == "human_collected") return Style::human_collected;
    if (name == "mc" || name == "machine_collected") return Style::machine_collected;
    throw_error(ErrorCategory::argument, "unknown style '" + name + "' (expected hc or mc)");
}

IndicatorMapping default_indicator_mapping() {
    return {
        {"coco", Style::human_collected},
        {"flickr30k", Style::human_collected},
        {"openimages", Style::human_collected},
        {"sbu", Style::machine_collected},
        {"wit", Style::machine_collected},
        {"cc3m", Style::machine_collected},
        {"cc12m", Style::machine_collected},
        {"yfcc100m", Style::machine_collected},
        {"synth_hc", Style::human_collected},
        {"synth_mc", Style::machine_collected},
    };
}

StyleIndicator assign_indicator(const std::string& source_tag, const IndicatorMapping& mapping) {
    auto it = mapping.find(source_tag);
    if (it == mapping.end()) {
        std::string known;
        for (const auto& [tag, style] : mapping) {
            if (!known.empty()) known += ", ";
            known += tag;
        }
        throw_error(ErrorCategory::config,
                    "unknown source tag '" + source_tag + "' (known: " + known + ")");
    }
    return StyleIndicator{it->second};
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw_error(ErrorCategory::io, "cannot open manifest: " + path);
    std::vector<ManifestEntry> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
            ManifestEntry e;
            e.image_id = obj.at("image_id").get<std::string>();
            e.features_path = obj.at("features_path").get<std::string>();
            e.caption = obj.at("caption").get<std::string>();
            e.source_tag = obj.at("source_tag").get<std::string>();
            e.split = obj.value("split", "");
            entries.push_back(std::move(e));
        } catch (const nlohmann::json::exception& ex) {
            throw_error(ErrorCategory::data,
                        path + ":" + std::to_string(lineno) + ": " + ex.what());
        }
    }
    return entries;
}

void save_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream out(path);
    if (!out) throw_error(ErrorCategory::io, "cannot open for writing: " + path);
    for (const auto& e : entries) {
        nlohmann::json obj = {{"image_id", e.image_id},
                              {"features_path", e.features_path},
                              {"caption", e.caption},
                              {"source_tag", e.source_tag},
                              {"split", e.split}};
        out << obj.dump() << '\n';
    }
    if (!out) throw_error(ErrorCategory::io, "write failed: " + path);
}

SampleLoader::SampleLoader(std::string manifest_dir, const BpeTokenizer& tokenizer,
                           const KeywordIndex& index, std::size_t k, IndicatorMapping mapping,
                           std::size_t max_len)
    : manifest_dir_(std::move(manifest_dir)),
      tokenizer_(tokenizer),
      index_(index),
      k_(k),
      mapping_(std::move(mapping)),
      max_len_(max_len) {
    if (k_ < 1) throw_error(ErrorCategory::config, "keyword count must be >= 1");
    if (max_len_ < 2) throw_error(ErrorCategory::config, "max_len must be >= 2");
}

TokenSequence encode_keywords(const BpeTokenizer& tokenizer,
                              const std::vector<std::string>& keywords) {
    TokenSequence out;
    for (const std::string& kw : keywords) {
        const TokenSequence ids = tokenizer.encode(kw);
        out.insert(out.end(), ids.begin(), ids.end());
    }
    return out;
}

CaptionSample SampleLoader::load(const ManifestEntry& entry) const {
    CaptionSample s;
    s.image_id = entry.image_id;
    std::filesystem::path fp(entry.features_path);
    if (fp.is_relative()) fp = std::filesystem::path(manifest_dir_) / fp;
    s.visual = read_matrix_file(fp.string());
    s.keywords = extract_keywords(s.visual, index_, k_);
    s.keyword_tokens = encode_keywords(tokenizer_, s.keywords.keywords);
    s.indicator = assign_indicator(entry.source_tag, mapping_);
    s.source_tag = entry.source_tag;

    TokenSequence body = tokenizer_.encode(entry.caption);
    // bos + body + eos capped at max_len, eos always present
    if (body.size() > max_len_ - 2) body.resize(max_len_ - 2);
    s.caption.reserve(body.size() + 2);
    s.caption.push_back(BpeTokenizer::kBosId);
    s.caption.insert(s.caption.end(), body.begin(), body.end());
    s.caption.push_back(BpeTokenizer::kEosId);
    return s;
}

BatchIterator::BatchIterator(std::vector<std::vector<ManifestEntry>> sources,
                             std::vector<double> weights, std::size_t batch_size,
                             std::uint64_t seed)
    : sources_(std::move(sources)),
      weights_(std::move(weights)),
      batch_size_(batch_size),
      rng_(seed) {
    if (sources_.size() != weights_.size())
        throw_error(ErrorCategory::argument, "sources/weights size mismatch");
    if (batch_size_ < 1) throw_error(ErrorCategory::argument, "batch_size must be >= 1");
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        if (weights_[i] < 0.0)
            throw_error(ErrorCategory::argument, "negative source weight");
        if (weights_[i] > 0.0 && sources_[i].empty())
            throw_error(ErrorCategory::data,
                        "source " + std::to_string(i) + " has positive weight but no samples");
        weight_sum_ += weights_[i];
    }
    if (weight_sum_ <= 0.0)
        throw_error(ErrorCategory::argument, "at least one source weight must be positive");
    orders_.resize(sources_.size());
    cursors_.assign(sources_.size(), 0);
}

const ManifestEntry& BatchIterator::draw() {
    // pick a source proportional to weight
    std::size_t src = 0;
    if (sources_.size() > 1) {
        double u = rng_.uniform() * weight_sum_;
        double acc = 0.0;
        src = sources_.size() - 1;
        for (std::size_t i = 0; i < weights_.size(); ++i) {
            acc += weights_[i];
            if (u < acc) {
                src = i;
                break;
            }
        }
        while (weights_[src] == 0.0) src = (src + 1) % sources_.size();
    }
    auto& order = orders_[src];
    auto& cursor = cursors_[src];
    if (cursor >= order.size()) {
        order.resize(sources_[src].size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng_.shuffle(order);
        cursor = 0;
    }
    return sources_[src][order[cursor++]];
}

std::vector<ManifestEntry> BatchIterator::next() {
    std::vector<ManifestEntry> batch;
    batch.reserve(batch_size_);
    for (std::size_t i = 0; i < batch_size_; ++i) batch.push_back(draw());
    return batch;
}

Batch pad_batch(std::vector<CaptionSample> samples) {
    if (samples.empty()) throw_error(ErrorCategory::argument, "empty batch");
    Batch b;
    b.caption_len = 0;
    for (const auto& s : samples) b.caption_len = std::max(b.caption_len, s.caption.size());
    b.pad_mask.reserve(samples.size());
    for (auto& s : samples) {
        std::vector<bool> mask(b.caption_len, false);
        std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(s.caption.size()),
                  true);
        s.caption.resize(b.caption_len, BpeTokenizer::kPadId);
        b.pad_mask.push_back(std::move(mask));
    }
    b.samples = std::move(samples);
    return b;
}

} // namespace pivotcap
