#include "pivotcap/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "pivotcap/error.hpp"

namespace pivotcap {

namespace {

std::string lowercased(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

// alphanumeric runs, lowercased: the matching side of coverage and stats
std::vector<std::string> word_tokens(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            words.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(cur);
    return words;
}

nlohmann::json parse_line(const std::string& line, const std::string& path, std::size_t lineno) {
    try {
        return nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw_error(ErrorCategory::data,
                    path + ":" + std::to_string(lineno) + ": " + e.what());
    }
}

} // namespace

std::vector<std::string> metric_tokens(const std::string& text) {
    std::istringstream in(lowercased(text));
    std::vector<std::string> tokens;
    std::string tok;
    while (in >> tok) tokens.push_back(tok);
    return tokens;
}

std::vector<EvalItem> load_eval_items(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw_error(ErrorCategory::io, "cannot open: " + path);
    std::vector<EvalItem> items;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json doc = parse_line(line, path, lineno);
        EvalItem item;
        try {
            item.image_id = doc.at("image_id").get<std::string>();
            if (doc.contains("references"))
                item.references = doc["references"].get<std::vector<std::string>>();
            if (doc.contains("candidate")) item.candidate = doc["candidate"].get<std::string>();
            if (doc.contains("labels"))
                item.labels = doc["labels"].get<std::vector<std::string>>();
        } catch (const nlohmann::json::exception& e) {
            throw_error(ErrorCategory::data,
                        path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        items.push_back(std::move(item));
    }
    return items;
}

void save_eval_items(const std::string& path, const std::vector<EvalItem>& items) {
    std::ofstream out(path);
    if (!out) throw_error(ErrorCategory::io, "cannot write: " + path);
    for (const EvalItem& item : items) {
        nlohmann::json doc = {{"image_id", item.image_id},
                              {"references", item.references},
                              {"labels", item.labels}};
        if (!item.candidate.empty()) doc["candidate"] = item.candidate;
        out << doc.dump() << "\n";
    }
}

CiderScorer::CiderScorer(std::vector<std::vector<std::string>> reference_sets, int n_max,
                         double sigma)
    : n_max_(n_max), sigma_(sigma) {
    if (n_max_ < 1) throw_error(ErrorCategory::argument, "n_max must be >= 1");
    if (sigma_ <= 0.0) throw_error(ErrorCategory::argument, "sigma must be positive");
    if (reference_sets.empty()) throw_error(ErrorCategory::argument, "empty reference corpus");
    refs_.reserve(reference_sets.size());
    for (const std::vector<std::string>& set : reference_sets) {
        if (set.empty())
            throw_error(ErrorCategory::data, "an image has no references");
        std::vector<std::vector<std::string>> tokenized;
        for (const std::string& ref : set) tokenized.push_back(metric_tokens(ref));
        refs_.push_back(std::move(tokenized));
    }
    // each n-gram counts once per image, over the image's whole reference set
    for (const auto& image_refs : refs_) {
        std::set<std::string> seen;
        for (const auto& tokens : image_refs) {
            for (int n = 1; n <= n_max_; ++n)
                for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
                    std::string key = std::to_string(n);
                    for (std::size_t j = i; j < i + static_cast<std::size_t>(n); ++j)
                        key += '\x1f' + tokens[j];
                    seen.insert(std::move(key));
                }
        }
        for (const std::string& key : seen) doc_freq_[key] += 1.0;
    }
    log_corpus_ = std::log(static_cast<double>(refs_.size()));
}

CiderScorer::SentenceStats CiderScorer::stats_for(const std::vector<std::string>& tokens) const {
    SentenceStats s;
    s.vec.resize(static_cast<std::size_t>(n_max_));
    s.norm.assign(static_cast<std::size_t>(n_max_), 0.0);
    s.length = static_cast<int>(tokens.size());
    std::unordered_map<std::string, double> counts;
    for (int n = 1; n <= n_max_; ++n)
        for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
            std::string key = std::to_string(n);
            for (std::size_t j = i; j < i + static_cast<std::size_t>(n); ++j)
                key += '\x1f' + tokens[j];
            counts[std::move(key)] += 1.0;
        }
    for (const auto& [key, tf] : counts) {
        const std::size_t n_index = static_cast<std::size_t>(key[0] - '1');
        auto it = doc_freq_.find(key);
        const double df = it == doc_freq_.end() ? 0.0 : it->second;
        const double idf = log_corpus_ - std::log(std::max(1.0, df));
        const double w = tf * idf;
        s.vec[n_index][key] = w;
        s.norm[n_index] += w * w;
    }
    for (double& n : s.norm) n = std::sqrt(n);
    return s;
}

double CiderScorer::similarity(const SentenceStats& hyp, const SentenceStats& ref) const {
    const double delta = static_cast<double>(hyp.length - ref.length);
    const double penalty = std::exp(-delta * delta / (2.0 * sigma_ * sigma_));
    double total = 0.0;
    for (std::size_t n = 0; n < static_cast<std::size_t>(n_max_); ++n) {
        double val = 0.0;
        for (const auto& [key, w_hyp] : hyp.vec[n]) {
            auto it = ref.vec[n].find(key);
            if (it == ref.vec[n].end()) continue;
            val += std::min(w_hyp, it->second) * it->second;
        }
        if (hyp.norm[n] != 0.0 && ref.norm[n] != 0.0) val /= hyp.norm[n] * ref.norm[n];
        total += val * penalty;
    }
    return total / n_max_;
}

double CiderScorer::score(const std::string& candidate, std::size_t image_index) const {
    if (image_index >= refs_.size())
        throw_error(ErrorCategory::argument, "image index out of range");
    const std::vector<std::string> tokens = metric_tokens(candidate);
    if (tokens.empty()) {
        std::cerr << "warning: empty candidate for image " << image_index << ", scored 0\n";
        return 0.0;
    }
    const SentenceStats hyp = stats_for(tokens);
    double sum = 0.0;
    for (const auto& ref_tokens : refs_[image_index]) sum += similarity(hyp, stats_for(ref_tokens));
    return sum / static_cast<double>(refs_[image_index].size()) * 10.0;
}

CiderResult cider_d(const std::vector<EvalItem>& corpus, int n_max, double sigma) {
    if (corpus.empty()) throw_error(ErrorCategory::argument, "empty evaluation corpus");
    std::vector<std::vector<std::string>> reference_sets;
    reference_sets.reserve(corpus.size());
    for (const EvalItem& item : corpus) {
        if (item.references.empty())
            throw_error(ErrorCategory::data, "image " + item.image_id + " has no references");
        reference_sets.push_back(item.references);
    }
    const CiderScorer scorer(std::move(reference_sets), n_max, sigma);
    CiderResult result;
    result.per_image.reserve(corpus.size());
    double total = 0.0;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const double s = scorer.score(corpus[i].candidate, i);
        result.per_image.push_back(s);
        total += s;
    }
    result.mean = total / static_cast<double>(corpus.size());
    return result;
}

SynonymTable load_synonyms(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw_error(ErrorCategory::io, "cannot open: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
        SynonymTable table;
        for (auto it = doc.begin(); it != doc.end(); ++it)
            table[lowercased(it.key())] = it.value().get<std::vector<std::string>>();
        return table;
    } catch (const nlohmann::json::exception& e) {
        throw_error(ErrorCategory::data, path + ": " + e.what());
    }
}

double coverage(const std::string& caption, const std::vector<std::string>& labels,
                const SynonymTable& synonyms) {
    if (labels.empty()) throw_error(ErrorCategory::argument, "coverage needs at least one label");
    const std::vector<std::string> words_vec = word_tokens(caption);
    const std::set<std::string> words(words_vec.begin(), words_vec.end());

    std::set<std::string> unique_labels;
    for (const std::string& label : labels) unique_labels.insert(lowercased(label));

    std::size_t matched = 0;
    for (const std::string& label : unique_labels) {
        bool hit = words.count(label) > 0;
        if (!hit) {
            auto it = synonyms.find(label);
            if (it != synonyms.end())
                for (const std::string& syn : it->second)
                    if (words.count(lowercased(syn))) {
                        hit = true;
                        break;
                    }
        }
        if (hit) ++matched;
    }
    return static_cast<double>(matched) / static_cast<double>(unique_labels.size());
}

LongTailStats long_tail_stats(const std::vector<std::string>& captions,
                              const std::unordered_map<std::string, std::int64_t>& base_counts,
                              std::int64_t threshold, const std::set<std::string>& gazetteer) {
    std::set<std::string> gaz_lower;
    for (const std::string& g : gazetteer) gaz_lower.insert(lowercased(g));

    std::set<std::string> unique_words;
    for (const std::string& caption : captions)
        for (const std::string& w : word_tokens(caption)) unique_words.insert(w);

    LongTailStats stats;
    for (const std::string& w : unique_words) {
        auto it = base_counts.find(w);
        const std::int64_t count = it == base_counts.end() ? 0 : it->second;
        if (count < threshold) ++stats.novel_word_count;
        if (gaz_lower.count(w)) ++stats.named_entity_count;
    }
    return stats;
}

StyleMarkers load_markers(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw_error(ErrorCategory::io, "cannot open: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
        StyleMarkers m;
        m.hc = doc.at("hc").get<std::vector<std::string>>();
        m.mc = doc.at("mc").get<std::vector<std::string>>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw_error(ErrorCategory::data, path + ": " + e.what());
    }
}

ComplianceResult style_compliance(const std::vector<std::string>& captions,
                                  const StyleMarkers& markers) {
    std::set<std::string> hc(markers.hc.begin(), markers.hc.end());
    std::set<std::string> mc(markers.mc.begin(), markers.mc.end());
    for (const std::string& m : hc)
        if (mc.count(m))
            throw_error(ErrorCategory::argument, "marker sets overlap on '" + m + "'");

    ComplianceResult result;
    if (captions.empty()) return result;
    std::size_t hc_ok = 0;
    std::size_t mc_ok = 0;
    for (const std::string& caption : captions) {
        std::size_t hc_hits = 0;
        std::size_t mc_hits = 0;
        for (const std::string& w : word_tokens(caption)) {
            if (hc.count(w)) ++hc_hits;
            if (mc.count(w)) ++mc_hits;
        }
        if (hc_hits > 0 && mc_hits == 0) ++hc_ok;
        if (mc_hits > 0 && hc_hits == 0) ++mc_ok;
    }
    result.hc = static_cast<double>(hc_ok) / static_cast<double>(captions.size());
    result.mc = static_cast<double>(mc_ok) / static_cast<double>(captions.size());
    return result;
}

AblationReport ablation_report(const std::vector<VariantResult>& variants) {
    if (variants.empty()) throw_error(ErrorCategory::argument, "no variants to report");
    for (const VariantResult& v : variants)
        if (v.corpus_id != variants.front().corpus_id)
            throw_error(ErrorCategory::argument,
                        "variant '" + v.name + "' was evaluated on a different corpus");
    return AblationReport{variants};
}

std::string AblationReport::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    const VariantResult& base = variants.front();
    for (const VariantResult& v : variants) {
        rows.push_back({{"name", v.name},
                        {"cider", v.cider},
                        {"coverage", v.coverage},
                        {"compliance", v.compliance},
                        {"delta_cider", v.cider - base.cider},
                        {"delta_coverage", v.coverage - base.coverage},
                        {"delta_compliance", v.compliance - base.compliance}});
    }
    return nlohmann::json{{"corpus_id", base.corpus_id}, {"variants", rows}}.dump(2);
}

std::string AblationReport::to_text() const {
    const VariantResult& base = variants.front();
    std::size_t name_width = 7;
    for (const VariantResult& v : variants) name_width = std::max(name_width, v.name.size());

    std::ostringstream out;
    auto cell = [&out](double v) {
        out.setf(std::ios::fixed);
        out.precision(4);
        out.width(10);
        out << v;
    };
    out << std::left;
    out.width(static_cast<std::streamsize>(name_width));
    out << "variant";
    out << std::right << "     cider  d(cider)  coverage   d(cover)  compliance    d(comp)\n";
    for (const VariantResult& v : variants) {
        out << std::left;
        out.width(static_cast<std::streamsize>(name_width));
        out << v.name << std::right;
        cell(v.cider);
        cell(v.cider - base.cider);
        cell(v.coverage);
        cell(v.coverage - base.coverage);
        out.width(12);
        out.setf(std::ios::fixed);
        out.precision(4);
        out << v.compliance;
        cell(v.compliance - base.compliance);
        out << "\n";
    }
    return out.str();
}

} // namespace pivotcap
