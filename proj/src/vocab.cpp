#include "pivotcap/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <memory>
#include <sstream>
#include <unordered_map>

#include "pivotcap/error.hpp"

namespace pivotcap {

LineSource line_source_from_file(const std::string& path) {
    auto in = std::make_shared<std::ifstream>(path);
    if (!*in) throw_error(ErrorCategory::io, "cannot open corpus: " + path);
    return [in](std::string& line) { return static_cast<bool>(std::getline(*in, line)); };
}

LineSource line_source_from_vector(const std::vector<std::string>& lines) {
    auto idx = std::make_shared<std::size_t>(0);
    auto copy = std::make_shared<std::vector<std::string>>(lines);
    return [idx, copy](std::string& line) {
        if (*idx >= copy->size()) return false;
        line = (*copy)[(*idx)++];
        return true;
    };
}

namespace {

bool is_strip_char(unsigned char c) {
    // keep internal hyphens/apostrophes; strip everything non-alphanumeric
    // from the edges of a token
    return !std::isalnum(c);
}

std::string normalize_unigram(const std::string& raw) {
    std::size_t b = 0;
    std::size_t e = raw.size();
    while (b < e && is_strip_char(static_cast<unsigned char>(raw[b]))) ++b;
    while (e > b && is_strip_char(static_cast<unsigned char>(raw[e - 1]))) --e;
    std::string out;
    out.reserve(e - b);
    for (std::size_t i = b; i < e; ++i) {
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(raw[i]))));
    }
    return out;
}

} // namespace

std::vector<std::string> split_unigrams(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream iss(line);
    std::string tok;
    while (iss >> tok) {
        std::string w = normalize_unigram(tok);
        if (!w.empty()) out.push_back(std::move(w));
    }
    return out;
}

KeywordDictionary build_keyword_dictionary(LineSource corpus, std::size_t limit,
                                           const std::unordered_set<std::string>& blocklist) {
    if (limit < 1) throw_error(ErrorCategory::argument, "dictionary limit must be >= 1");

    std::unordered_map<std::string, std::uint64_t> counts;
    std::string line;
    bool saw_token = false;
    while (corpus(line)) {
        for (auto& w : split_unigrams(line)) {
            saw_token = true;
            if (blocklist.count(w)) continue;
            ++counts[w];
        }
    }
    if (!saw_token)
        throw_error(ErrorCategory::data, "empty corpus: no unigrams found");

    std::vector<std::pair<std::string, std::uint64_t>> items(counts.begin(), counts.end());
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (items.size() > limit) items.resize(limit);

    KeywordDictionary dict;
    dict.entries.reserve(items.size());
    dict.frequencies.reserve(items.size());
    for (auto& [word, count] : items) {
        dict.entries.push_back(std::move(word));
        dict.frequencies.push_back(count);
    }
    return dict;
}

void save_dictionary(const std::string& path, const KeywordDictionary& dict) {
    std::ofstream out(path);
    if (!out) throw_error(ErrorCategory::io, "cannot open for writing: " + path);
    for (std::size_t i = 0; i < dict.entries.size(); ++i) {
        out << dict.entries[i] << '\t' << dict.frequencies[i] << '\n';
    }
    if (!out) throw_error(ErrorCategory::io, "write failed: " + path);
}

KeywordDictionary load_dictionary(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw_error(ErrorCategory::io, "cannot open: " + path);
    KeywordDictionary dict;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw_error(ErrorCategory::data,
                        path + ":" + std::to_string(lineno) + ": expected word<TAB>count");
        dict.entries.push_back(line.substr(0, tab));
        dict.frequencies.push_back(std::stoull(line.substr(tab + 1)));
    }
    return dict;
}

std::unordered_set<std::string> load_blocklist(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw_error(ErrorCategory::io, "cannot open: " + path);
    std::unordered_set<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        std::string w = normalize_unigram(line);
        if (!w.empty()) words.insert(w);
    }
    return words;
}

} // namespace pivotcap
