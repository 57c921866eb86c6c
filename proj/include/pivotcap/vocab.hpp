#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_set>
#include <vector>

namespace pivotcap {

// Keyword candidate dictionary: lowercase unigrams sorted by descending
// corpus frequency, ties broken lexicographically.
struct KeywordDictionary {
    std::vector<std::string> entries;
    std::vector<std::uint64_t> frequencies;

    std::size_t size() const { return entries.size(); }
};

// A corpus is consumed as a stream of lines so callers can feed files of any
// size without materializing them.
using LineSource = std::function<bool(std::string&)>;

LineSource line_source_from_file(const std::string& path);
LineSource line_source_from_vector(const std::vector<std::string>& lines);

// Splits a line into unigrams: whitespace-split, lowercase, leading/trailing
// punctuation stripped (internal hyphens and apostrophes kept).
std::vector<std::string> split_unigrams(const std::string& line);

// Counts unigrams over the corpus, drops blocklisted words, and keeps the
// `limit` most frequent survivors. Deterministic for a fixed stream.
KeywordDictionary build_keyword_dictionary(LineSource corpus, std::size_t limit,
                                           const std::unordered_set<std::string>& blocklist);

// One "word<TAB>count" line per entry, frequency-descending.
void save_dictionary(const std::string& path, const KeywordDictionary& dict);
KeywordDictionary load_dictionary(const std::string& path);

std::unordered_set<std::string> load_blocklist(const std::string& path);

} // namespace pivotcap
