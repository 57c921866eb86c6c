#include "pivotcap/bpe.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pivotcap/error.hpp"

namespace pivotcap {

namespace {

constexpr const char* kEndOfWord = "</w>";

std::string lowercase(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (unsigned char c : s) out.push_back(static_cast<char>(std::tolower(c)));
    return out;
}

std::vector<std::string> whitespace_words(const std::string& text) {
    std::vector<std::string> words;
    std::istringstream iss(text);
    std::string w;
    while (iss >> w) words.push_back(w);
    return words;
}

} // namespace

std::vector<std::string> BpeTokenizer::split_word(const std::string& word) const {
    std::vector<std::string> symbols;
    symbols.reserve(word.size() + 1);
    for (char c : word) symbols.emplace_back(1, c);
    symbols.emplace_back(kEndOfWord);
    return symbols;
}

BpeTokenizer BpeTokenizer::train(LineSource corpus, std::size_t vocab_size) {
    // word frequency table over the lowercased corpus
    std::unordered_map<std::string, std::uint64_t> word_freq;
    std::string line;
    while (corpus(line)) {
        for (auto& w : whitespace_words(lowercase(line))) ++word_freq[w];
    }
    if (word_freq.empty())
        throw_error(ErrorCategory::data, "empty corpus: cannot train tokenizer");

    // base alphabet: every character seen, plus the end-of-word marker
    std::vector<std::string> alphabet;
    {
        std::vector<char> chars;
        for (const auto& [w, f] : word_freq)
            for (char c : w)
                if (std::find(chars.begin(), chars.end(), c) == chars.end()) chars.push_back(c);
        std::sort(chars.begin(), chars.end());
        for (char c : chars) alphabet.emplace_back(1, c);
        alphabet.emplace_back(kEndOfWord);
    }

    const std::size_t floor_size = alphabet.size() + 3; // + pad/bos/eos
    if (vocab_size < floor_size)
        throw_error(ErrorCategory::config,
                    "vocab_size " + std::to_string(vocab_size) + " below minimum " +
                        std::to_string(floor_size) + " (alphabet + specials)");

    // deterministic word order for the merge loop
    std::vector<std::pair<std::string, std::uint64_t>> words(word_freq.begin(), word_freq.end());
    std::sort(words.begin(), words.end());
    std::vector<std::vector<std::string>> seqs;
    seqs.reserve(words.size());
    BpeTokenizer t;
    for (const auto& [w, f] : words) seqs.push_back(t.split_word(w));

    std::size_t n_merges = vocab_size - floor_size;
    for (std::size_t m = 0; m < n_merges; ++m) {
        std::map<std::pair<std::string, std::string>, std::uint64_t> pair_freq;
        for (std::size_t i = 0; i < seqs.size(); ++i) {
            const auto& seq = seqs[i];
            for (std::size_t j = 0; j + 1 < seq.size(); ++j)
                pair_freq[{seq[j], seq[j + 1]}] += words[i].second;
        }
        if (pair_freq.empty()) break; // corpus exhausted; vocab stays smaller

        // most frequent pair, ties broken by lexicographic order (std::map
        // iteration is already sorted, so the first max wins)
        auto best = pair_freq.begin();
        for (auto it = pair_freq.begin(); it != pair_freq.end(); ++it)
            if (it->second > best->second) best = it;

        const auto [left, right] = best->first;
        const std::string joined = left + right;
        for (auto& seq : seqs) {
            std::vector<std::string> out;
            out.reserve(seq.size());
            std::size_t j = 0;
            while (j < seq.size()) {
                if (j + 1 < seq.size() && seq[j] == left && seq[j + 1] == right) {
                    out.push_back(joined);
                    j += 2;
                } else {
                    out.push_back(seq[j]);
                    ++j;
                }
            }
            seq = std::move(out);
        }
        t.merges_.emplace_back(left, right);
    }

    // ids: specials, then alphabet, then merge outputs in merge order
    t.id_to_symbol_.assign({"<pad>", "<bos>", "<eos>"});
    for (auto& s : alphabet) t.id_to_symbol_.push_back(s);
    for (auto& [l, r] : t.merges_) t.id_to_symbol_.push_back(l + r);
    t.rebuild_lookup();
    return t;
}

void BpeTokenizer::rebuild_lookup() {
    symbol_to_id_.clear();
    for (std::size_t i = 0; i < id_to_symbol_.size(); ++i)
        symbol_to_id_[id_to_symbol_[i]] = static_cast<TokenId>(i);
    merge_rank_.clear();
    for (std::size_t i = 0; i < merges_.size(); ++i) merge_rank_[merges_[i]] = i;
}

std::vector<std::string> BpeTokenizer::apply_merges(std::vector<std::string> symbols) const {
    while (symbols.size() > 1) {
        std::size_t best_rank = merge_rank_.size();
        std::size_t best_pos = 0;
        for (std::size_t j = 0; j + 1 < symbols.size(); ++j) {
            auto it = merge_rank_.find({symbols[j], symbols[j + 1]});
            if (it != merge_rank_.end() && it->second < best_rank) {
                best_rank = it->second;
                best_pos = j;
            }
        }
        if (best_rank == merge_rank_.size()) break;
        symbols[best_pos] += symbols[best_pos + 1];
        symbols.erase(symbols.begin() + static_cast<std::ptrdiff_t>(best_pos) + 1);
    }
    return symbols;
}

TokenSequence BpeTokenizer::encode(const std::string& text) const {
    TokenSequence ids;
    for (const auto& word : whitespace_words(lowercase(text))) {
        // drop characters outside the training alphabet
        std::string kept;
        for (char c : word)
            if (symbol_to_id_.count(std::string(1, c))) kept.push_back(c);
        if (kept.empty()) continue;
        for (const auto& sym : apply_merges(split_word(kept))) {
            auto it = symbol_to_id_.find(sym);
            if (it == symbol_to_id_.end())
                throw_error(ErrorCategory::state, "symbol missing from vocab: " + sym);
            ids.push_back(it->second);
        }
    }
    return ids;
}

std::string BpeTokenizer::decode(const TokenSequence& ids) const {
    std::string text;
    for (TokenId id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= id_to_symbol_.size())
            throw_error(ErrorCategory::argument, "invalid token id " + std::to_string(id));
        if (is_special(id)) continue;
        const std::string& sym = id_to_symbol_[static_cast<std::size_t>(id)];
        std::size_t pos = 0;
        std::size_t hit;
        while ((hit = sym.find(kEndOfWord, pos)) != std::string::npos) {
            text.append(sym, pos, hit - pos);
            text.push_back(' ');
            pos = hit + 4;
        }
        text.append(sym, pos, std::string::npos);
    }
    if (!text.empty() && text.back() == ' ') text.pop_back();
    return text;
}

TokenId BpeTokenizer::token_id(const std::string& symbol) const {
    auto it = symbol_to_id_.find(symbol);
    if (it == symbol_to_id_.end())
        throw_error(ErrorCategory::argument, "unknown symbol: " + symbol);
    return it->second;
}

const std::string& BpeTokenizer::symbol(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_symbol_.size())
        throw_error(ErrorCategory::argument, "invalid token id " + std::to_string(id));
    return id_to_symbol_[static_cast<std::size_t>(id)];
}

void BpeTokenizer::save(const std::string& path) const {
    nlohmann::json doc;
    doc["merges"] = nlohmann::json::array();
    for (const auto& [l, r] : merges_) doc["merges"].push_back({l, r});
    doc["vocab"] = nlohmann::json::object();
    for (std::size_t i = 0; i < id_to_symbol_.size(); ++i)
        doc["vocab"][id_to_symbol_[i]] = i;
    doc["specials"] = {{"pad", kPadId}, {"bos", kBosId}, {"eos", kEosId}};

    std::ofstream out(path);
    if (!out) throw_error(ErrorCategory::io, "cannot open for writing: " + path);
    out << doc.dump(2) << '\n';
    if (!out) throw_error(ErrorCategory::io, "write failed: " + path);
}

BpeTokenizer BpeTokenizer::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw_error(ErrorCategory::io, "cannot open: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw_error(ErrorCategory::data, path + ": " + e.what());
    }

    BpeTokenizer t;
    try {
        for (const auto& m : doc.at("merges"))
            t.merges_.emplace_back(m.at(0).get<std::string>(), m.at(1).get<std::string>());
        const auto& vocab = doc.at("vocab");
        t.id_to_symbol_.resize(vocab.size());
        for (auto it = vocab.begin(); it != vocab.end(); ++it) {
            const auto id = it.value().get<std::size_t>();
            if (id >= t.id_to_symbol_.size())
                throw_error(ErrorCategory::data, path + ": vocab ids not dense");
            t.id_to_symbol_[id] = it.key();
        }
        if (doc.at("specials").at("pad").get<TokenId>() != kPadId ||
            doc.at("specials").at("bos").get<TokenId>() != kBosId ||
            doc.at("specials").at("eos").get<TokenId>() != kEosId)
            throw_error(ErrorCategory::data, path + ": unexpected special token ids");
    } catch (const nlohmann::json::exception& e) {
        throw_error(ErrorCategory::data, path + ": " + e.what());
    }
    t.rebuild_lookup();
    return t;
}

} // namespace pivotcap
