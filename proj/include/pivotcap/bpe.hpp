#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "pivotcap/vocab.hpp"

namespace pivotcap {

using TokenId = std::int32_t;
using TokenSequence = std::vector<TokenId>;

// Lower-cased byte-pair-encoding tokenizer. Words are whitespace chunks; each
// word is split into single characters plus an end-of-word marker, then the
// learned merge list is replayed greedily by rank. Characters outside the
// training alphabet are dropped at encode time, so decode(encode(s)) equals
// the lowercase whitespace-normalized form of s for in-alphabet input.
class BpeTokenizer {
public:
    static constexpr TokenId kPadId = 0;
    static constexpr TokenId kBosId = 1;
    static constexpr TokenId kEosId = 2;

    // Learns merges until the vocabulary reaches vocab_size (or the corpus
    // runs out of pairs). vocab_size must cover the base alphabet plus the
    // three special tokens.
    static BpeTokenizer train(LineSource corpus, std::size_t vocab_size);

    TokenSequence encode(const std::string& text) const;
    std::string decode(const TokenSequence& ids) const;

    std::size_t vocab_size() const { return id_to_symbol_.size(); }
    std::size_t merge_count() const { return merges_.size(); }
    bool is_special(TokenId id) const { return id == kPadId || id == kBosId || id == kEosId; }

    const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }
    const std::string& symbol(TokenId id) const;
    TokenId token_id(const std::string& symbol) const;

    // Single JSON document holding the ordered merge list, the vocab map and
    // the special ids; load() reproduces the tokenizer exactly.
    void save(const std::string& path) const;
    static BpeTokenizer load(const std::string& path);

private:
    BpeTokenizer() = default;
    void rebuild_lookup();
    std::vector<std::string> split_word(const std::string& word) const;
    std::vector<std::string> apply_merges(std::vector<std::string> symbols) const;

    std::vector<std::pair<std::string, std::string>> merges_;
    std::map<std::pair<std::string, std::string>, std::size_t> merge_rank_;
    std::vector<std::string> id_to_symbol_;
    std::unordered_map<std::string, TokenId> symbol_to_id_;
};

} // namespace pivotcap
