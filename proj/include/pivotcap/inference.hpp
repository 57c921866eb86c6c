#pragma once

#include <memory>
#include <string>
#include <vector>

#include "pivotcap/dataset.hpp"
#include "pivotcap/decoder_cache.hpp"

namespace pivotcap {

enum class DecodeStrategy { greedy, beam };

struct DecodeConfig {
    DecodeStrategy strategy = DecodeStrategy::greedy;
    int beam_size = 3;
    int max_len = 0;             // 0 = model's max_len
    double length_penalty = 0.0; // 0 disables normalization
    std::uint64_t seed = 0;      // reserved for future sampling strategies

    void validate() const;
};

DecodeStrategy strategy_from_name(const std::string& name);

// What a search needs from a decoding process: fork the state and feed one
// token, reading back log-probabilities for the next position.
class GenerationState {
public:
    virtual ~GenerationState() = default;
    virtual std::unique_ptr<GenerationState> clone() const = 0;
    // consumes token, returns the log-prob row for the following position
    virtual Eigen::RowVectorXf advance(TokenId token) = 0;
};

// GenerationState over the cached incremental decoder.
class ModelGenerationState : public GenerationState {
public:
    ModelGenerationState(const ModelParams& params, const Eigen::MatrixXf& visual,
                         const TokenSequence& keyword_tokens, int indicator_index);

    std::unique_ptr<GenerationState> clone() const override;
    Eigen::RowVectorXf advance(TokenId token) override;

private:
    DecoderCache cache_;
};

// One decoded hypothesis. tokens holds every emitted token including the
// terminating end token (when the search finished it); log_probs aligns.
struct ScoredCaption {
    TokenSequence tokens;
    std::vector<float> log_probs;
    double sum_log_prob = 0.0;
    double score = 0.0;
    bool finished = false;
};

// Beam search from a prompt-initialized state. Expansion ranks partial
// hypotheses by summed log-prob; the returned list is ranked by
// sum / len^length_penalty with finished and active hypotheses competing.
// Ties break by score, then lexicographically earlier token sequence.
std::vector<ScoredCaption> beam_search(const GenerationState& prompt, const DecodeConfig& cfg,
                                       int max_len);

struct GenerationResult {
    std::string caption;
    TokenSequence tokens; // emitted tokens with the end token trimmed
    std::vector<float> log_probs;
    double score = 0.0;
};

// End-to-end generation for one image: assembles the prompt from keywords
// and indicator, decodes with the configured strategy, and detokenizes.
GenerationResult generate(const ModelParams& params, const Eigen::MatrixXf& visual,
                          const KeywordSet& keywords, StyleIndicator indicator,
                          const BpeTokenizer& tokenizer, const DecodeConfig& cfg);

} // namespace pivotcap
