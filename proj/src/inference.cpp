#include "pivotcap/inference.hpp"

#include <algorithm>
#include <cmath>

#include "pivotcap/error.hpp"

namespace pivotcap {

void DecodeConfig::validate() const {
    if (beam_size < 1) throw_error(ErrorCategory::config, "beam_size must be >= 1");
    if (max_len < 0) throw_error(ErrorCategory::config, "max_len must be >= 0");
    if (length_penalty < 0.0)
        throw_error(ErrorCategory::config, "length_penalty must be >= 0");
}

DecodeStrategy strategy_from_name(const std::string& name) {
    if (name == "greedy") return DecodeStrategy::greedy;
    if (name == "beam") return DecodeStrategy::beam;
    throw_error(ErrorCategory::config, "unknown decode strategy '" + name + "' (greedy, beam)");
}

ModelGenerationState::ModelGenerationState(const ModelParams& params,
                                           const Eigen::MatrixXf& visual,
                                           const TokenSequence& keyword_tokens,
                                           int indicator_index)
    : cache_(params) {
    cache_.init(visual, keyword_tokens, indicator_index);
}

std::unique_ptr<GenerationState> ModelGenerationState::clone() const {
    return std::make_unique<ModelGenerationState>(*this);
}

Eigen::RowVectorXf ModelGenerationState::advance(TokenId token) {
    const Eigen::RowVectorXf logits = cache_.step(token);
    const float mx = logits.maxCoeff();
    const float lse = mx + std::log((logits.array() - mx).exp().sum());
    return logits.array() - lse;
}

namespace {

double hypothesis_score(double sum_log_prob, std::size_t length, double penalty) {
    if (penalty == 0.0) return sum_log_prob;
    return sum_log_prob / std::pow(static_cast<double>(length), penalty);
}

bool ranked_before(const ScoredCaption& a, const ScoredCaption& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::lexicographical_compare(a.tokens.begin(), a.tokens.end(), b.tokens.begin(),
                                        b.tokens.end());
}

struct ActiveBeam {
    std::unique_ptr<GenerationState> state; // positioned after `tokens`
    Eigen::RowVectorXf next_log_probs;
    TokenSequence tokens;
    std::vector<float> log_probs;
    double sum = 0.0;
};

void check_finite(const Eigen::RowVectorXf& row, int step) {
    if (!row.allFinite())
        throw_error(ErrorCategory::numeric,
                    "non-finite log-probabilities at decode step " + std::to_string(step));
}

} // namespace

std::vector<ScoredCaption> beam_search(const GenerationState& prompt, const DecodeConfig& cfg,
                                       int max_len) {
    cfg.validate();
    if (max_len < 1) throw_error(ErrorCategory::argument, "max_len must be >= 1");
    const std::size_t width = static_cast<std::size_t>(cfg.beam_size);

    std::vector<ActiveBeam> active;
    {
        ActiveBeam root;
        root.state = prompt.clone();
        root.next_log_probs = root.state->advance(BpeTokenizer::kBosId);
        check_finite(root.next_log_probs, 0);
        active.push_back(std::move(root));
    }
    std::vector<ScoredCaption> finished;

    for (int step = 0; step < max_len && !active.empty(); ++step) {
        struct Candidate {
            double sum;
            std::size_t beam;
            TokenId token;
        };
        std::vector<Candidate> cands;
        cands.reserve(active.size() * static_cast<std::size_t>(active[0].next_log_probs.size()));
        for (std::size_t b = 0; b < active.size(); ++b)
            for (Eigen::Index v = 0; v < active[b].next_log_probs.size(); ++v)
                cands.push_back({active[b].sum + active[b].next_log_probs(v), b,
                                 static_cast<TokenId>(v)});

        auto better = [&](const Candidate& a, const Candidate& c) {
            if (a.sum != c.sum) return a.sum > c.sum;
            // equal sums: prefer the lexicographically earlier full sequence;
            // all active beams carry the same number of tokens, so comparing
            // the parents then the new token is a full comparison
            const TokenSequence& ta = active[a.beam].tokens;
            const TokenSequence& tc = active[c.beam].tokens;
            const auto mism = std::mismatch(ta.begin(), ta.end(), tc.begin(), tc.end());
            if (mism.first != ta.end()) return *mism.first < *mism.second;
            return a.token < c.token;
        };
        const std::size_t keep = std::min(width, cands.size());
        std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep),
                          cands.end(), better);
        cands.resize(keep);

        std::vector<ActiveBeam> next_active;
        for (const Candidate& c : cands) {
            ActiveBeam& parent = active[c.beam];
            const float lp = parent.next_log_probs(c.token);
            if (c.token == BpeTokenizer::kEosId) {
                ScoredCaption done;
                done.tokens = parent.tokens;
                done.tokens.push_back(c.token);
                done.log_probs = parent.log_probs;
                done.log_probs.push_back(lp);
                done.sum_log_prob = c.sum;
                done.finished = true;
                finished.push_back(std::move(done));
                continue;
            }
            if (step + 1 == max_len) {
                ScoredCaption cut;
                cut.tokens = parent.tokens;
                cut.tokens.push_back(c.token);
                cut.log_probs = parent.log_probs;
                cut.log_probs.push_back(lp);
                cut.sum_log_prob = c.sum;
                cut.finished = false;
                finished.push_back(std::move(cut));
                continue;
            }
            ActiveBeam child;
            child.state = parent.state->clone();
            child.next_log_probs = child.state->advance(c.token);
            check_finite(child.next_log_probs, step + 1);
            child.tokens = parent.tokens;
            child.tokens.push_back(c.token);
            child.log_probs = parent.log_probs;
            child.log_probs.push_back(lp);
            child.sum = c.sum;
            next_active.push_back(std::move(child));
        }
        active = std::move(next_active);
    }

    for (ScoredCaption& h : finished)
        h.score = hypothesis_score(h.sum_log_prob, h.tokens.size(), cfg.length_penalty);
    std::sort(finished.begin(), finished.end(), ranked_before);
    if (finished.size() > width) finished.resize(width);
    return finished;
}

GenerationResult generate(const ModelParams& params, const Eigen::MatrixXf& visual,
                          const KeywordSet& keywords, StyleIndicator indicator,
                          const BpeTokenizer& tokenizer, const DecodeConfig& cfg) {
    cfg.validate();
    const TokenSequence kw_tokens = encode_keywords(tokenizer, keywords.keywords);
    int max_len = params.config.max_len;
    if (cfg.max_len > 0) max_len = std::min(max_len, cfg.max_len);

    GenerationResult out;
    if (cfg.strategy == DecodeStrategy::beam) {
        ModelGenerationState state(params, visual, kw_tokens, indicator.embedding_index());
        const std::vector<ScoredCaption> ranked = beam_search(state, cfg, max_len);
        if (ranked.empty()) throw_error(ErrorCategory::state, "beam search returned nothing");
        const ScoredCaption& top = ranked.front();
        out.tokens = top.tokens;
        out.log_probs = top.log_probs;
        out.score = top.score;
    } else {
        ModelGenerationState state(params, visual, kw_tokens, indicator.embedding_index());
        Eigen::RowVectorXf logp = state.advance(BpeTokenizer::kBosId);
        check_finite(logp, 0);
        double sum = 0.0;
        for (int step = 0; step < max_len; ++step) {
            Eigen::Index best = 0;
            for (Eigen::Index v = 1; v < logp.size(); ++v)
                if (logp(v) > logp(best)) best = v; // strict: ties keep the lowest id
            const TokenId token = static_cast<TokenId>(best);
            out.tokens.push_back(token);
            out.log_probs.push_back(logp(best));
            sum += logp(best);
            if (token == BpeTokenizer::kEosId || step + 1 == max_len) break;
            logp = state.advance(token);
            check_finite(logp, step + 1);
        }
        out.score = hypothesis_score(sum, out.tokens.size(), cfg.length_penalty);
    }

    if (!out.tokens.empty() && out.tokens.back() == BpeTokenizer::kEosId) {
        out.tokens.pop_back();
        out.log_probs.pop_back();
    }
    out.caption = tokenizer.decode(out.tokens);
    return out;
}

} // namespace pivotcap
