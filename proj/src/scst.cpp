#include "pivotcap/scst.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <unordered_map>

#include <json.hpp>

#include "pivotcap/attention_mask.hpp"
#include "pivotcap/error.hpp"
#include "pivotcap/evaluation.hpp"
#include "pivotcap/net.hpp"
#include "pivotcap/trainer.hpp"

namespace pivotcap {

void ScstConfig::validate() const {
    if (beam_size < 2) throw_error(ErrorCategory::config, "beam_size must be >= 2");
    if (learning_rate <= 0.0) throw_error(ErrorCategory::config, "learning_rate must be positive");
    if (batch_size < 1) throw_error(ErrorCategory::config, "batch_size must be >= 1");
    if (total_steps < 1) throw_error(ErrorCategory::config, "total_steps must be >= 1");
    if (clip_norm < 0.0) throw_error(ErrorCategory::config, "clip_norm must be >= 0");
    if (reward != "cider-d") throw_error(ErrorCategory::config, "unknown reward: " + reward);
}

RewardFn make_cider_evaluator(const std::vector<CaptionSample>& samples,
                              const BpeTokenizer& tokenizer) {
    if (samples.empty()) throw_error(ErrorCategory::argument, "no samples for the evaluator");
    auto index = std::make_shared<std::unordered_map<std::string, std::size_t>>();
    std::vector<std::vector<std::string>> reference_sets;
    for (const CaptionSample& s : samples) {
        auto [it, fresh] = index->try_emplace(s.image_id, reference_sets.size());
        if (fresh) reference_sets.emplace_back();
        reference_sets[it->second].push_back(tokenizer.decode(s.caption));
    }
    auto scorer = std::make_shared<CiderScorer>(std::move(reference_sets));
    return [scorer, index](const std::string& caption, const std::string& image_id) {
        auto it = index->find(image_id);
        if (it == index->end())
            throw_error(ErrorCategory::data, "no references for image " + image_id);
        return scorer->score(caption, it->second);
    };
}

BeamGroup scst_decode_group(const ModelParams& params, const CaptionSample& sample,
                            const BpeTokenizer& tokenizer, const RewardFn& evaluator,
                            int beam_size) {
    DecodeConfig dcfg;
    dcfg.strategy = DecodeStrategy::beam;
    dcfg.beam_size = beam_size;
    dcfg.length_penalty = 1.0;
    dcfg.validate();

    ModelGenerationState prompt(params, sample.visual, sample.keyword_tokens,
                                sample.indicator.embedding_index());
    BeamGroup group;
    group.beams = beam_search(prompt, dcfg, params.config.max_len);

    double sum = 0.0;
    for (const ScoredCaption& beam : group.beams) {
        const double r = evaluator(tokenizer.decode(beam.tokens), sample.image_id);
        group.rewards.push_back(r);
        sum += r;
    }
    const double baseline = sum / static_cast<double>(group.rewards.size());
    group.degenerate = true;
    for (double r : group.rewards) {
        group.advantages.push_back(r - baseline);
        if (r != group.rewards.front()) group.degenerate = false;
    }
    return group;
}

ScstBatchResult scst_batch_gradients(const ModelParams& params,
                                     const std::vector<CaptionSample>& batch,
                                     const BpeTokenizer& tokenizer, const RewardFn& evaluator,
                                     int beam_size) {
    if (batch.empty()) throw_error(ErrorCategory::argument, "empty batch");

    std::vector<BeamGroup> groups;
    groups.reserve(batch.size());
    ScstBatchResult out;
    double reward_sum = 0.0;
    std::size_t reward_count = 0;
    for (const CaptionSample& s : batch) {
        BeamGroup g = scst_decode_group(params, s, tokenizer, evaluator, beam_size);
        for (double r : g.rewards) reward_sum += r;
        reward_count += g.rewards.size();
        if (g.degenerate)
            ++out.skipped_groups;
        groups.push_back(std::move(g));
    }
    out.mean_reward = reward_sum / static_cast<double>(reward_count);

    const int contributing = static_cast<int>(batch.size()) - out.skipped_groups;
    if (contributing == 0) return out;

    TapeModel<float> m = make_tape_model<float>(params);
    Tape<float>::Index total = -1;
    const double beam_scale = 1.0 / (static_cast<double>(contributing) * beam_size);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (groups[i].degenerate) continue;
        const CaptionSample& s = batch[i];
        const auto enc = encode_tape(m, s.visual);
        const int n_kw = static_cast<int>(s.keyword_tokens.size());
        for (std::size_t b = 0; b < groups[i].beams.size(); ++b) {
            const TokenSequence& emitted = groups[i].beams[b].tokens;
            TokenSequence input;
            input.reserve(emitted.size());
            input.push_back(BpeTokenizer::kBosId);
            input.insert(input.end(), emitted.begin(), emitted.end() - 1);
            const BoolMat mask = build_attention_mask(n_kw, static_cast<int>(input.size()));
            const auto logits = decode_tape(m, enc, s.keyword_tokens,
                                            s.indicator.embedding_index(), input, mask);
            const auto nll = caption_nll_sum(m.tape, logits, emitted, {});
            const double w =
                groups[i].advantages[b] * beam_scale / static_cast<double>(emitted.size());
            const auto term = m.tape.scale(nll, static_cast<float>(w));
            total = total < 0 ? term : m.tape.add(total, term);
        }
    }
    m.tape.backward(total);

    out.loss = static_cast<double>(m.tape.value(total)(0, 0));
    out.has_update = true;
    params.for_each_tensor([&](const std::string& name, const Eigen::MatrixXf&) {
        out.grads.push_back(m.tape.grad(m.node(name)));
    });
    return out;
}

std::vector<ScstStepMetrics> scst_finetune(ModelParams& params,
                                           const std::vector<CaptionSample>& samples,
                                           const BpeTokenizer& tokenizer,
                                           const RewardFn& evaluator, const ScstConfig& cfg) {
    cfg.validate();
    if (samples.empty()) throw_error(ErrorCategory::argument, "no samples to fine-tune on");

    Adam adam(params);
    Rng rng(derive_seed(cfg.seed, "scst_epochs"));
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    std::size_t cursor = 0;

    std::ofstream metrics_out;
    if (!cfg.metrics_path.empty()) {
        metrics_out.open(cfg.metrics_path);
        if (!metrics_out) throw_error(ErrorCategory::io, "cannot write: " + cfg.metrics_path);
    }

    std::vector<ScstStepMetrics> metrics;
    for (int step = 1; step <= cfg.total_steps; ++step) {
        std::vector<CaptionSample> batch;
        std::vector<std::string> batch_ids;
        for (int i = 0; i < cfg.batch_size; ++i) {
            if (cursor == order.size()) {
                rng.shuffle(order);
                cursor = 0;
            }
            batch.push_back(samples[order[cursor++]]);
            batch_ids.push_back(batch.back().image_id);
        }

        ScstBatchResult result =
            scst_batch_gradients(params, batch, tokenizer, evaluator, cfg.beam_size);
        if (!std::isfinite(result.loss)) {
            std::string ids;
            for (const std::string& id : batch_ids) ids += (ids.empty() ? "" : ", ") + id;
            throw_error(ErrorCategory::numeric, "non-finite loss at step " + std::to_string(step) +
                                                    " (batch: " + ids + ")");
        }
        if (result.skipped_groups > 0)
            std::cerr << "scst: step " << step << ": skipped " << result.skipped_groups
                      << " beam group(s) with identical rewards\n";
        if (result.has_update) {
            clip_gradients(result.grads, cfg.clip_norm);
            adam.apply(result.grads, cfg.learning_rate);
        }

        ScstStepMetrics sm{step, cfg.learning_rate, result.loss, result.mean_reward,
                           result.skipped_groups};
        metrics.push_back(sm);
        if (metrics_out)
            metrics_out << nlohmann::json{{"step", sm.step},
                                          {"lr", sm.lr},
                                          {"loss", sm.loss},
                                          {"cider", sm.cider},
                                          {"skipped_groups", sm.skipped_groups}}
                               .dump()
                        << "\n";
    }
    if (!cfg.checkpoint_path.empty()) save_checkpoint(cfg.checkpoint_path, params);
    return metrics;
}

} // namespace pivotcap
