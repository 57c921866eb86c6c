#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pivotcap/dataset.hpp"
#include "pivotcap/inference.hpp"
#include "pivotcap/model_params.hpp"

namespace pivotcap {

struct ScstConfig {
    int beam_size = 5; // the mean baseline needs at least two beams
    double learning_rate = 5e-6;
    int batch_size = 80;
    int total_steps = 1;
    double clip_norm = 1.0;
    std::uint64_t seed = 1;
    std::string reward = "cider-d";
    std::string checkpoint_path; // empty = keep in memory
    std::string metrics_path;    // empty = no metrics file

    void validate() const;
};

struct ScstStepMetrics {
    int step = 0;
    double lr = 0.0;
    double loss = 0.0;
    double cider = 0.0; // mean beam reward over the step's images
    int skipped_groups = 0;
};

// Scores a decoded caption against the references of the image it was
// generated for.
using RewardFn = std::function<double(const std::string& caption, const std::string& image_id)>;

// CIDEr-D reward over the samples' own caption texts, with corpus statistics
// from the full sample set. Samples sharing an image id pool their captions
// into one reference set.
RewardFn make_cider_evaluator(const std::vector<CaptionSample>& samples,
                              const BpeTokenizer& tokenizer);

struct BeamGroup {
    std::vector<ScoredCaption> beams;
    std::vector<double> rewards;
    std::vector<double> advantages; // reward minus the group mean
    bool degenerate = false;        // all rewards equal -> zero advantages
};

// Length-normalized beam decode plus rewards for one image; no gradients.
BeamGroup scst_decode_group(const ModelParams& params, const CaptionSample& sample,
                            const BpeTokenizer& tokenizer, const RewardFn& evaluator,
                            int beam_size);

struct ScstBatchResult {
    double loss = 0.0;
    double mean_reward = 0.0;
    int skipped_groups = 0;
    bool has_update = false;            // at least one non-degenerate group
    std::vector<Eigen::MatrixXf> grads; // canonical order; empty when !has_update
};

// One policy-gradient accumulation: each beam's mean token NLL is weighted by
// its advantage and averaged over the batch's contributing beams. Degenerate
// groups are dropped since their update is exactly zero.
ScstBatchResult scst_batch_gradients(const ModelParams& params,
                                     const std::vector<CaptionSample>& batch,
                                     const BpeTokenizer& tokenizer, const RewardFn& evaluator,
                                     int beam_size);

// Reward fine-tuning over materialized samples: shuffled epochs, fixed
// learning rate, clipped adaptive-moment updates. Steps whose every group is
// degenerate apply no update and are logged. Returns per-step metrics (also
// written to metrics_path as JSON lines when set).
std::vector<ScstStepMetrics> scst_finetune(ModelParams& params,
                                           const std::vector<CaptionSample>& samples,
                                           const BpeTokenizer& tokenizer,
                                           const RewardFn& evaluator, const ScstConfig& cfg);

} // namespace pivotcap
