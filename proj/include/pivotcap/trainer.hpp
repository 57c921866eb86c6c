#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pivotcap/dataset.hpp"
#include "pivotcap/model_params.hpp"

namespace pivotcap {

struct TrainConfig {
    int total_steps = 200;
    int batch_size = 8;
    int warmup_steps = 6000;
    double lr_scale = 5.0;
    double clip_norm = 1.0;
    int checkpoint_interval = 0; // 0 = final write only
    std::uint64_t seed = 1;
    std::string checkpoint_path; // empty = keep in memory
    std::string metrics_path;    // empty = no metrics file

    void validate() const;
};

struct StepMetrics {
    int step = 0;
    double lr = 0.0;
    double loss = 0.0;
};

// Transformer schedule: scale * d^-0.5 * min(step^-0.5, step * warmup^-1.5).
double lr_schedule(int step, int d_model, int warmup, double scale);

// Adaptive-moment optimizer with bias correction. Gradients arrive in the
// canonical for_each_tensor order.
class Adam {
public:
    explicit Adam(ModelParams& params, double beta1 = 0.9, double beta2 = 0.98,
                  double eps = 1e-9);

    void apply(const std::vector<Eigen::MatrixXf>& grads, double lr);
    int steps_applied() const { return t_; }

private:
    ModelParams* params_;
    double beta1_, beta2_, eps_;
    int t_ = 0;
    std::vector<Eigen::MatrixXf> m_, v_;
};

struct BatchResult {
    double loss = 0.0;
    std::vector<Eigen::MatrixXf> grads; // canonical tensor order
};

// One forward/backward pass of the prompt LM loss over a batch. Each sample
// contributes its caption tokens; the loss is the mean NLL over all of them.
BatchResult lm_batch_gradients(const ModelParams& params,
                               const std::vector<CaptionSample>& batch);

double global_grad_norm(const std::vector<Eigen::MatrixXf>& grads);
void clip_gradients(std::vector<Eigen::MatrixXf>& grads, double max_norm);

// Full LM training loop: draws batches from the iterator, materializes them
// with the loader, and applies scheduled Adam steps. Returns the per-step
// metrics (also written to metrics_path as JSON lines when set).
std::vector<StepMetrics> train(ModelParams& params, const SampleLoader& loader,
                               BatchIterator& stream, const TrainConfig& cfg);

// Same loop over pre-materialized samples, used by tests and tiny runs.
std::vector<StepMetrics> train_in_memory(ModelParams& params,
                                         const std::vector<CaptionSample>& samples,
                                         const TrainConfig& cfg);

} // namespace pivotcap
