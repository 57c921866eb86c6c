#include "pivotcap/trainer.hpp"

#include <cmath>
#include <fstream>
#include <functional>

#include <json.hpp>

#include "pivotcap/attention_mask.hpp"
#include "pivotcap/error.hpp"
#include "pivotcap/net.hpp"

namespace pivotcap {

void TrainConfig::validate() const {
    if (total_steps < 1) throw_error(ErrorCategory::config, "total_steps must be >= 1");
    if (batch_size < 1) throw_error(ErrorCategory::config, "batch_size must be >= 1");
    if (warmup_steps < 1) throw_error(ErrorCategory::config, "warmup_steps must be >= 1");
    if (lr_scale <= 0.0) throw_error(ErrorCategory::config, "lr_scale must be positive");
    if (clip_norm < 0.0) throw_error(ErrorCategory::config, "clip_norm must be >= 0");
    if (checkpoint_interval < 0)
        throw_error(ErrorCategory::config, "checkpoint_interval must be >= 0");
}

double lr_schedule(int step, int d_model, int warmup, double scale) {
    if (step < 1) throw_error(ErrorCategory::argument, "schedule step must be >= 1");
    const double s = static_cast<double>(step);
    const double w = static_cast<double>(warmup);
    return scale * std::pow(static_cast<double>(d_model), -0.5) *
           std::min(std::pow(s, -0.5), s * std::pow(w, -1.5));
}

Adam::Adam(ModelParams& params, double beta1, double beta2, double eps)
    : params_(&params), beta1_(beta1), beta2_(beta2), eps_(eps) {
    params.for_each_tensor([this](const std::string&, Eigen::MatrixXf& t) {
        m_.push_back(Eigen::MatrixXf::Zero(t.rows(), t.cols()));
        v_.push_back(Eigen::MatrixXf::Zero(t.rows(), t.cols()));
    });
}

void Adam::apply(const std::vector<Eigen::MatrixXf>& grads, double lr) {
    if (grads.size() != m_.size())
        throw_error(ErrorCategory::argument,
                    "gradient list has " + std::to_string(grads.size()) + " tensors, expected " +
                        std::to_string(m_.size()));
    ++t_;
    const float c1 = 1.0f - static_cast<float>(std::pow(beta1_, t_));
    const float c2 = 1.0f - static_cast<float>(std::pow(beta2_, t_));
    std::size_t i = 0;
    params_->for_each_tensor([&](const std::string& name, Eigen::MatrixXf& t) {
        const Eigen::MatrixXf& g = grads[i];
        if (g.rows() != t.rows() || g.cols() != t.cols())
            throw_error(ErrorCategory::argument, "gradient shape mismatch for " + name);
        m_[i] = static_cast<float>(beta1_) * m_[i] + (1.0f - static_cast<float>(beta1_)) * g;
        v_[i] = static_cast<float>(beta2_) * v_[i] +
                (1.0f - static_cast<float>(beta2_)) * g.cwiseProduct(g);
        const Eigen::ArrayXXf mhat = m_[i].array() / c1;
        const Eigen::ArrayXXf vhat = v_[i].array() / c2;
        t.array() -= static_cast<float>(lr) * mhat / (vhat.sqrt() + static_cast<float>(eps_));
        ++i;
    });
}

BatchResult lm_batch_gradients(const ModelParams& params,
                               const std::vector<CaptionSample>& batch) {
    if (batch.empty()) throw_error(ErrorCategory::argument, "empty batch");
    TapeModel<float> m = make_tape_model<float>(params);

    std::vector<Tape<float>::Index> logits;
    std::vector<TokenSequence> targets;
    for (const CaptionSample& s : batch) {
        if (s.caption.size() < 2)
            throw_error(ErrorCategory::data, "caption too short to train on: " + s.image_id);
        const TokenSequence input(s.caption.begin(), s.caption.end() - 1);
        targets.emplace_back(s.caption.begin() + 1, s.caption.end());
        const auto enc = encode_tape(m, s.visual);
        const int n_kw = static_cast<int>(s.keyword_tokens.size());
        const BoolMat mask = build_attention_mask(n_kw, static_cast<int>(input.size()));
        logits.push_back(decode_tape(m, enc, s.keyword_tokens,
                                     s.indicator.embedding_index(), input, mask));
    }
    const auto loss_node = prompt_lm_loss<float>(m.tape, logits, targets, {});
    m.tape.backward(loss_node);

    BatchResult out;
    out.loss = static_cast<double>(m.tape.value(loss_node)(0, 0));
    params.for_each_tensor([&](const std::string& name, const Eigen::MatrixXf&) {
        out.grads.push_back(m.tape.grad(m.node(name)));
    });
    return out;
}

double global_grad_norm(const std::vector<Eigen::MatrixXf>& grads) {
    double sq = 0.0;
    for (const Eigen::MatrixXf& g : grads) sq += static_cast<double>(g.squaredNorm());
    return std::sqrt(sq);
}

void clip_gradients(std::vector<Eigen::MatrixXf>& grads, double max_norm) {
    if (max_norm <= 0.0) return;
    const double norm = global_grad_norm(grads);
    if (norm <= max_norm) return;
    const float scale = static_cast<float>(max_norm / norm);
    for (Eigen::MatrixXf& g : grads) g *= scale;
}

namespace {

std::vector<StepMetrics> run_training(
    ModelParams& params, const TrainConfig& cfg,
    const std::function<std::vector<CaptionSample>(int)>& next_batch) {
    cfg.validate();
    Adam opt(params);
    std::vector<StepMetrics> metrics;
    std::ofstream metrics_out;
    if (!cfg.metrics_path.empty()) {
        metrics_out.open(cfg.metrics_path);
        if (!metrics_out)
            throw_error(ErrorCategory::io, "cannot write metrics: " + cfg.metrics_path);
    }

    for (int step = 1; step <= cfg.total_steps; ++step) {
        const std::vector<CaptionSample> batch = next_batch(step);
        BatchResult result = lm_batch_gradients(params, batch);
        if (!std::isfinite(result.loss)) {
            std::string ids;
            for (const CaptionSample& s : batch) ids += (ids.empty() ? "" : ", ") + s.image_id;
            throw_error(ErrorCategory::numeric, "non-finite loss at step " +
                                                    std::to_string(step) + " (batch: " + ids + ")");
        }
        clip_gradients(result.grads, cfg.clip_norm);
        const double lr = lr_schedule(step, params.config.d_model, cfg.warmup_steps, cfg.lr_scale);
        opt.apply(result.grads, lr);

        metrics.push_back({step, lr, result.loss});
        if (metrics_out.is_open()) {
            nlohmann::json line = {{"step", step}, {"lr", lr}, {"loss", result.loss}};
            metrics_out << line.dump() << "\n";
        }
        if (!cfg.checkpoint_path.empty() && cfg.checkpoint_interval > 0 &&
            step % cfg.checkpoint_interval == 0 && step != cfg.total_steps)
            save_checkpoint(cfg.checkpoint_path, params);
    }
    if (!cfg.checkpoint_path.empty()) save_checkpoint(cfg.checkpoint_path, params);
    return metrics;
}

} // namespace

std::vector<StepMetrics> train(ModelParams& params, const SampleLoader& loader,
                               BatchIterator& stream, const TrainConfig& cfg) {
    return run_training(params, cfg, [&](int) {
        std::vector<CaptionSample> batch;
        for (const ManifestEntry& e : stream.next()) batch.push_back(loader.load(e));
        return batch;
    });
}

std::vector<StepMetrics> train_in_memory(ModelParams& params,
                                         const std::vector<CaptionSample>& samples,
                                         const TrainConfig& cfg) {
    if (samples.empty()) throw_error(ErrorCategory::argument, "no samples to train on");
    Rng rng(derive_seed(cfg.seed, "train_epochs"));
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    std::size_t cursor = 0;
    return run_training(params, cfg, [&](int) {
        std::vector<CaptionSample> batch;
        for (int b = 0; b < cfg.batch_size; ++b) {
            if (cursor == order.size()) {
                rng.shuffle(order);
                cursor = 0;
            }
            batch.push_back(samples[order[cursor++]]);
        }
        return batch;
    });
}

} // namespace pivotcap
