#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include <Eigen/Dense>

namespace pivotcap {

// Pluggable similarity model. Both sides map into a shared d_e-dimensional
// space; every returned vector must be unit length.
class EmbeddingModel {
public:
    virtual ~EmbeddingModel() = default;
    virtual std::size_t dim() const = 0;
    virtual Eigen::VectorXf embed_text(const std::string& text) const = 0;
    virtual Eigen::VectorXf embed_image(const Eigen::MatrixXf& features) const = 0;
    // identifier string that reconstructs the model via make_embedding_model
    virtual std::string spec() const = 0;
};

// Deterministic stand-in for a real cross-modal model. embed_text draws a
// seeded gaussian vector per word and normalizes; embed_image averages the
// feature grid rows and normalizes, so images built from concept-word
// vectors score highest against those words.
std::unique_ptr<EmbeddingModel> mock_embedding_model(std::uint64_t seed, std::size_t d_e);

// Parses a model spec string, e.g. "mock:42:64". Unknown scheme or malformed
// parameters raise a config error.
std::unique_ptr<EmbeddingModel> make_embedding_model(const std::string& spec);

} // namespace pivotcap
