#include "pivotcap/embedding.hpp"

#include <cmath>

#include "pivotcap/error.hpp"
#include "pivotcap/rng.hpp"

namespace pivotcap {

namespace {

class MockModel : public EmbeddingModel {
public:
    MockModel(std::uint64_t seed, std::size_t d_e) : seed_(seed), dim_(d_e) {
        if (d_e < 2) throw_error(ErrorCategory::config, "embedding dim must be >= 2");
    }

    std::size_t dim() const override { return dim_; }

    Eigen::VectorXf embed_text(const std::string& text) const override {
        Rng rng(derive_seed(seed_, text));
        Eigen::VectorXf v(static_cast<Eigen::Index>(dim_));
        for (Eigen::Index i = 0; i < v.size(); ++i)
            v(i) = static_cast<float>(rng.gaussian());
        float n = v.norm();
        if (n == 0.0f) { // gaussian draw of all zeros is not reachable, but stay safe
            v.setZero();
            v(0) = 1.0f;
            return v;
        }
        return v / n;
    }

    Eigen::VectorXf embed_image(const Eigen::MatrixXf& features) const override {
        if (features.rows() == 0 || features.cols() != static_cast<Eigen::Index>(dim_))
            throw_error(ErrorCategory::contract,
                        "feature grid must be N x " + std::to_string(dim_) + ", got " +
                            std::to_string(features.rows()) + " x " +
                            std::to_string(features.cols()));
        Eigen::VectorXf v = features.colwise().mean().transpose();
        float n = v.norm();
        if (!std::isfinite(n) || n == 0.0f)
            throw_error(ErrorCategory::contract, "feature grid has zero or non-finite mean");
        return v / n;
    }

    std::string spec() const override {
        return "mock:" + std::to_string(seed_) + ":" + std::to_string(dim_);
    }

private:
    std::uint64_t seed_;
    std::size_t dim_;
};

} // namespace

std::unique_ptr<EmbeddingModel> mock_embedding_model(std::uint64_t seed, std::size_t d_e) {
    return std::make_unique<MockModel>(seed, d_e);
}

std::unique_ptr<EmbeddingModel> make_embedding_model(const std::string& spec) {
    auto fail = [&]() {
        throw_error(ErrorCategory::config,
                    "bad embedding model spec '" + spec + "' (expected mock:<seed>:<dim>)");
    };
    auto c1 = spec.find(':');
    if (c1 == std::string::npos) fail();
    auto scheme = spec.substr(0, c1);
    if (scheme != "mock") fail();
    auto c2 = spec.find(':', c1 + 1);
    if (c2 == std::string::npos) fail();
    std::uint64_t seed = 0;
    std::size_t dim = 0;
    try {
        seed = std::stoull(spec.substr(c1 + 1, c2 - c1 - 1));
        dim = std::stoull(spec.substr(c2 + 1));
    } catch (const std::exception&) {
        fail();
    }
    if (dim < 2) fail();
    return mock_embedding_model(seed, dim);
}

} // namespace pivotcap
