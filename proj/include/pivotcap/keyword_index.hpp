#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pivotcap/embedding.hpp"
#include "pivotcap/vocab.hpp"

namespace pivotcap {

// Embedded dictionary: row i is the unit embedding of dictionary.entries[i].
struct KeywordIndex {
    Eigen::MatrixXf matrix;       // |Q| x d_e
    KeywordDictionary dictionary;
    std::string model_spec;
    std::string dictionary_path;  // by-reference source, may be empty
};

struct KeywordSet {
    std::vector<std::string> keywords; // similarity-descending
    std::vector<float> scores;
};

KeywordIndex build_index(const KeywordDictionary& dict, const EmbeddingModel& model);

// Exact argtop-k by cosine similarity against embed_image(features).
// Ties broken by lower dictionary position.
KeywordSet extract_keywords(const Eigen::MatrixXf& features, const KeywordIndex& index,
                            std::size_t k);

// Same, but for a precomputed unit query vector.
KeywordSet extract_keywords_from_query(const Eigen::VectorXf& query, const KeywordIndex& index,
                                       std::size_t k);

void save_index(const KeywordIndex& index, const std::string& path);
KeywordIndex load_index(const std::string& path);

} // namespace pivotcap
