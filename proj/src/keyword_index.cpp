#include "pivotcap/keyword_index.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "pivotcap/error.hpp"
#include "pivotcap/matio.hpp"

namespace pivotcap {

namespace {
constexpr char kMagic[4] = {'P', 'C', 'I', 'X'};
}

KeywordIndex build_index(const KeywordDictionary& dict, const EmbeddingModel& model) {
    if (dict.entries.empty())
        throw_error(ErrorCategory::data, "cannot index an empty dictionary");
    KeywordIndex index;
    index.dictionary = dict;
    index.model_spec = model.spec();
    const auto d_e = static_cast<Eigen::Index>(model.dim());
    index.matrix.resize(static_cast<Eigen::Index>(dict.entries.size()), d_e);
    for (std::size_t i = 0; i < dict.entries.size(); ++i) {
        Eigen::VectorXf v = model.embed_text(dict.entries[i]);
        if (v.size() != d_e)
            throw_error(ErrorCategory::contract,
                        "embedding dim changed mid-build: got " + std::to_string(v.size()) +
                            " for '" + dict.entries[i] + "', expected " + std::to_string(d_e));
        index.matrix.row(static_cast<Eigen::Index>(i)) = v.transpose();
    }
    return index;
}

KeywordSet extract_keywords_from_query(const Eigen::VectorXf& query, const KeywordIndex& index,
                                       std::size_t k) {
    const auto n = static_cast<std::size_t>(index.matrix.rows());
    if (k < 1 || k > n)
        throw_error(ErrorCategory::argument,
                    "k=" + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
    if (query.size() != index.matrix.cols())
        throw_error(ErrorCategory::argument, "query dim " + std::to_string(query.size()) +
                                                 " != index dim " +
                                                 std::to_string(index.matrix.cols()));
    if (!query.allFinite())
        throw_error(ErrorCategory::contract, "non-finite query embedding");

    // rows and query are unit vectors, so the dot product is the cosine
    Eigen::VectorXf scores = index.matrix * query;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          float sa = scores(static_cast<Eigen::Index>(a));
                          float sb = scores(static_cast<Eigen::Index>(b));
                          if (sa != sb) return sa > sb;
                          return a < b; // tie: lower dictionary position wins
                      });

    KeywordSet out;
    out.keywords.reserve(k);
    out.scores.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        out.keywords.push_back(index.dictionary.entries[order[i]]);
        out.scores.push_back(scores(static_cast<Eigen::Index>(order[i])));
    }
    return out;
}

KeywordSet extract_keywords(const Eigen::MatrixXf& features, const KeywordIndex& index,
                            std::size_t k) {
    auto model = make_embedding_model(index.model_spec);
    Eigen::VectorXf query = model->embed_image(features);
    if (!query.allFinite())
        throw_error(ErrorCategory::contract, "non-finite image embedding");
    return extract_keywords_from_query(query, index, k);
}

void save_index(const KeywordIndex& index, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw_error(ErrorCategory::io, "cannot open for writing: " + path);
    out.write(kMagic, 4);
    write_u32(out, static_cast<std::uint32_t>(index.matrix.cols()));
    write_u32(out, static_cast<std::uint32_t>(index.matrix.rows()));
    write_string(out, index.model_spec);
    write_string(out, index.dictionary_path);
    write_matrix(out, index.matrix);
    if (!out) throw_error(ErrorCategory::io, "write failed: " + path);
}

KeywordIndex load_index(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_error(ErrorCategory::io, "cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw_error(ErrorCategory::data, path + ": not a keyword index file");
    KeywordIndex index;
    auto d_e = read_u32(in, path);
    auto rows = read_u32(in, path);
    index.model_spec = read_string(in, path);
    index.dictionary_path = read_string(in, path);
    index.matrix = read_matrix(in, path);
    if (static_cast<std::uint32_t>(index.matrix.cols()) != d_e ||
        static_cast<std::uint32_t>(index.matrix.rows()) != rows)
        throw_error(ErrorCategory::data, path + ": header/payload shape mismatch");

    if (index.dictionary_path.empty())
        throw_error(ErrorCategory::data, path + ": missing dictionary reference");
    std::filesystem::path dict_path(index.dictionary_path);
    if (dict_path.is_relative())
        dict_path = std::filesystem::path(path).parent_path() / dict_path;
    index.dictionary = load_dictionary(dict_path.string());
    if (index.dictionary.entries.size() != rows)
        throw_error(ErrorCategory::data,
                    path + ": dictionary size " + std::to_string(index.dictionary.entries.size()) +
                        " != index rows " + std::to_string(rows));
    return index;
}

} // namespace pivotcap
