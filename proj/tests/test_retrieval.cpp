#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unistd.h>

#include "pivotcap/embedding.hpp"
#include "pivotcap/error.hpp"
#include "pivotcap/keyword_index.hpp"
#include "pivotcap/matio.hpp"
#include "pivotcap/rng.hpp"
#include "pivotcap/vocab.hpp"

using namespace pivotcap;

namespace {

std::string temp_path(const std::string& name) {
    static int counter = 0;
    auto dir = std::filesystem::temp_directory_path() /
               ("pivotcap_retr_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    return (dir / (std::to_string(counter++) + "_" + name)).string();
}

KeywordDictionary make_dict(std::size_t n, const std::string& prefix = "entry_") {
    KeywordDictionary d;
    for (std::size_t i = 0; i < n; ++i) {
        d.entries.push_back(prefix + std::to_string(i));
        d.frequencies.push_back(n - i);
    }
    return d;
}

// Test-only model mapping entry_i to basis vector e_i.
class BasisModel : public EmbeddingModel {
public:
    explicit BasisModel(std::size_t d) : d_(d) {}
    std::size_t dim() const override { return d_; }
    Eigen::VectorXf embed_text(const std::string& text) const override {
        auto us = text.rfind('_');
        auto i = std::stoul(text.substr(us + 1));
        Eigen::VectorXf v = Eigen::VectorXf::Zero(static_cast<Eigen::Index>(d_));
        v(static_cast<Eigen::Index>(i)) = 1.0f;
        return v;
    }
    Eigen::VectorXf embed_image(const Eigen::MatrixXf& features) const override {
        Eigen::VectorXf v = features.colwise().mean().transpose();
        return v / v.norm();
    }
    std::string spec() const override { return "basis:" + std::to_string(d_); }

private:
    std::size_t d_;
};

// Exhaustive selection oracle: full stable sort over per-row dot products.
std::vector<std::size_t> oracle_topk(const Eigen::MatrixXf& rows, const Eigen::VectorXf& q,
                                     std::size_t k) {
    std::vector<std::size_t> order(static_cast<std::size_t>(rows.rows()));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return rows.row(static_cast<Eigen::Index>(a)).dot(q) >
               rows.row(static_cast<Eigen::Index>(b)).dot(q);
    });
    order.resize(k);
    return order;
}

} // namespace

TEST_CASE("rng: identical seeds give identical streams") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng c(42), d(43);
    bool all_equal = true;
    for (int i = 0; i < 10; ++i) all_equal = all_equal && (c.next_u64() == d.next_u64());
    CHECK(!all_equal);
}

TEST_CASE("rng: uniform range and gaussian sanity") {
    Rng r(7);
    double sum = 0.0;
    for (int i = 0; i < 10000; ++i) {
        double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        sum += u;
    }
    CHECK(sum / 10000.0 == doctest::Approx(0.5).epsilon(0.02));
    double gsum = 0.0, gsq = 0.0;
    for (int i = 0; i < 10000; ++i) {
        double g = r.gaussian();
        REQUIRE(std::isfinite(g));
        gsum += g;
        gsq += g * g;
    }
    CHECK(gsum / 10000.0 == doctest::Approx(0.0).epsilon(0.05));
    CHECK(gsq / 10000.0 == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("rng: shuffle preserves the multiset") {
    Rng r(3);
    std::vector<int> v(50);
    std::iota(v.begin(), v.end(), 0);
    auto orig = v;
    r.shuffle(v);
    CHECK(v != orig);
    std::sort(v.begin(), v.end());
    CHECK(v == orig);
}

TEST_CASE("rng: fnv1a known value") {
    CHECK(fnv1a("") == 0xcbf29ce484222325ull);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cull);
}

TEST_CASE("matio: matrix round trip") {
    Rng r(5);
    Eigen::MatrixXf m(7, 3);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            m(i, j) = static_cast<float>(r.gaussian());
    auto path = temp_path("mat.bin");
    write_matrix_file(path, m);
    auto back = read_matrix_file(path);
    REQUIRE(back.rows() == m.rows());
    REQUIRE(back.cols() == m.cols());
    CHECK(back.isApprox(m, 0.0f));
}

TEST_CASE("matio: malformed files are data errors") {
    auto path = temp_path("bad.bin");
    std::ofstream(path, std::ios::binary) << "NOPE";
    CHECK_THROWS_AS(read_matrix_file(path), Error);
    CHECK_THROWS_AS(read_matrix_file(temp_path("missing.bin")), Error);
}

TEST_CASE("mock model: determinism and unit norm") {
    auto m = mock_embedding_model(11, 24);
    auto a = m->embed_text("giraffe");
    auto b = m->embed_text("giraffe");
    CHECK(a.isApprox(b, 0.0f));
    CHECK(std::abs(a.norm() - 1.0f) < 1e-6f);
    auto c = m->embed_text("zebra");
    CHECK(!a.isApprox(c));

    Eigen::MatrixXf grid(4, 24);
    Rng r(2);
    for (Eigen::Index i = 0; i < grid.size(); ++i)
        grid(i / 24, i % 24) = static_cast<float>(r.gaussian());
    auto img = m->embed_image(grid);
    CHECK(std::abs(img.norm() - 1.0f) < 1e-6f);
    CHECK(m->embed_image(grid).isApprox(img, 0.0f));
}

TEST_CASE("mock model: spec string round trips through the factory") {
    auto m = mock_embedding_model(99, 16);
    auto again = make_embedding_model(m->spec());
    CHECK(again->dim() == 16);
    CHECK(again->embed_text("horse").isApprox(m->embed_text("horse"), 0.0f));
}

TEST_CASE("mock model factory: malformed specs rejected") {
    CHECK_THROWS_AS(make_embedding_model("mock"), Error);
    CHECK_THROWS_AS(make_embedding_model("mock:abc:16"), Error);
    CHECK_THROWS_AS(make_embedding_model("clip:1:2"), Error);
    CHECK_THROWS_AS(make_embedding_model("mock:5:1"), Error);
}

TEST_CASE("build_index: basis embedding gives the identity") {
    auto dict = make_dict(3);
    BasisModel model(3);
    auto index = build_index(dict, model);
    CHECK(index.matrix.isApprox(Eigen::MatrixXf::Identity(3, 3), 0.0f));
}

TEST_CASE("build_index: row norms are 1 for random entries") {
    auto dict = make_dict(100, "word_");
    auto model = mock_embedding_model(4, 32);
    auto index = build_index(dict, *model);
    for (Eigen::Index i = 0; i < index.matrix.rows(); ++i)
        CHECK(std::abs(index.matrix.row(i).norm() - 1.0f) < 1e-6f);
}

TEST_CASE("build_index: per-entry loop oracle for scores") {
    auto dict = make_dict(60, "kw_");
    auto model = mock_embedding_model(8, 16);
    auto index = build_index(dict, *model);
    Rng r(6);
    Eigen::VectorXf q(16);
    for (Eigen::Index i = 0; i < 16; ++i) q(i) = static_cast<float>(r.gaussian());
    q.normalize();
    Eigen::VectorXf batch = index.matrix * q;
    for (Eigen::Index i = 0; i < index.matrix.rows(); ++i) {
        float one = model->embed_text(dict.entries[static_cast<std::size_t>(i)]).dot(q);
        CHECK(batch(i) == doctest::Approx(one).epsilon(1e-6));
    }
}

TEST_CASE("build_index: empty dictionary rejected") {
    BasisModel model(3);
    CHECK_THROWS_AS(build_index(KeywordDictionary{}, model), Error);
}

TEST_CASE("extract: orthogonal basis") {
    auto dict = make_dict(3);
    BasisModel model(3);
    auto index = build_index(dict, model);
    Eigen::VectorXf q = Eigen::VectorXf::Zero(3);
    q(2) = 1.0f;
    auto ks = extract_keywords_from_query(q, index, 1);
    REQUIRE(ks.keywords.size() == 1);
    CHECK(ks.keywords[0] == "entry_2");
    CHECK(ks.scores[0] == doctest::Approx(1.0));
}

TEST_CASE("extract: k equals dictionary size returns all, sorted") {
    auto dict = make_dict(8, "w_");
    auto model = mock_embedding_model(3, 8);
    auto index = build_index(dict, *model);
    Eigen::VectorXf q = model->embed_text("w_5");
    auto ks = extract_keywords_from_query(q, index, 8);
    CHECK(ks.keywords.size() == 8);
    CHECK(ks.keywords[0] == "w_5");
    for (std::size_t i = 0; i + 1 < ks.scores.size(); ++i)
        CHECK(ks.scores[i] >= ks.scores[i + 1]);
    std::vector<std::string> sorted = ks.keywords;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::string> expect = dict.entries;
    std::sort(expect.begin(), expect.end());
    CHECK(sorted == expect);
}

TEST_CASE("extract: brute-force argtop-k oracle on a 10k index") {
    auto dict = make_dict(10000, "q");
    auto model = mock_embedding_model(17, 16);
    auto index = build_index(dict, *model);
    Rng r(29);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXf q(16);
        for (Eigen::Index i = 0; i < 16; ++i) q(i) = static_cast<float>(r.gaussian());
        q.normalize();
        auto ks = extract_keywords_from_query(q, index, 5);
        auto expect = oracle_topk(index.matrix, q, 5);
        REQUIRE(ks.keywords.size() == 5);
        for (std::size_t i = 0; i < 5; ++i)
            CHECK(ks.keywords[i] == dict.entries[expect[i]]);
        // monotonicity: the 5th score dominates every non-selected score
        Eigen::VectorXf scores = index.matrix * q;
        float kth = ks.scores.back();
        std::vector<bool> picked(10000, false);
        for (auto i : expect) picked[i] = true;
        for (std::size_t i = 0; i < 10000; ++i)
            if (!picked[i]) CHECK(kth >= scores(static_cast<Eigen::Index>(i)));
    }
}

TEST_CASE("extract: ties broken by lower dictionary position") {
    KeywordDictionary dict;
    dict.entries = {"first", "second", "third"};
    dict.frequencies = {3, 2, 1};
    KeywordIndex index;
    index.dictionary = dict;
    index.model_spec = "mock:0:4";
    index.matrix.resize(3, 4);
    index.matrix.row(0) << 1, 0, 0, 0;
    index.matrix.row(1) << 1, 0, 0, 0; // exact tie with row 0
    index.matrix.row(2) << 0, 1, 0, 0;
    Eigen::VectorXf q(4);
    q << 1, 0, 0, 0;
    auto ks = extract_keywords_from_query(q, index, 2);
    CHECK(ks.keywords == std::vector<std::string>{"first", "second"});
}

TEST_CASE("extract: permutation covariance") {
    auto dict = make_dict(40, "p_");
    auto model = mock_embedding_model(31, 12);
    auto index = build_index(dict, *model);
    Eigen::VectorXf q = model->embed_text("p_7");

    KeywordDictionary rev;
    for (std::size_t i = dict.size(); i-- > 0;) {
        rev.entries.push_back(dict.entries[i]);
        rev.frequencies.push_back(dict.frequencies[i]);
    }
    auto rindex = build_index(rev, *model);
    auto a = extract_keywords_from_query(q, index, 6);
    auto b = extract_keywords_from_query(q, rindex, 6);
    CHECK(a.keywords == b.keywords);
    CHECK(a.scores == b.scores);
}

TEST_CASE("extract: argument and contract errors") {
    auto dict = make_dict(4);
    BasisModel model(4);
    auto index = build_index(dict, model);
    Eigen::VectorXf q = Eigen::VectorXf::Unit(4, 0);
    CHECK_THROWS_AS(extract_keywords_from_query(q, index, 5), Error);
    CHECK_THROWS_AS(extract_keywords_from_query(q, index, 0), Error);
    Eigen::VectorXf bad = q;
    bad(1) = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(extract_keywords_from_query(bad, index, 1), Error);
    Eigen::VectorXf small = Eigen::VectorXf::Unit(3, 0);
    CHECK_THROWS_AS(extract_keywords_from_query(small, index, 1), Error);
}

TEST_CASE("extract: image built from two concepts retrieves both words") {
    auto dict = make_dict(50, "concept");
    auto model = mock_embedding_model(42, 32);
    auto index = build_index(dict, *model);
    Eigen::MatrixXf grid(2, 32);
    grid.row(0) = model->embed_text("concept3").transpose();
    grid.row(1) = model->embed_text("concept7").transpose();
    auto ks = extract_keywords(grid, index, 2);
    std::vector<std::string> got = ks.keywords;
    std::sort(got.begin(), got.end());
    CHECK(got == std::vector<std::string>{"concept3", "concept7"});
}

TEST_CASE("index: save/load round trip") {
    auto dict = make_dict(12, "tok_");
    auto model = mock_embedding_model(13, 8);
    auto index = build_index(dict, *model);

    auto dict_path = temp_path("dict.tsv");
    save_dictionary(dict_path, dict);
    index.dictionary_path = std::filesystem::path(dict_path).filename().string();
    auto index_path =
        (std::filesystem::path(dict_path).parent_path() / "index.bin").string();
    save_index(index, index_path);

    auto back = load_index(index_path);
    CHECK(back.model_spec == index.model_spec);
    CHECK(back.matrix.isApprox(index.matrix, 0.0f));
    CHECK(back.dictionary.entries == dict.entries);

    auto ks = extract_keywords_from_query(model->embed_text("tok_4"), back, 3);
    CHECK(ks.keywords[0] == "tok_4");
}

TEST_CASE("index: load rejects corrupt files") {
    auto path = temp_path("corrupt.idx");
    std::ofstream(path, std::ios::binary) << "PCIXgarbage";
    CHECK_THROWS_AS(load_index(path), Error);
    CHECK_THROWS_AS(load_index(temp_path("absent.idx")), Error);
}
