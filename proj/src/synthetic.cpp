#include "pivotcap/synthetic.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_set>

#include <json.hpp>

#include "pivotcap/embedding.hpp"
#include "pivotcap/error.hpp"
#include "pivotcap/matio.hpp"

namespace pivotcap {

namespace {

void validate(const SyntheticSpec& spec) {
    if (spec.n_concepts < 4)
        throw_error(ErrorCategory::argument, "n_concepts must be >= 4");
    if (spec.n_images < 1)
        throw_error(ErrorCategory::argument, "n_images must be >= 1");
    if (spec.n_holdout < 1 || spec.n_holdout >= spec.n_concepts)
        throw_error(ErrorCategory::argument, "n_holdout must be in [1, n_concepts)");
    if (spec.grid_rows < 1)
        throw_error(ErrorCategory::argument, "grid_rows must be >= 1");
    if (spec.hc_markers.empty() || spec.mc_markers.empty())
        throw_error(ErrorCategory::argument, "both marker sets must be non-empty");
    std::set<std::string> hc(spec.hc_markers.begin(), spec.hc_markers.end());
    for (const auto& m : spec.mc_markers)
        if (hc.count(m))
            throw_error(ErrorCategory::argument, "marker sets must be disjoint, got '" + m + "'");
}

std::vector<std::string> make_concepts(const SyntheticSpec& spec) {
    static const char* consonants = "bdfgklmnprstvz";
    static const char* vowels = "aeiou";
    const std::size_t nc = std::strlen(consonants);
    const std::size_t nv = std::strlen(vowels);
    Rng rng(derive_seed(spec.seed, "concepts"));
    std::unordered_set<std::string> taken(spec.hc_markers.begin(), spec.hc_markers.end());
    taken.insert(spec.mc_markers.begin(), spec.mc_markers.end());
    taken.insert({"a", "and"});
    std::vector<std::string> out;
    while (out.size() < spec.n_concepts) {
        std::string w;
        const std::size_t syllables = 2 + rng.below(2);
        for (std::size_t s = 0; s < syllables; ++s) {
            w.push_back(consonants[rng.below(nc)]);
            w.push_back(vowels[rng.below(nv)]);
        }
        if (taken.count(w)) continue;
        taken.insert(w);
        out.push_back(w);
    }
    return out;
}

std::vector<std::string> sample_concepts(Rng& rng, const std::vector<std::string>& pool,
                                         std::size_t max_count) {
    std::size_t count = 1 + rng.below(std::min<std::uint64_t>(3, max_count));
    count = std::min(count, pool.size());
    std::vector<std::size_t> idx(pool.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    rng.shuffle(idx);
    std::vector<std::string> picked;
    for (std::size_t i = 0; i < count; ++i) picked.push_back(pool[idx[i]]);
    return picked;
}

std::string join(const std::vector<std::string>& words) {
    std::string out;
    for (const auto& w : words) {
        if (!out.empty()) out.push_back(' ');
        out += w;
    }
    return out;
}

std::string mc_caption(Rng& rng, std::vector<std::string> concepts, const SyntheticSpec& spec) {
    if (rng.uniform() < spec.mc_shuffle_prob) rng.shuffle(concepts);
    std::vector<std::string> kept;
    for (const auto& c : concepts)
        if (rng.uniform() >= spec.mc_drop_prob) kept.push_back(c);
    if (kept.empty()) kept.push_back(concepts.front());

    std::vector<std::string> words;
    auto junk = [&]() { return spec.mc_markers[rng.below(spec.mc_markers.size())]; };
    // one marker is guaranteed so the style is always recoverable
    const std::size_t forced = rng.below(kept.size() + 1);
    for (std::size_t i = 0; i <= kept.size(); ++i) {
        if (i == forced) words.push_back(junk());
        else if (rng.uniform() < spec.mc_insert_prob) words.push_back(junk());
        if (i < kept.size()) words.push_back(kept[i]);
    }
    return join(words);
}

Eigen::MatrixXf image_grid(const std::vector<std::string>& concepts, const SyntheticSpec& spec,
                           const EmbeddingModel& model, const std::string& image_id) {
    Rng rng(derive_seed(spec.seed, "feat:" + image_id));
    const auto d = static_cast<Eigen::Index>(model.dim());
    // one row per concept; remaining rows carry the normalized concept mean,
    // so the grid mean stays an equal-weight blend of the concepts
    Eigen::VectorXf mean = Eigen::VectorXf::Zero(d);
    std::vector<Eigen::VectorXf> bases;
    for (const auto& c : concepts) {
        bases.push_back(model.embed_text(c));
        mean += bases.back();
    }
    mean.normalize();
    Eigen::MatrixXf grid(static_cast<Eigen::Index>(spec.grid_rows), d);
    for (std::size_t r = 0; r < spec.grid_rows; ++r) {
        Eigen::VectorXf v = r < bases.size() ? bases[r] : mean;
        for (Eigen::Index j = 0; j < d; ++j)
            v(j) += static_cast<float>(spec.feature_noise * rng.gaussian());
        grid.row(static_cast<Eigen::Index>(r)) = v.transpose() / v.norm();
    }
    return grid;
}

} // namespace

std::string canonical_hc_caption(const std::vector<std::string>& concepts,
                                 const std::vector<std::string>& hc_markers) {
    std::vector<std::string> words;
    words.push_back("a");
    words.insert(words.end(), hc_markers.begin(), hc_markers.end());
    for (std::size_t i = 0; i < concepts.size(); ++i) {
        if (i > 0) words.push_back("and");
        words.push_back("a");
        words.push_back(concepts[i]);
    }
    return join(words);
}

SyntheticSpec load_synthetic_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw_error(ErrorCategory::io, "cannot open: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw_error(ErrorCategory::data, path + ": " + e.what());
    }
    SyntheticSpec spec;
    static const std::set<std::string> known = {
        "n_concepts",    "n_holdout",      "n_images",       "n_eval_images",
        "grid_rows",     "feature_noise",  "mc_shuffle_prob", "mc_drop_prob",
        "mc_insert_prob", "hc_markers",    "mc_markers",     "embed_spec",
        "seed"};
    for (auto it = doc.begin(); it != doc.end(); ++it)
        if (!known.count(it.key()))
            throw_error(ErrorCategory::config, path + ": unknown key '" + it.key() + "'");
    try {
        if (doc.contains("n_concepts")) spec.n_concepts = doc["n_concepts"].get<std::size_t>();
        if (doc.contains("n_holdout")) spec.n_holdout = doc["n_holdout"].get<std::size_t>();
        if (doc.contains("n_images")) spec.n_images = doc["n_images"].get<std::size_t>();
        if (doc.contains("n_eval_images"))
            spec.n_eval_images = doc["n_eval_images"].get<std::size_t>();
        if (doc.contains("grid_rows")) spec.grid_rows = doc["grid_rows"].get<std::size_t>();
        if (doc.contains("feature_noise"))
            spec.feature_noise = doc["feature_noise"].get<double>();
        if (doc.contains("mc_shuffle_prob"))
            spec.mc_shuffle_prob = doc["mc_shuffle_prob"].get<double>();
        if (doc.contains("mc_drop_prob")) spec.mc_drop_prob = doc["mc_drop_prob"].get<double>();
        if (doc.contains("mc_insert_prob"))
            spec.mc_insert_prob = doc["mc_insert_prob"].get<double>();
        if (doc.contains("hc_markers"))
            spec.hc_markers = doc["hc_markers"].get<std::vector<std::string>>();
        if (doc.contains("mc_markers"))
            spec.mc_markers = doc["mc_markers"].get<std::vector<std::string>>();
        if (doc.contains("embed_spec")) spec.embed_spec = doc["embed_spec"].get<std::string>();
        if (doc.contains("seed")) spec.seed = doc["seed"].get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw_error(ErrorCategory::data, path + ": " + e.what());
    }
    return spec;
}

void save_synthetic_spec(const std::string& path, const SyntheticSpec& spec) {
    nlohmann::json doc = {
        {"n_concepts", spec.n_concepts},
        {"n_holdout", spec.n_holdout},
        {"n_images", spec.n_images},
        {"n_eval_images", spec.n_eval_images},
        {"grid_rows", spec.grid_rows},
        {"feature_noise", spec.feature_noise},
        {"mc_shuffle_prob", spec.mc_shuffle_prob},
        {"mc_drop_prob", spec.mc_drop_prob},
        {"mc_insert_prob", spec.mc_insert_prob},
        {"hc_markers", spec.hc_markers},
        {"mc_markers", spec.mc_markers},
        {"embed_spec", spec.embed_spec},
        {"seed", spec.seed},
    };
    std::ofstream out(path);
    if (!out) throw_error(ErrorCategory::io, "cannot open for writing: " + path);
    out << doc.dump(2) << '\n';
    if (!out) throw_error(ErrorCategory::io, "write failed: " + path);
}

SyntheticOutput generate_synthetic(const SyntheticSpec& spec, const std::string& out_dir) {
    validate(spec);
    auto model = make_embedding_model(spec.embed_spec);

    namespace fs = std::filesystem;
    fs::create_directories(fs::path(out_dir) / "features");

    SyntheticOutput out;
    out.concepts = make_concepts(spec);
    std::vector<std::string> shared(out.concepts.begin(),
                                    out.concepts.end() - static_cast<std::ptrdiff_t>(spec.n_holdout));
    out.holdout.assign(out.concepts.end() - static_cast<std::ptrdiff_t>(spec.n_holdout),
                       out.concepts.end());

    std::vector<ManifestEntry> train;
    std::vector<std::string> corpus_lines;
    Rng trng(derive_seed(spec.seed, "train"));
    for (std::size_t i = 0; i < spec.n_images; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "tr_%05zu", i);
        auto concepts = sample_concepts(trng, out.concepts, std::min<std::size_t>(3, spec.grid_rows));
        const bool has_holdout = std::any_of(concepts.begin(), concepts.end(), [&](const auto& c) {
            return std::find(out.holdout.begin(), out.holdout.end(), c) != out.holdout.end();
        });
        auto grid = image_grid(concepts, spec, *model, id);
        std::string rel = std::string("features/") + id + ".bin";
        write_matrix_file((fs::path(out_dir) / rel).string(), grid);

        std::string mc = mc_caption(trng, concepts, spec);
        train.push_back({id, rel, mc, "synth_mc", "train"});
        corpus_lines.push_back(mc);
        if (!has_holdout) {
            std::string hc = canonical_hc_caption(concepts, spec.hc_markers);
            train.push_back({id, rel, hc, "synth_hc", "train"});
            corpus_lines.push_back(hc);
        }
    }

    struct EvalSplit {
        const char* name;
        const std::vector<std::string>* pool;
        std::string manifest_path;
        std::string refs_path;
    };
    EvalSplit splits[2] = {{"eval_in", &shared, "", ""}, {"eval_ood", &out.holdout, "", ""}};
    for (auto& split : splits) {
        Rng erng(derive_seed(spec.seed, split.name));
        std::vector<ManifestEntry> manifest;
        std::ofstream refs((fs::path(out_dir) / (std::string(split.name) + "_refs.jsonl")).string());
        if (!refs) throw_error(ErrorCategory::io, "cannot write refs for " + std::string(split.name));
        for (std::size_t i = 0; i < spec.n_eval_images; ++i) {
            char id[32];
            std::snprintf(id, sizeof id, "%s_%04zu", split.name, i);
            auto concepts = sample_concepts(erng, *split.pool, std::min<std::size_t>(3, spec.grid_rows));
            auto grid = image_grid(concepts, spec, *model, id);
            std::string rel = std::string("features/") + id + ".bin";
            write_matrix_file((fs::path(out_dir) / rel).string(), grid);
            std::string hc = canonical_hc_caption(concepts, spec.hc_markers);
            manifest.push_back({id, rel, hc, "synth_hc", split.name});
            nlohmann::json ref = {{"image_id", id},
                                  {"references", {hc}},
                                  {"labels", concepts}};
            refs << ref.dump() << '\n';
        }
        split.manifest_path = (fs::path(out_dir) / (std::string(split.name) + ".jsonl")).string();
        save_manifest(split.manifest_path, manifest);
        split.refs_path = (fs::path(out_dir) / (std::string(split.name) + "_refs.jsonl")).string();
    }

    out.train_manifest = (fs::path(out_dir) / "train.jsonl").string();
    save_manifest(out.train_manifest, train);
    out.eval_in_manifest = splits[0].manifest_path;
    out.eval_ood_manifest = splits[1].manifest_path;
    out.eval_in_refs = splits[0].refs_path;
    out.eval_ood_refs = splits[1].refs_path;

    out.corpus_path = (fs::path(out_dir) / "corpus.txt").string();
    {
        std::ofstream corpus(out.corpus_path);
        if (!corpus) throw_error(ErrorCategory::io, "cannot write corpus");
        for (const auto& line : corpus_lines) corpus << line << '\n';
    }

    out.markers_path = (fs::path(out_dir) / "markers.json").string();
    {
        nlohmann::json markers = {{"hc", spec.hc_markers}, {"mc", spec.mc_markers}};
        std::ofstream mk(out.markers_path);
        if (!mk) throw_error(ErrorCategory::io, "cannot write markers");
        mk << markers.dump(2) << '\n';
    }

    std::ofstream concepts_file((fs::path(out_dir) / "concepts.tsv").string());
    for (const auto& c : out.concepts) {
        const bool held =
            std::find(out.holdout.begin(), out.holdout.end(), c) != out.holdout.end();
        concepts_file << c << '\t' << (held ? "holdout" : "shared") << '\n';
    }
    return out;
}

} // namespace pivotcap
