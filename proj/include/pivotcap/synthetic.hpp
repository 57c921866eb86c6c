#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pivotcap/dataset.hpp"

namespace pivotcap {

// Desk-scale two-style corpus. Every image is a feature grid built from 1-3
// concept vectors; its human-style caption is a canonical template naming the
// concepts, its machine-style caption is a noisy concept list with junk
// tokens. Concepts in the holdout pool never appear in human-style training
// captions, only in machine-style ones; the out-of-domain eval split images
// are built purely from holdout concepts.
struct SyntheticSpec {
    std::size_t n_concepts = 24;
    std::size_t n_holdout = 6;
    std::size_t n_images = 600;
    std::size_t n_eval_images = 100;
    std::size_t grid_rows = 4;
    double feature_noise = 0.1;
    double mc_shuffle_prob = 1.0;
    double mc_drop_prob = 0.2;
    double mc_insert_prob = 0.5;
    std::vector<std::string> hc_markers = {"photo", "showing"};
    std::vector<std::string> mc_markers = {"stock", "img",  "free",     "hd",
                                           "jpg",   "4k",   "pic",      "download"};
    std::string embed_spec = "mock:42:96";
    std::uint64_t seed = 1;
};

SyntheticSpec load_synthetic_spec(const std::string& path);
void save_synthetic_spec(const std::string& path, const SyntheticSpec& spec);

struct SyntheticOutput {
    std::vector<std::string> concepts;
    std::vector<std::string> holdout;
    std::string train_manifest;
    std::string eval_in_manifest;
    std::string eval_ood_manifest;
    std::string eval_in_refs;
    std::string eval_ood_refs;
    std::string corpus_path;
    std::string markers_path;
};

// Writes feature files, the three manifests, reference files for both eval
// splits, the caption corpus and the marker spec under out_dir.
SyntheticOutput generate_synthetic(const SyntheticSpec& spec, const std::string& out_dir);

// The canonical human-style caption: "a <markers...> a c1 and a c2 ...".
std::string canonical_hc_caption(const std::vector<std::string>& concepts,
                                 const std::vector<std::string>& hc_markers);

} // namespace pivotcap
