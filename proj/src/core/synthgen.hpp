#pragma once

// Synthetic multilingual embedding spaces with planted ground truth.
//
// Row i of language x is
//
//   o_x + sum over features f annotated for x of  s_f * d_{f, value_x(f)}  + noise_i
//
// with noise ~ N(0, sigma^2 I). Directions of one feature's values are
// orthonormal, and all directions are orthogonal to every language offset.
// Languages sharing a value share the same direction vector.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "corpus_model.hpp"
#include "embedding_store.hpp"

namespace typoprobe {

struct SyntheticLanguage {
    LanguageId code;
    std::optional<std::vector<double>> offset;  // generated when absent
};

struct SyntheticFeature {
    WalsFeature feature;
    double scale = 1.0;
    std::map<LanguageId, std::string> values;  // planted value per annotated language
};

struct SyntheticSpec {
    std::size_t dim = 64;
    std::vector<SyntheticLanguage> languages;
    std::vector<SyntheticFeature> features;
    std::vector<LanguagePair> pairs;
    double noise_sigma = 0.0;
    std::size_t sentences_per_language = 1000;
    std::uint64_t seed = 0;
    double offset_norm = 1.0;
    bool orthogonal_offsets = true;
    // Mixes each language's first planted direction into its offset, breaking
    // the orthogonality the method relies on. 0 disables.
    double confound = 0.0;
    std::string encoder_name = "synthetic";
    int layer_index = 12;
    DType dtype = DType::kF32;
    // Top-level keys copied into the generated plan.json (e.g. "train").
    nlohmann::json plan_overrides = nlohmann::json::object();

    void validate() const;
    const SyntheticFeature* find_feature(std::string_view code) const;
};

// `base_dir` resolves a "from_catalogue" path.
SyntheticSpec parse_synthetic_spec(std::string_view text, const std::filesystem::path& base_dir = {});
SyntheticSpec load_synthetic_spec(const std::filesystem::path& path);

// One pair-consistent planted value per included pair, rotating through the
// label set so that every feature with two or more pairs has two classes.
SyntheticSpec replica_spec_from_catalogue(const FeatureCatalogue& catalogue, const std::vector<LanguagePair>& pairs,
                                          double scale, std::size_t max_labels = 0);

struct SyntheticGeometry {
    std::map<LanguageId, std::vector<double>> offsets;
    // (feature code, class index) -> unit direction; only for values in use.
    std::map<std::pair<std::string, int>, std::vector<double>> directions;

    // Noise-free expected row of a language.
    std::vector<double> planted_mean(const SyntheticSpec& spec, const LanguageId& language) const;
    const std::vector<double>& direction(const std::string& feature, int index) const;
};

SyntheticGeometry build_geometry(const SyntheticSpec& spec);

struct SyntheticCorpus {
    std::vector<EmbeddingMatrix> matrices;  // spec language order
    AnnotationTable annotations;
    FeatureCatalogue catalogue;
    SyntheticGeometry geometry;

    const EmbeddingMatrix& matrix(const LanguageId& language) const;
};

SyntheticCorpus generate_corpus(const SyntheticSpec& spec);

struct OracleDelta {
    std::string feature;
    LanguageId neutraliser;
    bool neutraliser_annotated = false;
    std::set<LanguageId> degraded;  // lose their planted signal, includes x itself
    std::set<LanguageId> retained;
    std::set<LanguageId> omitted;   // unannotated for the feature
};

// Predicts, from the planted geometry only, which of `languages` lose the
// feature signal when x's expected centroid is subtracted from them.
OracleDelta oracle_delta(const SyntheticSpec& spec, const SyntheticGeometry& geometry, const std::string& feature,
                         const LanguageId& neutraliser, const std::vector<LanguageId>& languages);

// Writes embeddings/, annotations.tsv, features.json, manifest.json,
// plan.json and ground_truth.json under out_dir.
void write_synthetic_corpus(const SyntheticSpec& spec, const SyntheticCorpus& corpus,
                            const std::filesystem::path& out_dir);

}  // namespace typoprobe
