#include "synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "error.hpp"
#include "io_util.hpp"
#include "rng.hpp"

namespace typoprobe {

using nlohmann::json;

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

// Removes the components along `basis` (orthonormal) twice, for stability.
void project_out(std::vector<double>& v, const std::vector<std::vector<double>>& basis) {
    for (int pass = 0; pass < 2; ++pass) {
        for (const auto& q : basis) {
            const double c = dot(v, q);
            for (std::size_t i = 0; i < v.size(); ++i) v[i] -= c * q[i];
        }
    }
}

std::vector<double> gaussian_vector(Rng& rng, std::size_t dim) {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.normal();
    return v;
}

// Extends `basis` by a unit vector orthogonal to it, starting from `v`.
bool append_orthonormal(std::vector<std::vector<double>>& basis, std::vector<double> v) {
    const double before = norm(v);
    project_out(v, basis);
    const double after = norm(v);
    if (!(after > 1e-8 * std::max(before, 1.0))) return false;
    for (double& x : v) x /= after;
    basis.push_back(std::move(v));
    return true;
}

}  // namespace

void SyntheticSpec::validate() const {
    if (dim < 1) fail(ErrorCode::kBadInput, "synthetic spec: dim must be positive");
    if (languages.empty()) fail(ErrorCode::kBadInput, "synthetic spec: no languages");
    if (sentences_per_language < 1) fail(ErrorCode::kBadInput, "synthetic spec: sentences_per_language must be positive");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
        fail(ErrorCode::kBadInput, "synthetic spec: noise_sigma must be non-negative");
    }
    if (!(offset_norm >= 0.0) || !std::isfinite(offset_norm)) {
        fail(ErrorCode::kBadInput, "synthetic spec: offset_norm must be non-negative");
    }
    if (!(confound >= 0.0) || !std::isfinite(confound)) fail(ErrorCode::kBadInput, "synthetic spec: confound must be >= 0");
    if (layer_index < 0 || layer_index > kMaxLayerIndex) fail(ErrorCode::kBadInput, "synthetic spec: layer out of range");
    std::set<LanguageId> langs;
    for (const auto& l : languages) {
        if (!langs.insert(l.code).second) fail(ErrorCode::kBadInput, "synthetic spec: duplicate language " + l.code.str());
        if (l.offset && l.offset->size() != dim) {
            fail(ErrorCode::kBadInput, "synthetic spec: offset of " + l.code.str() + " has the wrong length");
        }
        if (l.offset && std::any_of(l.offset->begin(), l.offset->end(), [](double v) { return !std::isfinite(v); })) {
            fail(ErrorCode::kBadInput, "synthetic spec: offset of " + l.code.str() + " is not finite");
        }
    }
    std::set<std::string> codes;
    for (const auto& f : features) {
        if (!codes.insert(f.feature.code).second) {
            fail(ErrorCode::kBadInput, "synthetic spec: duplicate feature " + f.feature.code);
        }
        if (!(f.scale > 0.0) || !std::isfinite(f.scale)) {
            fail(ErrorCode::kBadInput, "synthetic spec: feature " + f.feature.code + " needs a positive scale");
        }
        for (const auto& [lang, label] : f.values) {
            if (!langs.count(lang)) {
                fail(ErrorCode::kBadInput, "synthetic spec: feature " + f.feature.code + " annotates unknown language " +
                                               lang.str());
            }
            if (!f.feature.value_of(label)) {
                fail(ErrorCode::kBadInput, "synthetic spec: '" + label + "' is not a label of " + f.feature.code);
            }
        }
    }
    try {
        validate_pairs(pairs);
    } catch (const Error& e) {
        fail(ErrorCode::kBadInput, std::string("synthetic spec: ") + e.what());
    }
    for (const auto& p : pairs) {
        if (!langs.count(p.train_language) || !langs.count(p.test_language)) {
            fail(ErrorCode::kBadInput, "synthetic spec: pair " + std::to_string(p.pair_index) +
                                           " uses a language that is not generated");
        }
    }
}

const SyntheticFeature* SyntheticSpec::find_feature(std::string_view code) const {
    for (const auto& f : features) {
        if (f.feature.code == code) return &f;
    }
    return nullptr;
}

SyntheticSpec replica_spec_from_catalogue(const FeatureCatalogue& catalogue, const std::vector<LanguagePair>& pairs,
                                          double scale, std::size_t max_labels) {
    SyntheticSpec spec;
    spec.pairs = pairs;
    for (const auto& p : pairs) {
        spec.languages.push_back({p.train_language, std::nullopt});
        spec.languages.push_back({p.test_language, std::nullopt});
    }
    std::size_t feature_no = 0;
    for (const auto& wf : catalogue.features()) {
        SyntheticFeature sf;
        sf.feature = wf;
        sf.scale = scale;
        std::vector<const LanguagePair*> included;
        for (const auto& p : pairs) {
            if (std::find(wf.excluded_pairs.begin(), wf.excluded_pairs.end(), p.pair_index) == wf.excluded_pairs.end()) {
                included.push_back(&p);
            }
        }
        std::size_t k = wf.labels.size();
        if (max_labels > 0) k = std::min(k, max_labels);
        k = std::max<std::size_t>(1, std::min(k, included.size()));
        for (std::size_t j = 0; j < included.size(); ++j) {
            const auto& label = wf.labels[(j + feature_no) % k];
            sf.values[included[j]->train_language] = label;
            sf.values[included[j]->test_language] = label;
        }
        spec.features.push_back(std::move(sf));
        ++feature_no;
    }
    return spec;
}

SyntheticSpec parse_synthetic_spec(std::string_view text, const std::filesystem::path& base_dir) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(ErrorCode::kBadInput, std::string("synthetic spec: ") + e.what());
    }
    SyntheticSpec spec;
    try {
        std::vector<LanguagePair> pairs;
        if (doc.contains("pairs")) {
            int index = 0;
            for (const auto& p : doc["pairs"]) {
                pairs.push_back({LanguageId(p.at(0).get<std::string>()), LanguageId(p.at(1).get<std::string>()), ++index});
            }
        } else {
            pairs = standard_pairs();
        }

        if (doc.contains("from_catalogue")) {
            const auto& fc = doc["from_catalogue"];
            const auto cat = load_feature_catalogue(base_dir / fc.at("path").get<std::string>());
            spec = replica_spec_from_catalogue(cat, pairs, fc.value("scale", 1.0), fc.value("max_labels", std::size_t{0}));
        } else {
            spec.pairs = pairs;
        }

        spec.dim = doc.at("dim").get<std::size_t>();
        spec.noise_sigma = doc.value("noise_sigma", 0.0);
        spec.sentences_per_language = doc.at("sentences_per_language").get<std::size_t>();
        spec.seed = doc.value("seed", std::uint64_t{0});
        spec.offset_norm = doc.value("offset_norm", 1.0);
        spec.orthogonal_offsets = doc.value("orthogonal_offsets", true);
        spec.confound = doc.value("confound", 0.0);
        spec.encoder_name = doc.value("encoder", std::string("synthetic"));
        spec.layer_index = doc.value("layer", 12);
        const auto dtype = doc.value("dtype", std::string("f32"));
        if (dtype == "f32") {
            spec.dtype = DType::kF32;
        } else if (dtype == "f64") {
            spec.dtype = DType::kF64;
        } else {
            fail(ErrorCode::kBadInput, "synthetic spec: unknown dtype '" + dtype + "'");
        }

        if (doc.contains("plan")) {
            if (!doc["plan"].is_object()) fail(ErrorCode::kBadInput, "synthetic spec: 'plan' must be an object");
            spec.plan_overrides = doc["plan"];
        }

        if (doc.contains("languages")) {
            spec.languages.clear();
            for (const auto& l : doc["languages"]) {
                if (l.is_string()) {
                    spec.languages.push_back({LanguageId(l.get<std::string>()), std::nullopt});
                } else {
                    SyntheticLanguage sl{LanguageId(l.at("code").get<std::string>()), std::nullopt};
                    if (l.contains("offset")) sl.offset = l["offset"].get<std::vector<double>>();
                    spec.languages.push_back(std::move(sl));
                }
            }
        } else if (spec.languages.empty()) {
            for (const auto& p : spec.pairs) {
                spec.languages.push_back({p.train_language, std::nullopt});
                spec.languages.push_back({p.test_language, std::nullopt});
            }
        }

        if (doc.contains("features")) {
            for (const auto& f : doc["features"]) {
                SyntheticFeature sf;
                sf.feature.code = f.at("code").get<std::string>();
                if (!is_valid_feature_code(sf.feature.code)) {
                    fail(ErrorCode::kBadInput, "synthetic spec: invalid feature code '" + sf.feature.code + "'");
                }
                sf.feature.name = f.value("name", sf.feature.code);
                const auto cat = parse_category(f.value("category", std::string("WordOrder")));
                if (!cat) fail(ErrorCode::kBadInput, "synthetic spec: unknown category for " + sf.feature.code);
                sf.feature.category = *cat;
                sf.feature.labels = f.at("labels").get<std::vector<std::string>>();
                sf.scale = f.value("scale", 1.0);
                for (const auto& [lang, label] : f.at("values").items()) {
                    sf.values[LanguageId(lang)] = label.get<std::string>();
                }
                spec.features.push_back(std::move(sf));
            }
        }
    } catch (const json::exception& e) {
        fail(ErrorCode::kBadInput, std::string("synthetic spec: ") + e.what());
    } catch (const Error& e) {
        fail(ErrorCode::kBadInput, e.what());
    }
    spec.validate();
    return spec;
}

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path) {
    return parse_synthetic_spec(read_text_file(path), path.parent_path());
}

std::vector<double> SyntheticGeometry::planted_mean(const SyntheticSpec& spec, const LanguageId& language) const {
    auto it = offsets.find(language);
    if (it == offsets.end()) fail(ErrorCode::kInvalidArgument, "language " + language.str() + " is not generated");
    std::vector<double> mean = it->second;
    for (const auto& f : spec.features) {
        auto v = f.values.find(language);
        if (v == f.values.end()) continue;
        const auto& d = direction(f.feature.code, f.feature.value_of(v->second)->index);
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += f.scale * d[i];
    }
    return mean;
}

const std::vector<double>& SyntheticGeometry::direction(const std::string& feature, int index) const {
    auto it = directions.find({feature, index});
    if (it == directions.end()) {
        fail(ErrorCode::kInvalidArgument, "no planted direction for " + feature + " value " + std::to_string(index));
    }
    return it->second;
}

SyntheticGeometry build_geometry(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(spec.seed, "geometry");
    SyntheticGeometry g;

    // Only values that some language carries get a direction.
    std::vector<std::pair<std::string, int>> needed;
    for (const auto& f : spec.features) {
        std::set<int> used;
        for (const auto& [lang, label] : f.values) used.insert(f.feature.value_of(label)->index);
        for (int idx : used) needed.emplace_back(f.feature.code, idx);
    }

    std::vector<std::vector<double>> offset_basis;
    std::size_t offset_rank = 0;
    for (const auto& l : spec.languages) {
        std::vector<double> o;
        if (l.offset) {
            o = *l.offset;
        } else {
            o = gaussian_vector(rng, spec.dim);
            if (spec.orthogonal_offsets) project_out(o, offset_basis);
            const double n = norm(o);
            if (!(n > 1e-8)) {
                fail(ErrorCode::kBadInput, "cannot orthogonalize: " + std::to_string(spec.languages.size()) +
                                               " language offsets do not fit in dim " + std::to_string(spec.dim));
            }
            for (double& x : o) x *= spec.offset_norm / n;
        }
        if (spec.offset_norm > 0.0 || l.offset) {
            if (append_orthonormal(offset_basis, o)) ++offset_rank;
        }
        g.offsets[l.code] = std::move(o);
    }

    if (offset_rank + needed.size() > spec.dim) {
        fail(ErrorCode::kBadInput, "cannot orthogonalize: " + std::to_string(needed.size()) + " feature directions and " +
                                       std::to_string(offset_rank) + " offset dimensions need more than dim " +
                                       std::to_string(spec.dim));
    }
    std::vector<std::vector<double>> basis = offset_basis;
    for (const auto& key : needed) {
        bool ok = false;
        for (int attempt = 0; attempt < 8 && !ok; ++attempt) ok = append_orthonormal(basis, gaussian_vector(rng, spec.dim));
        if (!ok) fail(ErrorCode::kBadInput, "cannot orthogonalize feature directions in dim " + std::to_string(spec.dim));
        g.directions[key] = basis.back();
    }

    if (spec.confound > 0.0) {
        for (const auto& l : spec.languages) {
            for (const auto& f : spec.features) {
                auto v = f.values.find(l.code);
                if (v == f.values.end()) continue;
                const auto& d = g.directions.at({f.feature.code, f.feature.value_of(v->second)->index});
                auto& o = g.offsets[l.code];
                const double amount = spec.confound * std::max(norm(o), f.scale);
                for (std::size_t i = 0; i < o.size(); ++i) o[i] += amount * d[i];
                break;
            }
        }
    }
    return g;
}

const EmbeddingMatrix& SyntheticCorpus::matrix(const LanguageId& language) const {
    for (const auto& m : matrices) {
        if (m.language() == language) return m;
    }
    fail(ErrorCode::kMissingData, "no synthetic embeddings for " + language.str());
}

SyntheticCorpus generate_corpus(const SyntheticSpec& spec) {
    SyntheticCorpus corpus;
    corpus.geometry = build_geometry(spec);
    std::vector<WalsFeature> features;
    for (const auto& f : spec.features) features.push_back(f.feature);
    if (!features.empty()) corpus.catalogue = FeatureCatalogue(features);
    corpus.annotations = AnnotationTable("synthetic:seed=" + std::to_string(spec.seed));
    for (const auto& f : spec.features) {
        for (const auto& [lang, label] : f.values) corpus.annotations.set(f.feature, lang, *f.feature.value_of(label));
    }

    for (const auto& l : spec.languages) {
        const auto mean = corpus.geometry.planted_mean(spec, l.code);
        Rng rng(spec.seed, "noise:" + l.code.str());
        std::vector<double> values(spec.sentences_per_language * spec.dim);
        for (std::size_t i = 0; i < spec.sentences_per_language; ++i) {
            double* row = values.data() + i * spec.dim;
            for (std::size_t j = 0; j < spec.dim; ++j) {
                row[j] = mean[j] + (spec.noise_sigma > 0.0 ? spec.noise_sigma * rng.normal() : 0.0);
            }
        }
        EmbeddingSetHeader h;
        h.language = l.code;
        h.encoder_name = spec.encoder_name;
        h.layer_index = spec.layer_index;
        h.dim = spec.dim;
        h.count = spec.sentences_per_language;
        h.dtype = spec.dtype;
        corpus.matrices.emplace_back(std::move(h), std::move(values));
    }
    return corpus;
}

OracleDelta oracle_delta(const SyntheticSpec& spec, const SyntheticGeometry& geometry, const std::string& feature,
                         const LanguageId& neutraliser, const std::vector<LanguageId>& languages) {
    const auto* f = spec.find_feature(feature);
    if (!f) fail(ErrorCode::kInvalidArgument, "feature " + feature + " is not planted");
    OracleDelta out;
    out.feature = feature;
    out.neutraliser = neutraliser;
    out.neutraliser_annotated = f->values.count(neutraliser) != 0;
    const auto centroid_x = geometry.planted_mean(spec, neutraliser);
    for (const auto& y : languages) {
        auto v = f->values.find(y);
        if (v == f->values.end()) {
            out.omitted.insert(y);
            continue;
        }
        const auto& d = geometry.direction(feature, f->feature.value_of(v->second)->index);
        auto mean_y = geometry.planted_mean(spec, y);
        const double before = dot(mean_y, d);
        for (std::size_t i = 0; i < mean_y.size(); ++i) mean_y[i] -= centroid_x[i];
        const double after = dot(mean_y, d);
        // Signal along y's own direction is at least halved: treated as lost.
        if (after < 0.5 * before) {
            out.degraded.insert(y);
        } else {
            out.retained.insert(y);
        }
    }
    return out;
}

void write_synthetic_corpus(const SyntheticSpec& spec, const SyntheticCorpus& corpus,
                            const std::filesystem::path& out_dir) {
    Manifest manifest;
    manifest.experiment_tag = "synthetic-seed-" + std::to_string(spec.seed);
    for (const auto& m : corpus.matrices) {
        const std::string rel = "embeddings/" + m.language().str() + ".emb";
        const auto bytes = encode_embeddings(m);
        write_file(out_dir / rel, bytes);
        manifest.entries.push_back(make_manifest_entry(m, rel, sha256_hex(bytes)));
    }
    write_file(out_dir / "manifest.json", serialize_manifest(manifest));
    write_file(out_dir / "annotations.tsv", serialize_annotations(corpus.annotations));
    write_file(out_dir / "features.json", serialize_feature_catalogue(corpus.catalogue));

    json pairs = json::array();
    for (const auto& p : spec.pairs) pairs.push_back({p.train_language.str(), p.test_language.str()});
    json plan = {{"catalogue", "features.json"},
                 {"annotations", "annotations.tsv"},
                 {"manifest", "manifest.json"},
                 {"tasks", "all"},
                 {"pairs", pairs},
                 {"encoder", spec.encoder_name},
                 {"layer", spec.layer_index},
                 {"seed", spec.seed},
                 {"sufficiency_threshold", 0.75}};
    plan.update(spec.plan_overrides);
    write_file(out_dir / "plan.json", plan.dump(2) + "\n");

    json truth = json::object();
    truth["seed"] = spec.seed;
    truth["noise_sigma"] = spec.noise_sigma;
    truth["confound"] = spec.confound;
    json feats = json::array();
    for (const auto& f : spec.features) {
        json values = json::object();
        for (const auto& [lang, label] : f.values) values[lang.str()] = label;
        feats.push_back({{"code", f.feature.code}, {"scale", f.scale}, {"values", values}});
    }
    truth["features"] = feats;
    json offsets = json::object();
    for (const auto& [lang, o] : corpus.geometry.offsets) offsets[lang.str()] = o;
    truth["offsets"] = offsets;
    json dirs = json::array();
    for (const auto& [key, d] : corpus.geometry.directions) {
        dirs.push_back({{"feature", key.first}, {"value", key.second}, {"direction", d}});
    }
    truth["directions"] = dirs;
    write_file(out_dir / "ground_truth.json", truth.dump(1) + "\n");
}

}  // namespace typoprobe
