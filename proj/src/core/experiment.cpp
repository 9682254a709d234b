#include "experiment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "error.hpp"
#include "io_util.hpp"
#include "log.hpp"
#include "parallel.hpp"
#include "report.hpp"
#include "rng.hpp"

namespace typoprobe {

using nlohmann::json;

ModeSelection parse_modes(std::string_view text) {
    ModeSelection m{false, false, false};
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t comma = text.find(',', start);
        if (comma == std::string_view::npos) comma = text.size();
        const auto item = text.substr(start, comma - start);
        if (item == "baseline") {
            m.baseline = true;
        } else if (item == "self") {
            m.self = true;
        } else if (item == "cross") {
            m.cross = true;
        } else if (item == "all") {
            m = ModeSelection{};
        } else {
            fail(ErrorCode::kBadInput, "unknown mode '" + std::string(item) + "'");
        }
        start = comma + 1;
    }
    return m;
}

namespace {

std::string modes_string(const ModeSelection& m) {
    std::vector<std::string> parts;
    if (m.baseline) parts.push_back("baseline");
    if (m.self) parts.push_back("self");
    if (m.cross) parts.push_back("cross");
    std::string out;
    for (const auto& p : parts) out += (out.empty() ? "" : ",") + p;
    return out;
}

json train_config_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate},
            {"batch_size", c.batch_size},
            {"max_epochs", c.max_epochs},
            {"optimizer", optimizer_name(c.optimizer)},
            {"early_stop_patience", c.early_stop_patience},
            {"validation_fraction", c.validation_fraction},
            {"class_weighting", c.class_weighting},
            {"adam_beta1", c.adam_beta1},
            {"adam_beta2", c.adam_beta2},
            {"adam_epsilon", c.adam_epsilon}};
}

TrainConfig parse_train_config(const json& j) {
    TrainConfig c;
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    const auto opt = j.value("optimizer", std::string("adam"));
    if (opt == "adam") {
        c.optimizer = Optimizer::kAdam;
    } else if (opt == "sgd") {
        c.optimizer = Optimizer::kSgd;
    } else {
        fail(ErrorCode::kBadInput, "plan: unknown optimizer '" + opt + "'");
    }
    c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
    c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
    c.class_weighting = j.value("class_weighting", c.class_weighting);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.adam_epsilon = j.value("adam_epsilon", c.adam_epsilon);
    return c;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

}  // namespace

void ExperimentPlan::validate() const {
    try {
        train.validate();
        validate_pairs(pairs);
    } catch (const Error& e) {
        fail(ErrorCode::kBadInput, std::string("plan: ") + e.what());
    }
    if (pairs.empty()) fail(ErrorCode::kBadInput, "plan: no language pairs");
    if (encoder_name.empty()) fail(ErrorCode::kBadInput, "plan: encoder is required");
    if (layer_index < 0 || layer_index > kMaxLayerIndex) fail(ErrorCode::kBadInput, "plan: layer out of range");
    if (!(sufficiency_threshold >= 0.0 && sufficiency_threshold <= 1.0)) {
        fail(ErrorCode::kBadInput, "plan: sufficiency_threshold must be in [0, 1]");
    }
    if (!(centroid_estimation_fraction >= 0.0 && centroid_estimation_fraction < 1.0)) {
        fail(ErrorCode::kBadInput, "plan: centroid_estimation_fraction must be in [0, 1)");
    }
    if (!modes.baseline && !modes.self && !modes.cross) fail(ErrorCode::kBadInput, "plan: no modes selected");
}

json ExperimentPlan::to_json() const {
    json pairs_json = json::array();
    for (const auto& p : pairs) pairs_json.push_back({p.train_language.str(), p.test_language.str()});
    json cross = json::array();
    for (const auto& l : cross_languages) cross.push_back(l.str());
    json tasks = task_codes.empty() ? json("all") : json(task_codes);
    return {{"catalogue", catalogue_path},
            {"annotations", annotations_path},
            {"manifest", manifest_path},
            {"tasks", tasks},
            {"pairs", pairs_json},
            {"encoder", encoder_name},
            {"layer", layer_index},
            {"seed", seed},
            {"train", train_config_json(train)},
            {"sufficiency_threshold", sufficiency_threshold},
            {"modes", modes_string(modes)},
            {"include_x_in_same", include_x_in_same},
            {"cross_languages", cross},
            {"centroid_estimation_fraction", centroid_estimation_fraction}};
}

std::string ExperimentPlan::content_hash() const { return sha256_hex(to_json().dump()); }

ExperimentPlan parse_plan(std::string_view text, const std::filesystem::path& base_dir) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(ErrorCode::kBadInput, std::string("plan: ") + e.what());
    }
    ExperimentPlan plan;
    plan.base_dir = base_dir;
    try {
        plan.catalogue_path = doc.value("catalogue", plan.catalogue_path);
        plan.annotations_path = doc.value("annotations", plan.annotations_path);
        plan.manifest_path = doc.value("manifest", plan.manifest_path);
        if (doc.contains("tasks") && !(doc["tasks"].is_string() && doc["tasks"] == "all")) {
            plan.task_codes = doc["tasks"].get<std::vector<std::string>>();
        }
        if (doc.contains("pairs")) {
            plan.pairs.clear();
            int index = 0;
            for (const auto& p : doc["pairs"]) {
                plan.pairs.push_back(
                    {LanguageId(p.at(0).get<std::string>()), LanguageId(p.at(1).get<std::string>()), ++index});
            }
        }
        plan.encoder_name = doc.value("encoder", std::string());
        plan.layer_index = doc.value("layer", plan.layer_index);
        plan.seed = doc.value("seed", plan.seed);
        if (doc.contains("train")) plan.train = parse_train_config(doc["train"]);
        plan.sufficiency_threshold = doc.value("sufficiency_threshold", plan.sufficiency_threshold);
        if (doc.contains("modes")) {
            const auto& m = doc["modes"];
            if (m.is_string()) {
                plan.modes = parse_modes(m.get<std::string>());
            } else {
                std::string joined;
                for (const auto& item : m) joined += (joined.empty() ? "" : ",") + item.get<std::string>();
                plan.modes = parse_modes(joined);
            }
        }
        plan.include_x_in_same = doc.value("include_x_in_same", plan.include_x_in_same);
        if (doc.contains("cross_languages")) {
            for (const auto& l : doc["cross_languages"]) plan.cross_languages.emplace_back(l.get<std::string>());
        }
        plan.centroid_estimation_fraction = doc.value("centroid_estimation_fraction", 0.0);
    } catch (const json::exception& e) {
        fail(ErrorCode::kBadInput, std::string("plan: ") + e.what());
    } catch (const Error& e) {
        fail(ErrorCode::kBadInput, std::string("plan: ") + e.what());
    }
    plan.validate();
    return plan;
}

ExperimentPlan load_plan(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const Error& e) {
        fail(ErrorCode::kBadInput, e.what());
    }
    return parse_plan(text, path.parent_path());
}

namespace {

std::vector<const WalsFeature*> selected_features(const ExperimentPlan& plan, const FeatureCatalogue& catalogue) {
    std::vector<const WalsFeature*> out;
    if (plan.task_codes.empty()) {
        for (const auto& f : catalogue.features()) out.push_back(&f);
        return out;
    }
    for (const auto& code : plan.task_codes) {
        const auto* f = catalogue.find(code);
        if (!f) fail(ErrorCode::kBadInput, "plan: task " + code + " is not in the feature catalogue");
        out.push_back(f);
    }
    return out;
}

// Languages whose embeddings a plan needs: both sides of every included pair.
std::set<LanguageId> required_languages(const ExperimentPlan& plan, const FeatureCatalogue& catalogue,
                                        const AnnotationTable& annotations) {
    std::set<LanguageId> out;
    for (const auto* f : selected_features(plan, catalogue)) {
        try {
            const auto task = build_probing_task(*f, plan.pairs, annotations);
            out.insert(task.train_languages.begin(), task.train_languages.end());
            out.insert(task.test_languages.begin(), task.test_languages.end());
        } catch (const Error&) {
            // No coverage: reported as an omitted task.
        }
    }
    return out;
}

}  // namespace

ExperimentInputs load_inputs(const ExperimentPlan& plan) {
    ExperimentInputs in;
    in.catalogue = load_feature_catalogue(resolve(plan.base_dir, plan.catalogue_path));
    in.annotations = load_annotations(resolve(plan.base_dir, plan.annotations_path), in.catalogue);
    const auto manifest_path = resolve(plan.base_dir, plan.manifest_path);
    Manifest manifest;
    try {
        manifest = load_manifest(manifest_path);
    } catch (const Error& e) {
        fail(e.code() == ErrorCode::kIo ? ErrorCode::kMissingData : e.code(), e.what());
    }

    auto needed = required_languages(plan, in.catalogue, in.annotations);
    for (const auto& p : plan.pairs) {
        if (manifest.find(p.test_language)) needed.insert(p.test_language);
    }
    for (const auto& lang : needed) {
        const auto* entry = manifest.find(lang);
        if (!entry) fail(ErrorCode::kMissingData, "no embeddings for language " + lang.str() + " in the manifest");
        if (entry->encoder_name != plan.encoder_name || entry->layer_index != plan.layer_index) {
            fail(ErrorCode::kMissingData, "no embeddings for language " + lang.str() + " with encoder " +
                                              plan.encoder_name + " at layer " + std::to_string(plan.layer_index));
        }
        const auto path = manifest_path.parent_path() / entry->path;
        if (!std::filesystem::exists(path)) {
            fail(ErrorCode::kMissingData, "embedding file for language " + lang.str() + " is missing: " + path.string());
        }
        const auto bytes = read_binary_file(path);
        if (sha256_hex(bytes) != entry->sha256) {
            fail(ErrorCode::kValidation, "embedding file for language " + lang.str() + " does not match its manifest hash");
        }
        EmbeddingMatrix m;
        try {
            m = decode_embeddings(std::string_view(bytes));
        } catch (const Error& e) {
            fail(ErrorCode::kValidation, path.string() + ": " + e.what());
        }
        if (m.language() != lang) {
            fail(ErrorCode::kValidation, path.string() + " holds language " + m.language().str() + ", expected " + lang.str());
        }
        in.embeddings.emplace(lang, std::move(m));
    }
    return in;
}

EvaluationData prepare_evaluation_data(const ExperimentPlan& plan, const ExperimentInputs& inputs,
                                       const std::vector<LanguageId>& languages) {
    EvaluationData data;
    data.owned.reserve(languages.size());
    for (const auto& lang : languages) {
        auto it = inputs.embeddings.find(lang);
        if (it == inputs.embeddings.end()) fail(ErrorCode::kMissingData, "no embeddings for language " + lang.str());
        const auto& m = it->second;
        if (plan.centroid_estimation_fraction <= 0.0) {
            data.eval[lang] = &m;
            data.centroids[lang] = compute_centroid(m);
            continue;
        }
        const auto split = static_cast<std::size_t>(std::floor(plan.centroid_estimation_fraction * static_cast<double>(m.rows())));
        if (split < 1 || split >= m.rows()) {
            fail(ErrorCode::kBadInput, "centroid estimation split leaves no rows for " + lang.str());
        }
        data.centroids[lang] = compute_centroid(m, 0, split);
        auto header = m.header();
        header.count = m.rows() - split;
        std::vector<double> rows(m.values().begin() + static_cast<std::ptrdiff_t>(split * m.dim()), m.values().end());
        data.owned.emplace_back(std::move(header), std::move(rows));
        data.eval[lang] = &data.owned.back();
    }
    return data;
}

TrainedProbe train_task_probe(const ExperimentPlan& plan, const ExperimentInputs& inputs, const ProbingTaskSpec& task) {
    std::vector<LabelledMatrix> data;
    for (const auto& lang : task.train_languages) {
        auto it = inputs.embeddings.find(lang);
        if (it == inputs.embeddings.end()) fail(ErrorCode::kMissingData, "no embeddings for language " + lang.str());
        data.push_back({&it->second, task.language_labels.at(lang).index});
    }
    TrainConfig cfg = plan.train;
    cfg.seed = derive_seed(plan.seed, "probe:" + task.feature.code);
    return train_probe(data, static_cast<std::size_t>(task.feature.num_classes()), cfg, task.feature.code,
                       task.feature.labels);
}

namespace {

struct Outcome {
    double accuracy = 0.0;
    int modal = 0;
    bool degenerate = false;
};

Outcome evaluate_matrix(const TrainedProbe& probe, const EmbeddingMatrix& m, int gold) {
    const auto pred = predict(probe, m);
    std::vector<std::size_t> counts(probe.params.classes, 0);
    for (int p : pred) ++counts[static_cast<std::size_t>(p)];
    Outcome o;
    o.accuracy = accuracy_of(pred, gold);
    o.modal = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    const auto first = m.row(0);
    o.degenerate = true;
    for (std::size_t i = 1; i < m.rows() && o.degenerate; ++i) {
        o.degenerate = std::equal(first.begin(), first.end(), m.row(i).begin());
    }
    return o;
}

const EmbeddingMatrix& eval_matrix(const TaskContext& ctx, const LanguageId& lang) {
    auto it = ctx.data->eval.find(lang);
    if (it == ctx.data->eval.end()) fail(ErrorCode::kMissingData, "no embeddings for language " + lang.str());
    return *it->second;
}

const LanguageCentroid& centroid_of(const TaskContext& ctx, const LanguageId& lang) {
    auto it = ctx.data->centroids.find(lang);
    if (it == ctx.data->centroids.end()) {
        fail(ErrorCode::kMissingData, "no embeddings to compute the centroid of " + lang.str());
    }
    return it->second;
}

// Evaluates one test language; `centroid` null means untouched embeddings.
Outcome evaluate_language(const TaskContext& ctx, const LanguageId& y, const LanguageCentroid* centroid) {
    const auto& m = eval_matrix(ctx, y);
    const int gold = ctx.task.language_labels.at(y).index;
    if (!centroid) return evaluate_matrix(ctx.probe, m, gold);
    return evaluate_matrix(ctx.probe, cross_neutralise(m, *centroid), gold);
}

LanguageOutcome make_outcome(double baseline, const Outcome& o, int gold) {
    return LanguageOutcome{baseline, o.accuracy, o.accuracy - baseline, gold, o.modal, o.degenerate};
}

NeutralisationResult run_mode(const TaskContext& ctx, const NeutralisationResult* baseline, Mode mode,
                              const std::optional<LanguageId>& x, std::size_t threads) {
    const auto& langs = ctx.task.test_languages;
    const LanguageCentroid* cx = x ? &centroid_of(ctx, *x) : nullptr;
    std::vector<Outcome> outcomes(langs.size());
    parallel_for(langs.size(), threads, [&](std::size_t i) {
        const LanguageCentroid* c = mode == Mode::kBaseline ? nullptr
                                    : mode == Mode::kSelf   ? &centroid_of(ctx, langs[i])
                                                            : cx;
        outcomes[i] = evaluate_language(ctx, langs[i], c);
    });
    NeutralisationResult r{ctx.task.feature.code, mode, x, {}};
    for (std::size_t i = 0; i < langs.size(); ++i) {
        const int gold = ctx.task.language_labels.at(langs[i]).index;
        const double base = baseline ? baseline->per_language.at(langs[i]).post : outcomes[i].accuracy;
        r.per_language[langs[i]] = make_outcome(base, outcomes[i], gold);
    }
    return r;
}

}  // namespace

NeutralisationResult run_baseline(const TaskContext& ctx, std::size_t threads) {
    return run_mode(ctx, nullptr, Mode::kBaseline, std::nullopt, threads);
}

NeutralisationResult run_self_neutralisation(const TaskContext& ctx, const NeutralisationResult& baseline,
                                             std::size_t threads) {
    return run_mode(ctx, &baseline, Mode::kSelf, std::nullopt, threads);
}

NeutralisationResult run_cross_neutralisation(const TaskContext& ctx, const NeutralisationResult& baseline,
                                              const LanguageId& x, std::size_t threads) {
    return run_mode(ctx, &baseline, Mode::kCross, x, threads);
}

DeltaRow group_by_feature_value(const NeutralisationResult& result, const ProbingTaskSpec& task, const LanguageId& x,
                                double sufficiency_threshold, bool include_x) {
    DeltaRow row;
    row.task = task.feature.code;
    row.x = x;
    const bool x_in_task = std::find(task.test_languages.begin(), task.test_languages.end(), x) != task.test_languages.end();
    if (!x_in_task) {
        row.omitted = true;
        return row;
    }
    if (result.mode == Mode::kCross && result.neutraliser && *result.neutraliser != x) {
        fail(ErrorCode::kInvalidArgument, "result was cross-neutralised with " + result.neutraliser->str() +
                                              ", not " + x.str());
    }
    const auto fv_x = task.language_labels.at(x).index;
    row.x_baseline = result.per_language.at(x).baseline;
    row.insufficient = row.x_baseline < sufficiency_threshold;
    double same = 0.0;
    double diff = 0.0;
    for (const auto& y : task.test_languages) {
        const auto it = result.per_language.find(y);
        if (it == result.per_language.end()) continue;
        const double d = it->second.delta;
        if (task.language_labels.at(y).index == fv_x) {
            if (y == x && !include_x) continue;
            same += d;
            ++row.n_same;
        } else {
            diff += d;
            ++row.n_diff;
        }
    }
    if (row.n_same > 0) row.mean_same = same / static_cast<double>(row.n_same);
    if (row.n_diff > 0) row.mean_diff = diff / static_cast<double>(row.n_diff);
    return row;
}

ExperimentResult run_experiment(const ExperimentPlan& plan, const ExperimentInputs& inputs, std::size_t threads) {
    plan.validate();
    ExperimentResult result;
    result.plan = plan;
    for (const auto& p : plan.pairs) {
        if (inputs.embeddings.count(p.test_language)) result.language_set.push_back(p.test_language);
    }
    if (plan.cross_languages.empty()) {
        result.cross_languages = result.language_set;
    } else {
        for (const auto& x : plan.cross_languages) {
            if (std::find(result.language_set.begin(), result.language_set.end(), x) == result.language_set.end()) {
                fail(ErrorCode::kMissingData, "cross-neutralising language " + x.str() + " has no embeddings");
            }
        }
        result.cross_languages = plan.cross_languages;
    }

    const auto features = selected_features(plan, inputs.catalogue);
    std::vector<std::optional<ProbingTaskSpec>> specs(features.size());
    for (std::size_t t = 0; t < features.size(); ++t) {
        TaskResult tr;
        tr.feature = features[t]->code;
        tr.labels = features[t]->labels;
        tr.chance_uniform = 1.0 / static_cast<double>(features[t]->num_classes());
        try {
            specs[t] = build_probing_task(*features[t], plan.pairs, inputs.annotations);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::kValidation) throw;
            tr.note = e.what();
        }
        if (specs[t]) {
            for (const auto& lang : specs[t]->train_languages) {
                if (!inputs.embeddings.count(lang)) fail(ErrorCode::kMissingData, "no embeddings for language " + lang.str());
            }
            for (const auto& lang : specs[t]->test_languages) {
                if (!inputs.embeddings.count(lang)) fail(ErrorCode::kMissingData, "no embeddings for language " + lang.str());
            }
            tr.covered = true;
            tr.spec = specs[t];
            std::map<int, std::size_t> counts;
            for (const auto& lang : specs[t]->test_languages) ++counts[specs[t]->language_labels.at(lang).index];
            std::size_t top = 0;
            for (const auto& [label, n] : counts) top = std::max(top, n);
            tr.chance_majority = static_cast<double>(top) / static_cast<double>(specs[t]->test_languages.size());
        }
        result.tasks.push_back(std::move(tr));
    }

    // Probes, one per covered task.
    std::vector<TrainedProbe> probes(features.size());
    parallel_for(features.size(), threads, [&](std::size_t t) {
        if (!specs[t]) return;
        probes[t] = train_task_probe(plan, inputs, *specs[t]);
    });
    for (std::size_t t = 0; t < features.size(); ++t) {
        if (!specs[t]) continue;
        const auto& log = probes[t].train_log;
        log_event("info", "probe_trained",
                  {{"task", features[t]->code},
                   {"epochs", log.size()},
                   {"selected_epoch", probes[t].selected_epoch},
                   {"validation_accuracy", log.empty() ? 0.0 : log.back().validation_accuracy}});
        result.tasks[t].train_log = probes[t].train_log;
        result.tasks[t].selected_epoch = probes[t].selected_epoch;
    }

    const EvaluationData data = prepare_evaluation_data(plan, inputs, result.language_set);
    std::vector<TaskContext> contexts(features.size());
    for (std::size_t t = 0; t < features.size(); ++t) {
        if (!specs[t]) continue;
        contexts[t].task = *specs[t];
        contexts[t].probe = std::move(probes[t]);
        contexts[t].data = &data;
    }

    // Evaluation units, flattened so that all of them share one worker pool.
    struct Unit {
        std::size_t task;
        Mode mode;
        std::size_t language;  // index into the task's test languages
        std::optional<LanguageId> x;
    };
    std::vector<Unit> units;
    for (std::size_t t = 0; t < features.size(); ++t) {
        if (!specs[t]) continue;
        const auto& langs = specs[t]->test_languages;
        for (std::size_t i = 0; i < langs.size(); ++i) units.push_back({t, Mode::kBaseline, i, std::nullopt});
        if (plan.modes.self) {
            for (std::size_t i = 0; i < langs.size(); ++i) units.push_back({t, Mode::kSelf, i, std::nullopt});
        }
        if (plan.modes.cross) {
            for (const auto& x : result.cross_languages) {
                if (!specs[t]->includes(x)) continue;
                for (std::size_t i = 0; i < langs.size(); ++i) units.push_back({t, Mode::kCross, i, x});
            }
        }
    }
    std::vector<Outcome> outcomes(units.size());
    parallel_for(units.size(), threads, [&](std::size_t u) {
        const auto& unit = units[u];
        const auto& ctx = contexts[unit.task];
        const auto& y = ctx.task.test_languages[unit.language];
        const LanguageCentroid* c = nullptr;
        if (unit.mode == Mode::kSelf) c = &centroid_of(ctx, y);
        if (unit.mode == Mode::kCross) c = &centroid_of(ctx, *unit.x);
        outcomes[u] = evaluate_language(ctx, y, c);
    });

    // Baselines first: the other modes take their deltas against them.
    for (std::size_t u = 0; u < units.size(); ++u) {
        const auto& unit = units[u];
        if (unit.mode != Mode::kBaseline) continue;
        auto& tr = result.tasks[unit.task];
        if (!tr.baseline) tr.baseline = NeutralisationResult{tr.feature, Mode::kBaseline, std::nullopt, {}};
        const auto& ctx = contexts[unit.task];
        const auto& y = ctx.task.test_languages[unit.language];
        const int gold = ctx.task.language_labels.at(y).index;
        tr.baseline->per_language[y] = make_outcome(outcomes[u].accuracy, outcomes[u], gold);
    }
    for (std::size_t u = 0; u < units.size(); ++u) {
        const auto& unit = units[u];
        if (unit.mode == Mode::kBaseline) continue;
        auto& tr = result.tasks[unit.task];
        const auto& ctx = contexts[unit.task];
        const auto& y = ctx.task.test_languages[unit.language];
        const int gold = ctx.task.language_labels.at(y).index;
        const double base = tr.baseline->per_language.at(y).post;
        NeutralisationResult* target = nullptr;
        if (unit.mode == Mode::kSelf) {
            if (!tr.self) tr.self = NeutralisationResult{tr.feature, Mode::kSelf, std::nullopt, {}};
            target = &*tr.self;
        } else {
            auto [it, inserted] = tr.cross.try_emplace(*unit.x, NeutralisationResult{tr.feature, Mode::kCross, unit.x, {}});
            target = &it->second;
        }
        target->per_language[y] = make_outcome(base, outcomes[u], gold);
    }

    if (plan.modes.cross) {
        for (std::size_t t = 0; t < features.size(); ++t) {
            const auto& tr = result.tasks[t];
            for (const auto& x : result.cross_languages) {
                if (!specs[t] || !specs[t]->includes(x)) {
                    DeltaRow row;
                    row.task = tr.feature;
                    row.x = x;
                    row.omitted = true;
                    result.delta_rows.push_back(row);
                    continue;
                }
                result.delta_rows.push_back(group_by_feature_value(tr.cross.at(x), *specs[t], x,
                                                                   plan.sufficiency_threshold, plan.include_x_in_same));
            }
        }
    }
    for (std::size_t t = 0; t < features.size(); ++t) {
        if (specs[t]) result.probes.emplace(features[t]->code, std::move(contexts[t].probe));
    }
    return result;
}

std::filesystem::path run_plan(const std::filesystem::path& plan_path, const RunOptions& options) {
    ExperimentPlan plan = load_plan(plan_path);
    if (options.seed) plan.seed = *options.seed;
    if (options.layer) plan.layer_index = *options.layer;
    if (options.modes) plan.modes = *options.modes;
    if (options.threshold) plan.sufficiency_threshold = *options.threshold;
    plan.validate();
    for (const auto& f : options.formats) {
        if (f != "csv" && f != "json" && f != "md" && f != "all") fail(ErrorCode::kBadInput, "unknown format '" + f + "'");
    }

    const std::size_t threads = resolve_thread_count(options.threads);
    const std::string hash = plan.content_hash();
    const auto out_root = options.out_root.empty() ? plan.base_dir / "runs" : options.out_root;
    const auto run_dir = out_root / ("run-" + hash.substr(0, 12) + "-s" + std::to_string(plan.seed));
    log_event("info", "run_started", {{"plan_hash", hash}, {"run_dir", run_dir.string()}, {"threads", threads}});

    const auto inputs = load_inputs(plan);
    const auto result = run_experiment(plan, inputs, threads);

    auto plan_json = plan.to_json();
    plan_json["base_dir"] = std::filesystem::absolute(plan.base_dir).lexically_normal().string();
    write_file(run_dir / "plan.json", plan_json.dump(2) + "\n");
    write_file(run_dir / "manifest.json", read_text_file(resolve(plan.base_dir, plan.manifest_path)));
    for (const auto& [code, probe] : result.probes) save_probe(probe, run_dir / "probes", code, plan.layer_index);
    for (const auto& task : result.tasks) {
        write_file(run_dir / "results" / (task.feature + ".json"), task_detail_json(result, task).dump(2) + "\n");
    }
    emit_report(result, options.formats, run_dir);
    log_event("info", "run_finished", {{"run_dir", run_dir.string()}, {"tasks", result.tasks.size()}});
    return run_dir;
}

}  // namespace typoprobe
