#pragma once

// Baseline, self- and cross-neutralisation runs and their grouping by
// feature value.
//
// One probe is trained per task on the raw embeddings of the training
// languages and reused, unchanged, for every evaluation mode.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "corpus_model.hpp"
#include "embedding_store.hpp"
#include "neutraliser.hpp"
#include "probe.hpp"

namespace typoprobe {

struct ModeSelection {
    bool baseline = true;
    bool self = true;
    bool cross = true;
};

// Accepts a comma-separated subset of {baseline, self, cross}.
ModeSelection parse_modes(std::string_view text);

struct ExperimentPlan {
    std::filesystem::path base_dir;  // relative paths below resolve against it
    std::string catalogue_path = "features.json";
    std::string annotations_path = "annotations.tsv";
    std::string manifest_path = "manifest.json";
    std::vector<std::string> task_codes;  // empty: every catalogue feature
    std::vector<LanguagePair> pairs = standard_pairs();
    std::string encoder_name;
    int layer_index = 12;
    TrainConfig train;
    std::uint64_t seed = 0;
    double sufficiency_threshold = 0.75;
    ModeSelection modes;
    bool include_x_in_same = true;
    std::vector<LanguageId> cross_languages;  // empty: the whole language set
    // Fraction of each language's rows reserved for centroid estimation and
    // excluded from evaluation. 0 uses all rows for both.
    double centroid_estimation_fraction = 0.0;

    void validate() const;
    // Everything that affects results, paths as written.
    nlohmann::json to_json() const;
    std::string content_hash() const;
};

ExperimentPlan parse_plan(std::string_view text, const std::filesystem::path& base_dir = {});
ExperimentPlan load_plan(const std::filesystem::path& path);

struct ExperimentInputs {
    FeatureCatalogue catalogue;
    AnnotationTable annotations;
    std::map<LanguageId, EmbeddingMatrix> embeddings;
};

// Reads catalogue, annotations, manifest and every embedding file the plan
// needs. Missing or mismatching embeddings raise kMissingData.
ExperimentInputs load_inputs(const ExperimentPlan& plan);

enum class Mode { kBaseline, kSelf, kCross };

struct LanguageOutcome {
    double baseline = 0.0;
    double post = 0.0;
    double delta = 0.0;  // post - baseline
    int gold = 0;
    int modal_prediction = 0;
    bool degenerate = false;  // all evaluated rows identical
};

struct NeutralisationResult {
    std::string task;
    Mode mode = Mode::kBaseline;
    std::optional<LanguageId> neutraliser;  // set for kCross
    std::map<LanguageId, LanguageOutcome> per_language;
};

struct DeltaRow {
    std::string task;
    LanguageId x;
    std::optional<double> mean_same;
    std::optional<double> mean_diff;
    std::size_t n_same = 0;
    std::size_t n_diff = 0;
    double x_baseline = 0.0;
    bool insufficient = false;
    bool omitted = false;
};

// Evaluation rows and centroids of every language in the language set.
struct EvaluationData {
    std::map<LanguageId, const EmbeddingMatrix*> eval;
    std::map<LanguageId, LanguageCentroid> centroids;
    std::vector<EmbeddingMatrix> owned;  // row slices when a centroid split is used
};

EvaluationData prepare_evaluation_data(const ExperimentPlan& plan, const ExperimentInputs& inputs,
                                       const std::vector<LanguageId>& languages);

struct TaskContext {
    ProbingTaskSpec task;
    TrainedProbe probe;
    const EvaluationData* data = nullptr;
};

TrainedProbe train_task_probe(const ExperimentPlan& plan, const ExperimentInputs& inputs, const ProbingTaskSpec& task);

NeutralisationResult run_baseline(const TaskContext& ctx, std::size_t threads = 1);
NeutralisationResult run_self_neutralisation(const TaskContext& ctx, const NeutralisationResult& baseline,
                                             std::size_t threads = 1);
NeutralisationResult run_cross_neutralisation(const TaskContext& ctx, const NeutralisationResult& baseline,
                                              const LanguageId& x, std::size_t threads = 1);

// L_id = test languages with x's value (x included unless include_x is
// false), L_diff = the rest. Omitted when x is not a test language of the task.
DeltaRow group_by_feature_value(const NeutralisationResult& result, const ProbingTaskSpec& task, const LanguageId& x,
                                double sufficiency_threshold = 0.75, bool include_x = true);

struct TaskResult {
    std::string feature;
    bool covered = false;
    std::string note;
    std::optional<ProbingTaskSpec> spec;
    std::vector<EpochLog> train_log;
    int selected_epoch = 0;
    std::vector<std::string> labels;
    double chance_uniform = 0.0;
    double chance_majority = 0.0;
    std::optional<NeutralisationResult> baseline;
    std::optional<NeutralisationResult> self;
    std::map<LanguageId, NeutralisationResult> cross;
};

struct ExperimentResult {
    ExperimentPlan plan;
    std::vector<LanguageId> language_set;  // test languages with embeddings, pair order
    std::vector<LanguageId> cross_languages;
    std::vector<TaskResult> tasks;
    std::vector<DeltaRow> delta_rows;  // task-major, cross language order
    std::map<std::string, TrainedProbe> probes;
};

ExperimentResult run_experiment(const ExperimentPlan& plan, const ExperimentInputs& inputs, std::size_t threads = 1);

struct RunOptions {
    std::optional<std::uint64_t> seed;
    std::optional<int> layer;
    std::optional<ModeSelection> modes;
    std::optional<double> threshold;
    std::vector<std::string> formats = {"csv", "json", "md"};
    std::filesystem::path out_root;  // default: <plan dir>/runs
    std::size_t threads = 0;         // 0: resolve_thread_count()
};

// Applies overrides, runs, and writes plan.json, manifest.json, probes/,
// results/ and report.* into <out_root>/run-<hash>-s<seed>. Returns that dir.
std::filesystem::path run_plan(const std::filesystem::path& plan_path, const RunOptions& options);

}  // namespace typoprobe
