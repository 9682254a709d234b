#include "support.hpp"

#include <cmath>
#include <sstream>

#include "experiment.hpp"
#include "io_util.hpp"
#include "log.hpp"
#include "report.hpp"
#include "synthgen.hpp"

using namespace typoprobe;
using testutil::error_code_of;

namespace {

// Two features over three pairs; pl carries no value of 81A.
SyntheticSpec fixture_spec(double sigma) {
    SyntheticSpec spec;
    spec.dim = 24;
    spec.noise_sigma = sigma;
    spec.sentences_per_language = 120;
    spec.seed = 5;
    spec.offset_norm = 0.1;
    spec.dtype = DType::kF64;
    spec.pairs = {{LanguageId("ru"), LanguageId("uk"), 1}, {LanguageId("da"), LanguageId("sv"), 2},
                  {LanguageId("cs"), LanguageId("pl"), 3}, {LanguageId("pt"), LanguageId("es"), 4}};
    for (const auto& p : spec.pairs) {
        spec.languages.push_back({p.train_language, std::nullopt});
        spec.languages.push_back({p.test_language, std::nullopt});
    }
    SyntheticFeature a;
    a.feature.code = "81A";
    a.feature.name = "Order of Subject, Object and Verb";
    a.feature.labels = {"SOV", "SVO"};
    a.values = {{LanguageId("ru"), "SOV"}, {LanguageId("uk"), "SOV"}, {LanguageId("da"), "SVO"},
                {LanguageId("sv"), "SVO"}, {LanguageId("pt"), "SOV"}, {LanguageId("es"), "SOV"}};
    SyntheticFeature b;
    b.feature.code = "83A";
    b.feature.name = "Order of Object and Verb";
    b.feature.labels = {"OV", "VO"};
    b.values = {{LanguageId("ru"), "OV"}, {LanguageId("uk"), "OV"}, {LanguageId("da"), "VO"},
                {LanguageId("sv"), "VO"}, {LanguageId("cs"), "VO"}, {LanguageId("pl"), "VO"},
                {LanguageId("pt"), "OV"}, {LanguageId("es"), "OV"}};
    spec.features = {a, b};
    spec.plan_overrides = {{"train", {{"learning_rate", 0.01}, {"class_weighting", true}, {"max_epochs", 30}}}};
    return spec;
}

struct Fixture {
    testutil::TempDir dir{"exp"};
    ExperimentPlan plan;
    ExperimentInputs inputs;

    explicit Fixture(double sigma = 0.0) {
        set_log_quiet(true);
        const auto spec = fixture_spec(sigma);
        write_synthetic_corpus(spec, generate_corpus(spec), dir.path());
        plan = load_plan(dir / "plan.json");
        inputs = load_inputs(plan);
    }
};

const TaskResult& task_of(const ExperimentResult& r, const std::string& code) {
    for (const auto& t : r.tasks) {
        if (t.feature == code) return t;
    }
    FAIL("no task " << code);
    return r.tasks.front();
}

const DeltaRow& row_of(const ExperimentResult& r, const std::string& code, const std::string& x) {
    for (const auto& row : r.delta_rows) {
        if (row.task == code && row.x.str() == x) return row;
    }
    FAIL("no row " << code << " " << x);
    return r.delta_rows.front();
}

ProbingTaskSpec three_language_task() {
    WalsFeature f;
    f.code = "83A";
    f.labels = {"OV", "VO"};
    ProbingTaskSpec t;
    t.feature = f;
    t.test_languages = {LanguageId("uk"), LanguageId("sv"), LanguageId("pl")};
    t.language_labels = {{LanguageId("uk"), {"OV", 0}}, {LanguageId("sv"), {"OV", 0}}, {LanguageId("pl"), {"VO", 1}}};
    return t;
}

NeutralisationResult result_with(const std::map<std::string, std::pair<double, double>>& base_post) {
    NeutralisationResult r;
    r.task = "83A";
    r.mode = Mode::kCross;
    r.neutraliser = LanguageId("uk");
    for (const auto& [lang, bp] : base_post) {
        LanguageOutcome o;
        o.baseline = bp.first;
        o.post = bp.second;
        o.delta = bp.second - bp.first;
        r.per_language[LanguageId(lang)] = o;
    }
    return r;
}

}  // namespace

TEST_CASE("mode lists") {
    const auto m = parse_modes("self,cross");
    CHECK_FALSE(m.baseline);
    CHECK(m.self);
    CHECK(m.cross);
    const auto all = parse_modes("all");
    CHECK((all.baseline && all.self && all.cross));
    CHECK(error_code_of([] { parse_modes("baseline,other"); }) == ErrorCode::kBadInput);
}

TEST_CASE("plan parsing and hashing") {
    const auto plan = parse_plan(R"({"encoder": "e", "tasks": ["81A"], "seed": 4, "train": {"max_epochs": 5}})", "/tmp");
    CHECK(plan.task_codes == std::vector<std::string>{"81A"});
    CHECK(plan.seed == 4);
    CHECK(plan.train.max_epochs == 5);
    CHECK(plan.pairs.size() == 7);
    const auto same = parse_plan(R"({"encoder": "e", "seed": 4, "train": {"max_epochs": 5}, "tasks": ["81A"]})", "/tmp");
    CHECK(plan.content_hash() == same.content_hash());
    CHECK(plan.content_hash().size() == 64);
    const auto other = parse_plan(R"({"encoder": "e", "tasks": ["81A"], "seed": 5, "train": {"max_epochs": 5}})", "/tmp");
    CHECK(plan.content_hash() != other.content_hash());
    CHECK(parse_plan(plan.to_json().dump(), "/tmp").content_hash() == plan.content_hash());

    CHECK(error_code_of([] { parse_plan("[1]"); }) == ErrorCode::kBadInput);
    CHECK(error_code_of([] { parse_plan(R"({"encoder": "e", "sufficiency_threshold": 2})"); }) == ErrorCode::kBadInput);
    CHECK(error_code_of([] { parse_plan(R"({"encoder": "e", "train": {"learning_rate": -1}})"); }) == ErrorCode::kBadInput);
    CHECK(error_code_of([] { parse_plan(R"({"encoder": "e", "pairs": [["ru", "ru"]]})"); }) == ErrorCode::kBadInput);
}

TEST_CASE("noise-free corpus: perfect baseline, self-neutralisation can only hurt") {
    Fixture fx(0.0);
    const auto r = run_experiment(fx.plan, fx.inputs);
    CHECK(r.language_set == std::vector<LanguageId>{LanguageId("uk"), LanguageId("sv"), LanguageId("pl"), LanguageId("es")});
    for (const auto& t : r.tasks) {
        REQUIRE(t.covered);
        for (const auto& [lang, o] : t.baseline->per_language) CHECK(o.post == 1.0);
        for (const auto& [lang, o] : t.self->per_language) {
            CHECK(o.delta <= 0.0);
            CHECK(o.degenerate);
        }
        // x = y gives the self-neutralised outcome.
        for (const auto& [x, cross] : t.cross) {
            CHECK(cross.per_language.at(x).post == t.self->per_language.at(x).post);
            CHECK(cross.per_language.at(x).modal_prediction == t.self->per_language.at(x).modal_prediction);
        }
    }
}

TEST_CASE("cross x = y is bitwise the self-neutralised matrix") {
    Fixture fx(0.1);
    const auto data = prepare_evaluation_data(fx.plan, fx.inputs, {LanguageId("sv")});
    const auto& m = *data.eval.at(LanguageId("sv"));
    const auto a = self_neutralise(m);
    const auto b = cross_neutralise(m, data.centroids.at(LanguageId("sv")));
    CHECK(a.values() == b.values());
}

TEST_CASE("unannotated neutralisers are omitted") {
    Fixture fx(0.05);
    const auto r = run_experiment(fx.plan, fx.inputs);
    CHECK(r.delta_rows.size() == 2 * 4);
    const auto& pl = row_of(r, "81A", "pl");
    CHECK(pl.omitted);
    CHECK_FALSE(pl.mean_same);
    CHECK(task_of(r, "81A").cross.count(LanguageId("pl")) == 0);
    const auto& pl83 = row_of(r, "83A", "pl");
    CHECK_FALSE(pl83.omitted);
    CHECK(pl83.n_same + pl83.n_diff == 4);
    CHECK(task_of(r, "81A").spec->excluded_pair_indices == std::vector<int>{3});
}

TEST_CASE("grouping means by feature value") {
    const auto task = three_language_task();
    const auto r = result_with({{"uk", {1.0, 0.2}}, {"sv", {0.9, 0.5}}, {"pl", {0.8, 0.9}}});
    const auto row = group_by_feature_value(r, task, LanguageId("uk"), 0.75, true);
    REQUIRE(row.mean_same);
    REQUIRE(row.mean_diff);
    CHECK(*row.mean_same == doctest::Approx((-0.8 + -0.4) / 2));
    CHECK(*row.mean_diff == doctest::Approx(0.1));
    CHECK(row.n_same == 2);
    CHECK(row.n_diff == 1);
    CHECK_FALSE(row.insufficient);

    const auto no_x = group_by_feature_value(r, task, LanguageId("uk"), 0.75, false);
    CHECK(*no_x.mean_same == doctest::Approx(-0.4));
    CHECK(no_x.n_same == 1);

    const auto strict = group_by_feature_value(r, task, LanguageId("uk"), 1.01, true);
    CHECK(strict.insufficient);

    const auto outside = group_by_feature_value(r, task, LanguageId("fr"));
    CHECK(outside.omitted);
}

TEST_CASE("empty groups have no mean") {
    auto task = three_language_task();
    task.language_labels.at(LanguageId("pl")) = {"OV", 0};
    const auto r = result_with({{"uk", {1.0, 1.0}}, {"sv", {1.0, 1.0}}, {"pl", {1.0, 1.0}}});
    const auto row = group_by_feature_value(r, task, LanguageId("uk"));
    CHECK(*row.mean_same == 0.0);
    CHECK_FALSE(row.mean_diff);
}

TEST_CASE("all-zero deltas give zero means") {
    const auto task = three_language_task();
    const auto r = result_with({{"uk", {0.9, 0.9}}, {"sv", {0.8, 0.8}}, {"pl", {1.0, 1.0}}});
    const auto row = group_by_feature_value(r, task, LanguageId("uk"));
    CHECK(*row.mean_same == 0.0);
    CHECK(*row.mean_diff == 0.0);
}

TEST_CASE("a result of another neutraliser is rejected") {
    const auto task = three_language_task();
    const auto r = result_with({{"uk", {1, 1}}, {"sv", {1, 1}}, {"pl", {1, 1}}});
    CHECK(error_code_of([&] { group_by_feature_value(r, task, LanguageId("sv")); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("mode restriction") {
    Fixture fx(0.05);
    fx.plan.modes = parse_modes("self");
    const auto r = run_experiment(fx.plan, fx.inputs);
    for (const auto& t : r.tasks) {
        CHECK(t.baseline);
        CHECK(t.self);
        CHECK(t.cross.empty());
    }
    CHECK(r.delta_rows.empty());
}

TEST_CASE("explicit cross languages") {
    Fixture fx(0.05);
    fx.plan.cross_languages = {LanguageId("sv")};
    const auto r = run_experiment(fx.plan, fx.inputs);
    CHECK(r.delta_rows.size() == 2);
    fx.plan.cross_languages = {LanguageId("fr")};
    CHECK(error_code_of([&] { run_experiment(fx.plan, fx.inputs); }) == ErrorCode::kMissingData);
}

TEST_CASE("a missing embedding file names the language") {
    Fixture fx(0.05);
    std::filesystem::remove(fx.dir / "embeddings/sv.emb");
    const auto msg = testutil::error_message_of([&] { load_inputs(fx.plan); });
    CHECK(error_code_of([&] { load_inputs(fx.plan); }) == ErrorCode::kMissingData);
    CHECK(msg.find("sv") != std::string::npos);
}

TEST_CASE("layer mismatch is missing data") {
    Fixture fx(0.05);
    fx.plan.layer_index = 7;
    const auto msg = testutil::error_message_of([&] { load_inputs(fx.plan); });
    CHECK(error_code_of([&] { load_inputs(fx.plan); }) == ErrorCode::kMissingData);
    CHECK(msg.find("at layer 7") != std::string::npos);
}

TEST_CASE("a tampered embedding file fails validation") {
    Fixture fx(0.05);
    auto bytes = read_binary_file(fx.dir / "embeddings/es.emb");
    bytes[bytes.size() - 3] ^= 0x10;
    write_file(fx.dir / "embeddings/es.emb", bytes);
    CHECK(error_code_of([&] { load_inputs(fx.plan); }) == ErrorCode::kValidation);
}

TEST_CASE("a task without coverage is reported with a note") {
    Fixture fx(0.05);
    fx.inputs.annotations = AnnotationTable("empty");
    const auto r = run_experiment(fx.plan, fx.inputs);
    for (const auto& t : r.tasks) {
        CHECK_FALSE(t.covered);
        CHECK_FALSE(t.note.empty());
        CHECK_FALSE(t.baseline);
    }
    for (const auto& row : r.delta_rows) CHECK(row.omitted);
}

TEST_CASE("chance levels") {
    Fixture fx(0.05);
    const auto r = run_experiment(fx.plan, fx.inputs);
    const auto& t = task_of(r, "83A");
    CHECK(t.chance_uniform == 0.5);
    CHECK(t.chance_majority == doctest::Approx(0.5));
    CHECK(task_of(r, "81A").chance_majority == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("threads do not change results") {
    Fixture fx(0.1);
    const auto one = run_experiment(fx.plan, fx.inputs, 1);
    const auto four = run_experiment(fx.plan, fx.inputs, 4);
    CHECK(render_json(one) == render_json(four));
    CHECK(render_csv(one) == render_csv(four));
}

TEST_CASE("centroid estimation split") {
    Fixture fx(0.05);
    fx.plan.centroid_estimation_fraction = 0.25;
    const auto data = prepare_evaluation_data(fx.plan, fx.inputs, {LanguageId("uk")});
    CHECK(data.eval.at(LanguageId("uk"))->rows() == 90);
    CHECK(data.centroids.at(LanguageId("uk")).source_count == 30);
}

TEST_CASE("run directory contents") {
    Fixture fx(0.05);
    RunOptions opts;
    opts.threads = 1;
    const auto run_dir = run_plan(fx.dir / "plan.json", opts);
    CHECK(run_dir.parent_path() == fx.dir / "runs");
    CHECK(run_dir.filename().string().rfind("run-", 0) == 0);
    for (const char* f : {"plan.json", "manifest.json", "report.csv", "report.json", "report.md", "results/81A.json",
                          "results/83A.json", "probes/81A.json", "probes/83A.W2.emb"}) {
        CHECK_MESSAGE(std::filesystem::exists(run_dir / f), f);
    }
    const auto probe = load_probe(run_dir / "probes/83A.json");
    CHECK(probe.label_map == std::vector<std::string>{"OV", "VO"});

    opts.formats = {"xml"};
    CHECK(error_code_of([&] { run_plan(fx.dir / "plan.json", opts); }) == ErrorCode::kBadInput);
}

TEST_CASE("seed override changes the run directory") {
    Fixture fx(0.05);
    RunOptions opts;
    opts.threads = 1;
    opts.formats = {"csv"};
    opts.seed = 99;
    const auto run_dir = run_plan(fx.dir / "plan.json", opts);
    CHECK(run_dir.filename().string().find("-s99") != std::string::npos);
    CHECK(std::filesystem::exists(run_dir / "report.csv"));
    CHECK_FALSE(std::filesystem::exists(run_dir / "report.md"));
}
