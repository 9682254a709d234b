#include "support.hpp"

#include <algorithm>
#include <set>

#include "corpus_model.hpp"
#include "io_util.hpp"

using namespace typoprobe;
using testutil::error_code_of;
using testutil::error_message_of;

namespace {

const FeatureCatalogue& shipped() {
    static const FeatureCatalogue c = load_feature_catalogue(testutil::data_dir() / "features.json");
    return c;
}

// Every language of every pair not excluded by the feature's markers gets the
// feature's first label.
AnnotationTable marker_annotations(const FeatureCatalogue& cat) {
    AnnotationTable t("markers");
    for (const auto& f : cat.features()) {
        for (const auto& p : standard_pairs()) {
            if (std::count(f.excluded_pairs.begin(), f.excluded_pairs.end(), p.pair_index)) continue;
            t.set(f, p.train_language, *f.value_of(f.labels[0]));
            t.set(f, p.test_language, *f.value_of(f.labels[0]));
        }
    }
    return t;
}

const char* kTinyCatalogue = R"J({"features": [
  {"code": "86A", "name": "Order of genitive and noun", "category": "WordOrder",
   "labels": ["Genitive-Noun", "Noun-Genitive", "No Dominant Order"]},
  {"code": "81A", "name": "Order of Subject, Object and Verb (SOV)", "category": "WordOrder",
   "labels": ["SOV", "SVO"]}
]})J";

}  // namespace

TEST_CASE("language codes") {
    CHECK(LanguageId::is_valid("es"));
    CHECK(LanguageId::is_valid("uk"));
    CHECK(LanguageId::is_valid("mar"));
    CHECK_FALSE(LanguageId::is_valid("e"));
    CHECK_FALSE(LanguageId::is_valid("ES"));
    CHECK_FALSE(LanguageId::is_valid("engl"));
    CHECK_FALSE(LanguageId::is_valid("e1"));
    CHECK(error_code_of([] { LanguageId("Es"); }) == ErrorCode::kValidation);
    CHECK(LanguageId("da") < LanguageId("sv"));
}

TEST_CASE("feature codes") {
    CHECK(is_valid_feature_code("86A"));
    CHECK(is_valid_feature_code("144J"));
    CHECK_FALSE(is_valid_feature_code("A86"));
    CHECK_FALSE(is_valid_feature_code("86"));
    CHECK_FALSE(is_valid_feature_code("86a"));
    CHECK_FALSE(is_valid_feature_code("86AB"));
}

TEST_CASE("standard pairs") {
    const auto& pairs = standard_pairs();
    REQUIRE(pairs.size() == 7);
    const std::vector<std::pair<std::string, std::string>> expected = {
        {"ru", "uk"}, {"da", "sv"}, {"cs", "pl"}, {"pt", "es"}, {"hi", "mr"}, {"mk", "bg"}, {"it", "fr"}};
    for (std::size_t i = 0; i < 7; ++i) {
        CHECK(pairs[i].train_language.str() == expected[i].first);
        CHECK(pairs[i].test_language.str() == expected[i].second);
        CHECK(pairs[i].pair_index == static_cast<int>(i + 1));
    }
    CHECK_NOTHROW(validate_pairs(pairs));
}

TEST_CASE("pair validation") {
    std::vector<LanguagePair> same = {{LanguageId("es"), LanguageId("es"), 1}};
    CHECK(error_message_of([&] { validate_pairs(same); }).find("trains and tests") != std::string::npos);
    std::vector<LanguagePair> reused = {{LanguageId("es"), LanguageId("pt"), 1}, {LanguageId("es"), LanguageId("it"), 2}};
    CHECK(error_message_of([&] { validate_pairs(reused); }).find("more than one pair") != std::string::npos);
    std::vector<LanguagePair> dup_index = {{LanguageId("es"), LanguageId("pt"), 1}, {LanguageId("da"), LanguageId("sv"), 1}};
    CHECK(error_code_of([&] { validate_pairs(dup_index); }) == ErrorCode::kValidation);
}

TEST_CASE("shipped catalogue has the 25 features in catalogue order") {
    const auto& cat = shipped();
    REQUIRE(cat.size() == 25);
    const std::vector<std::string> codes = {"37A", "38A", "45A", "47A", "51A", "70A", "71A", "72A", "79A",
                                            "79B", "81A", "82A", "83A", "85A", "86A", "87A", "92A", "93A",
                                            "95A", "97A", "115A", "116A", "143F", "144D", "144J"};
    for (std::size_t i = 0; i < codes.size(); ++i) CHECK(cat.features()[i].code == codes[i]);

    const auto& f86 = cat.at("86A");
    CHECK(f86.name == "Order of genitive and noun");
    CHECK(f86.category == FeatureCategory::kWordOrder);
    CHECK(f86.labels == std::vector<std::string>{"Genitive-Noun", "Noun-Genitive", "No Dominant Order"});

    CHECK(cat.at("37A").category == FeatureCategory::kNominalCategory);
    CHECK(cat.at("79B").category == FeatureCategory::kVerbalCategory);
    CHECK(cat.at("116A").category == FeatureCategory::kSimpleClauses);
    CHECK(cat.at("143F").category == FeatureCategory::kWordOrder);
    for (const auto& f : cat.features()) CHECK(f.num_classes() >= 2);
}

TEST_CASE("shipped catalogue exclusion markers") {
    const std::map<std::string, std::vector<int>> expected = {
        {"38A", {1}},          {"45A", {1, 3, 6}}, {"47A", {1, 3, 6}}, {"51A", {6, 7}},
        {"79A", {2, 4, 5, 7}}, {"79B", {2, 4, 5, 7}}, {"86A", {1, 3, 6}}, {"92A", {5, 6}},
        {"93A", {1, 4, 6, 7}}, {"115A", {1, 2, 3, 6}}, {"116A", {7}},   {"144D", {3, 5, 7}},
        {"144J", {5, 7}}};
    for (const auto& f : shipped().features()) {
        auto it = expected.find(f.code);
        const std::vector<int> want = it == expected.end() ? std::vector<int>{} : it->second;
        CHECK_MESSAGE(f.excluded_pairs == want, f.code);
    }
}

TEST_CASE("catalogue errors") {
    CHECK(error_message_of([] { parse_feature_catalogue(""); }) == "no features");
    CHECK(error_message_of([] { parse_feature_catalogue("{\"features\": []}"); }) == "no features");

    const std::string dup = R"({"features": [
      {"code": "37A", "name": "a", "category": "NominalCategory", "labels": ["x", "y"]},
      {"code": "37A", "name": "b", "category": "NominalCategory", "labels": ["x", "y"]}]})";
    CHECK(error_code_of([&] { parse_feature_catalogue(dup); }) == ErrorCode::kValidation);
    CHECK(error_message_of([&] { parse_feature_catalogue(dup); }).find("duplicate feature code '37A'") !=
          std::string::npos);

    const std::string broken = "{\"features\": [\n  {\"code\": \"37A\",\n  \"name\" \"x\"}\n]}";
    CHECK(error_code_of([&] { parse_feature_catalogue(broken); }) == ErrorCode::kParse);
    CHECK(error_message_of([&] { parse_feature_catalogue(broken); }).find("line 3") != std::string::npos);

    const std::string repeated = R"({"features": [{"code": "37A", "name": "a", "category": "WordOrder", "labels": ["x", "x"]}]})";
    CHECK(error_code_of([&] { parse_feature_catalogue(repeated); }) == ErrorCode::kValidation);

    const std::string bad_cat = R"({"features": [{"code": "37A", "name": "a", "category": "Phonology", "labels": ["x"]}]})";
    CHECK(error_code_of([&] { parse_feature_catalogue(bad_cat); }) == ErrorCode::kParse);

    const std::string missing = R"({"features": [{"code": "37A", "category": "WordOrder", "labels": ["x"]}]})";
    CHECK(error_message_of([&] { parse_feature_catalogue(missing); }).find("entry 1") != std::string::npos);
}

TEST_CASE("catalogue serialization round-trips") {
    const auto text = serialize_feature_catalogue(shipped());
    const auto again = parse_feature_catalogue(text);
    REQUIRE(again.size() == shipped().size());
    for (std::size_t i = 0; i < again.size(); ++i) {
        const auto& a = again.features()[i];
        const auto& b = shipped().features()[i];
        CHECK(a.code == b.code);
        CHECK(a.name == b.name);
        CHECK(a.category == b.category);
        CHECK(a.labels == b.labels);
        CHECK(a.excluded_pairs == b.excluded_pairs);
    }
    CHECK(serialize_feature_catalogue(again) == text);
}

TEST_CASE("label index follows first appearance") {
    const auto cat = parse_feature_catalogue(kTinyCatalogue);
    const auto v = cat.at("86A").value_of("No Dominant Order");
    REQUIRE(v);
    CHECK(v->index == 2);
    CHECK_FALSE(cat.at("86A").value_of("Purple"));
}

TEST_CASE("annotations from the genitive sample") {
    const auto table = load_annotations(testutil::data_dir() / "annotations_86A_sample.tsv", shipped());
    CHECK(table.size() == 12);
    CHECK(table.get("86A", LanguageId("es"))->label == "Noun-Genitive");
    CHECK(table.get("86A", LanguageId("cs"))->label == "No Dominant Order");
    CHECK(table.get("86A", LanguageId("da"))->label == "Genitive-Noun");
    CHECK(table.get("86A", LanguageId("mr"))->label == "Genitive-Noun");
    CHECK_FALSE(table.get("86A", LanguageId("ru")));
    CHECK_FALSE(table.get("81A", LanguageId("es")));
}

TEST_CASE("annotation errors") {
    const auto cat = parse_feature_catalogue(kTinyCatalogue);
    const std::string header = "feature\tlanguage\tlabel\n";

    const auto purple = header + "86A\txx\tPurple\n";
    CHECK(error_code_of([&] { parse_annotations(purple, cat); }) == ErrorCode::kValidation);
    const auto msg = error_message_of([&] { parse_annotations(purple, cat); });
    CHECK(msg.find("86A") != std::string::npos);
    CHECK(msg.find("xx") != std::string::npos);
    CHECK(msg.find("line 2") != std::string::npos);

    CHECK(error_code_of([&] { parse_annotations(header + "99Z\tes\tSOV\n", cat); }) == ErrorCode::kValidation);
    CHECK(error_code_of([&] { parse_annotations(header + "81A\tES\tSOV\n", cat); }) == ErrorCode::kValidation);
    CHECK(error_code_of([&] { parse_annotations(header + "81A\tes\n", cat); }) == ErrorCode::kParse);
    CHECK(error_code_of([&] { parse_annotations("feature\tlanguage\tlabel\r\n", cat); }) == ErrorCode::kParse);
    CHECK(error_code_of([&] { parse_annotations("code\tlang\tvalue\n", cat); }) == ErrorCode::kParse);
    CHECK(error_code_of([&] { parse_annotations("", cat); }) == ErrorCode::kParse);
    CHECK(error_code_of([&] { parse_annotations(header + "81A\tes\tSOV\n81A\tes\tSVO\n", cat); }) ==
          ErrorCode::kValidation);
    CHECK_NOTHROW(parse_annotations(header + "81A\tes\tSOV\n81A\tes\tSOV\n", cat));
}

TEST_CASE("annotation serialization is sorted and round-trips") {
    const auto cat = parse_feature_catalogue(kTinyCatalogue);
    const auto t = parse_annotations("feature\tlanguage\tlabel\n86A\tes\tNoun-Genitive\n81A\tsv\tSVO\n81A\tes\tSVO\n", cat);
    const auto text = serialize_annotations(t);
    CHECK(text == "feature\tlanguage\tlabel\n81A\tes\tSVO\n81A\tsv\tSVO\n86A\tes\tNoun-Genitive\n");
    CHECK(serialize_annotations(parse_annotations(text, cat)) == text);
}

TEST_CASE("probing task coverage follows the markers") {
    const auto annotations = marker_annotations(shipped());

    const auto t45 = build_probing_task(shipped().at("45A"), standard_pairs(), annotations);
    CHECK(t45.excluded_pair_indices == std::vector<int>{1, 3, 6});
    CHECK(t45.included_pairs.size() == 4);
    CHECK_FALSE(t45.includes(LanguageId("uk")));
    CHECK(t45.includes(LanguageId("es")));

    const auto t81 = build_probing_task(shipped().at("81A"), standard_pairs(), annotations);
    CHECK(t81.included_pairs.size() == 7);
    CHECK(t81.excluded_pair_indices.empty());

    for (const auto& f : shipped().features()) {
        const auto t = build_probing_task(f, standard_pairs(), annotations);
        CHECK_MESSAGE(t.excluded_pair_indices == f.excluded_pairs, f.code);
    }
}

TEST_CASE("probing task without coverage") {
    const auto cat = parse_feature_catalogue(kTinyCatalogue);
    AnnotationTable empty;
    CHECK(error_message_of([&] { build_probing_task(cat.at("81A"), standard_pairs(), empty); }) ==
          "feature 81A has no coverage");
    CHECK(error_code_of([&] { build_probing_task(cat.at("81A"), {}, empty); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("probing task invariants under random coverage") {
    const auto cat = parse_feature_catalogue(kTinyCatalogue);
    const auto& f = cat.at("86A");
    Rng rng(42);
    int built = 0;
    for (int trial = 0; trial < 300; ++trial) {
        AnnotationTable t;
        std::set<LanguageId> annotated;
        for (const auto& p : standard_pairs()) {
            for (const auto& lang : {p.train_language, p.test_language}) {
                if (rng.uniform() < 0.7) {
                    t.set(f, lang, *f.value_of(f.labels[rng.below(3)]));
                    annotated.insert(lang);
                }
            }
        }
        std::vector<int> expected_included;
        for (const auto& p : standard_pairs()) {
            if (annotated.count(p.train_language) && annotated.count(p.test_language)) {
                expected_included.push_back(p.pair_index);
            }
        }
        if (expected_included.empty()) {
            CHECK(error_code_of([&] { build_probing_task(f, standard_pairs(), t); }) == ErrorCode::kValidation);
            continue;
        }
        ++built;
        const auto task = build_probing_task(f, standard_pairs(), t);
        std::vector<int> included;
        for (const auto& p : task.included_pairs) included.push_back(p.pair_index);
        CHECK(included == expected_included);
        CHECK(task.train_languages.size() == task.included_pairs.size());
        CHECK(task.test_languages.size() == task.included_pairs.size());
        CHECK(task.language_labels.size() == 2 * task.included_pairs.size());
        for (const auto& l : task.train_languages) {
            CHECK(std::find(task.test_languages.begin(), task.test_languages.end(), l) == task.test_languages.end());
        }
        for (const auto& [lang, value] : task.language_labels) CHECK(*t.get("86A", lang) == value);
        // Deterministic.
        const auto again = build_probing_task(f, standard_pairs(), t);
        CHECK(again.train_languages == task.train_languages);
        CHECK(again.test_languages == task.test_languages);
    }
    CHECK(built > 200);
}
