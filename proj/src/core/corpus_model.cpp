#include "corpus_model.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include <json.hpp>

#include "error.hpp"
#include "io_util.hpp"

namespace typoprobe {

using nlohmann::json;

LanguageId::LanguageId(std::string code) : code_(std::move(code)) {
    if (!is_valid(code_)) fail(ErrorCode::kValidation, "invalid language code '" + code_ + "'");
}

bool LanguageId::is_valid(std::string_view code) noexcept {
    if (code.size() < 2 || code.size() > 3) return false;
    return std::all_of(code.begin(), code.end(), [](char c) { return c >= 'a' && c <= 'z'; });
}

std::string_view category_name(FeatureCategory c) noexcept {
    switch (c) {
        case FeatureCategory::kNominalCategory: return "NominalCategory";
        case FeatureCategory::kVerbalCategory: return "VerbalCategory";
        case FeatureCategory::kWordOrder: return "WordOrder";
        case FeatureCategory::kSimpleClauses: return "SimpleClauses";
    }
    return "?";
}

std::optional<FeatureCategory> parse_category(std::string_view name) noexcept {
    for (auto c : {FeatureCategory::kNominalCategory, FeatureCategory::kVerbalCategory,
                   FeatureCategory::kWordOrder, FeatureCategory::kSimpleClauses}) {
        if (category_name(c) == name) return c;
    }
    return std::nullopt;
}

std::optional<FeatureValue> WalsFeature::value_of(std::string_view label) const {
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == label) return FeatureValue{labels[i], static_cast<int>(i)};
    }
    return std::nullopt;
}

bool is_valid_feature_code(std::string_view code) noexcept {
    if (code.size() < 2) return false;
    const char last = code.back();
    if (last < 'A' || last > 'Z') return false;
    const auto digits = code.substr(0, code.size() - 1);
    return std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; });
}

const std::vector<LanguagePair>& standard_pairs() {
    static const std::vector<LanguagePair> pairs = {
        {LanguageId("ru"), LanguageId("uk"), 1}, {LanguageId("da"), LanguageId("sv"), 2},
        {LanguageId("cs"), LanguageId("pl"), 3}, {LanguageId("pt"), LanguageId("es"), 4},
        {LanguageId("hi"), LanguageId("mr"), 5}, {LanguageId("mk"), LanguageId("bg"), 6},
        {LanguageId("it"), LanguageId("fr"), 7},
    };
    return pairs;
}

void validate_pairs(const std::vector<LanguagePair>& pairs) {
    std::set<int> indices;
    std::set<LanguageId> languages;
    for (const auto& p : pairs) {
        if (p.train_language == p.test_language) {
            fail(ErrorCode::kValidation, "pair " + std::to_string(p.pair_index) + " trains and tests on '" +
                                             p.train_language.str() + "'");
        }
        for (const auto& lang : {p.train_language, p.test_language}) {
            if (!languages.insert(lang).second) {
                fail(ErrorCode::kValidation, "language '" + lang.str() + "' appears in more than one pair");
            }
        }
        if (p.pair_index < 1 || !indices.insert(p.pair_index).second) {
            fail(ErrorCode::kValidation, "pair index " + std::to_string(p.pair_index) + " is invalid or repeated");
        }
    }
}

FeatureCatalogue::FeatureCatalogue(std::vector<WalsFeature> features) : features_(std::move(features)) {
    if (features_.empty()) fail(ErrorCode::kValidation, "no features");
    std::set<std::string> codes;
    for (const auto& f : features_) {
        if (!is_valid_feature_code(f.code)) fail(ErrorCode::kValidation, "invalid feature code '" + f.code + "'");
        if (!codes.insert(f.code).second) fail(ErrorCode::kValidation, "duplicate feature code '" + f.code + "'");
        if (f.labels.empty()) fail(ErrorCode::kValidation, "feature " + f.code + " has no labels");
        std::set<std::string> seen;
        for (const auto& l : f.labels) {
            if (l.empty() || !seen.insert(l).second) {
                fail(ErrorCode::kValidation, "feature " + f.code + " has empty or repeated label '" + l + "'");
            }
        }
        for (int p : f.excluded_pairs) {
            if (p < 1) fail(ErrorCode::kValidation, "feature " + f.code + " excludes invalid pair index");
        }
    }
}

const WalsFeature* FeatureCatalogue::find(std::string_view code) const {
    for (const auto& f : features_) {
        if (f.code == code) return &f;
    }
    return nullptr;
}

const WalsFeature& FeatureCatalogue::at(std::string_view code) const {
    if (const auto* f = find(code)) return *f;
    fail(ErrorCode::kValidation, "unknown feature code '" + std::string(code) + "'");
}

namespace {

std::size_t line_of_offset(std::string_view text, std::size_t offset) {
    offset = std::min(offset, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

}  // namespace

FeatureCatalogue parse_feature_catalogue(std::string_view text) {
    if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); })) {
        fail(ErrorCode::kValidation, "no features");
    }
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(ErrorCode::kParse, "feature catalogue line " + std::to_string(line_of_offset(text, e.byte)) + ": " +
                                    e.what());
    }
    if (!doc.is_object() || !doc.contains("features") || !doc["features"].is_array()) {
        fail(ErrorCode::kParse, "feature catalogue must be an object with a 'features' array");
    }
    std::vector<WalsFeature> features;
    std::size_t i = 0;
    for (const auto& row : doc["features"]) {
        ++i;
        const std::string where = "feature catalogue entry " + std::to_string(i);
        try {
            WalsFeature f;
            f.code = row.at("code").get<std::string>();
            f.name = row.at("name").get<std::string>();
            const auto cat = row.at("category").get<std::string>();
            const auto parsed = parse_category(cat);
            if (!parsed) fail(ErrorCode::kParse, where + " (" + f.code + "): unknown category '" + cat + "'");
            f.category = *parsed;
            f.labels = row.at("labels").get<std::vector<std::string>>();
            if (row.contains("excluded_pairs")) f.excluded_pairs = row["excluded_pairs"].get<std::vector<int>>();
            features.push_back(std::move(f));
        } catch (const json::exception& e) {
            fail(ErrorCode::kParse, where + ": " + e.what());
        }
    }
    return FeatureCatalogue(std::move(features));
}

FeatureCatalogue load_feature_catalogue(const std::filesystem::path& path) {
    return parse_feature_catalogue(read_text_file(path));
}

std::string serialize_feature_catalogue(const FeatureCatalogue& catalogue) {
    json features = json::array();
    for (const auto& f : catalogue.features()) {
        features.push_back({{"code", f.code},
                            {"name", f.name},
                            {"category", std::string(category_name(f.category))},
                            {"labels", f.labels},
                            {"excluded_pairs", f.excluded_pairs}});
    }
    return json{{"features", features}}.dump(2) + "\n";
}

void AnnotationTable::set(const WalsFeature& feature, const LanguageId& language, const FeatureValue& value) {
    if (value.index < 0 || value.index >= feature.num_classes() || feature.labels[value.index] != value.label) {
        fail(ErrorCode::kValidation, "value '" + value.label + "' is not a label of feature " + feature.code +
                                         " (language " + language.str() + ")");
    }
    auto key = std::make_pair(feature.code, language);
    auto [it, inserted] = entries_.emplace(key, value);
    if (!inserted && it->second != value) {
        fail(ErrorCode::kValidation, "conflicting annotations for (" + feature.code + ", " + language.str() + ")");
    }
}

std::optional<FeatureValue> AnnotationTable::get(std::string_view feature_code, const LanguageId& language) const {
    auto it = entries_.find(std::make_pair(std::string(feature_code), language));
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

AnnotationTable parse_annotations(std::string_view text, const FeatureCatalogue& catalogue, std::string source) {
    AnnotationTable table(source);
    std::size_t line_no = 0;
    std::size_t pos = 0;
    bool saw_header = false;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        const std::string where = source + " line " + std::to_string(line_no);
        if (!line.empty() && line.back() == '\r') fail(ErrorCode::kParse, where + ": CRLF line endings are not supported");
        if (line.empty()) continue;

        std::vector<std::string_view> cols;
        std::size_t start = 0;
        while (true) {
            const std::size_t tab = line.find('\t', start);
            cols.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
            if (tab == std::string_view::npos) break;
            start = tab + 1;
        }
        if (cols.size() != 3) {
            fail(ErrorCode::kParse, where + ": expected 3 tab-separated columns, got " + std::to_string(cols.size()));
        }
        if (!saw_header) {
            if (cols[0] != "feature" || cols[1] != "language" || cols[2] != "label") {
                fail(ErrorCode::kParse, where + ": expected header 'feature\\tlanguage\\tlabel'");
            }
            saw_header = true;
            continue;
        }
        const auto* feature = catalogue.find(cols[0]);
        if (!feature) fail(ErrorCode::kValidation, where + ": unknown feature code '" + std::string(cols[0]) + "'");
        if (!LanguageId::is_valid(cols[1])) {
            fail(ErrorCode::kValidation, where + ": invalid language code '" + std::string(cols[1]) + "'");
        }
        LanguageId lang{std::string(cols[1])};
        const auto value = feature->value_of(cols[2]);
        if (!value) {
            fail(ErrorCode::kValidation, where + ": '" + std::string(cols[2]) + "' is not a label of feature " +
                                             feature->code + " (language " + lang.str() + ")");
        }
        try {
            table.set(*feature, lang, *value);
        } catch (const Error& e) {
            fail(e.code(), where + ": " + e.what());
        }
    }
    if (!saw_header) fail(ErrorCode::kParse, source + ": missing header row");
    return table;
}

AnnotationTable load_annotations(const std::filesystem::path& path, const FeatureCatalogue& catalogue) {
    return parse_annotations(read_text_file(path), catalogue, path.string());
}

std::string serialize_annotations(const AnnotationTable& table) {
    std::ostringstream out;
    out << "feature\tlanguage\tlabel\n";
    for (const auto& [key, value] : table.entries()) {
        out << key.first << '\t' << key.second.str() << '\t' << value.label << '\n';
    }
    return out.str();
}

ProbingTaskSpec build_probing_task(const WalsFeature& feature, const std::vector<LanguagePair>& pairs,
                                   const AnnotationTable& annotations) {
    if (pairs.empty()) fail(ErrorCode::kInvalidArgument, "no language pairs given");
    validate_pairs(pairs);
    ProbingTaskSpec task;
    task.feature = feature;
    for (const auto& pair : pairs) {
        const auto train = annotations.get(feature.code, pair.train_language);
        const auto test = annotations.get(feature.code, pair.test_language);
        if (!train || !test) {
            task.excluded_pair_indices.push_back(pair.pair_index);
            continue;
        }
        task.included_pairs.push_back(pair);
        task.train_languages.push_back(pair.train_language);
        task.test_languages.push_back(pair.test_language);
        task.language_labels[pair.train_language] = *train;
        task.language_labels[pair.test_language] = *test;
    }
    if (task.included_pairs.empty()) fail(ErrorCode::kValidation, "feature " + feature.code + " has no coverage");
    return task;
}

}  // namespace typoprobe
