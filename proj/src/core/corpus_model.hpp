#pragma once

// Languages, WALS features, annotations, and the paired train/test task setup.

#include <compare>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace typoprobe {

// ISO 639 code: 2-3 lowercase ASCII letters.
class LanguageId {
public:
    LanguageId() = default;
    explicit LanguageId(std::string code);

    static bool is_valid(std::string_view code) noexcept;

    const std::string& str() const noexcept { return code_; }
    bool empty() const noexcept { return code_.empty(); }

    auto operator<=>(const LanguageId&) const = default;

private:
    std::string code_;
};

enum class FeatureCategory { kNominalCategory, kVerbalCategory, kWordOrder, kSimpleClauses };

std::string_view category_name(FeatureCategory c) noexcept;
std::optional<FeatureCategory> parse_category(std::string_view name) noexcept;

struct FeatureValue {
    std::string label;
    int index = -1;

    bool operator==(const FeatureValue&) const = default;
};

struct WalsFeature {
    std::string code;  // e.g. "86A"
    std::string name;
    FeatureCategory category = FeatureCategory::kWordOrder;
    std::vector<std::string> labels;  // class index = position
    std::vector<int> excluded_pairs;  // 1-based pair indices without coverage

    int num_classes() const noexcept { return static_cast<int>(labels.size()); }
    std::optional<FeatureValue> value_of(std::string_view label) const;
};

bool is_valid_feature_code(std::string_view code) noexcept;

struct LanguagePair {
    LanguageId train_language;
    LanguageId test_language;
    int pair_index = 0;  // 1-based
};

// (Russian, Ukrainian), (Danish, Swedish), (Czech, Polish), (Portuguese, Spanish),
// (Hindi, Marathi), (Macedonian, Bulgarian), (Italian, French).
const std::vector<LanguagePair>& standard_pairs();

void validate_pairs(const std::vector<LanguagePair>& pairs);

class FeatureCatalogue {
public:
    FeatureCatalogue() = default;
    explicit FeatureCatalogue(std::vector<WalsFeature> features);

    const std::vector<WalsFeature>& features() const noexcept { return features_; }
    const WalsFeature* find(std::string_view code) const;
    const WalsFeature& at(std::string_view code) const;
    std::size_t size() const noexcept { return features_.size(); }

private:
    std::vector<WalsFeature> features_;
};

FeatureCatalogue parse_feature_catalogue(std::string_view text);
FeatureCatalogue load_feature_catalogue(const std::filesystem::path& path);
std::string serialize_feature_catalogue(const FeatureCatalogue& catalogue);

class AnnotationTable {
public:
    AnnotationTable() = default;
    explicit AnnotationTable(std::string source) : source_(std::move(source)) {}

    // Rejects conflicting duplicates; identical duplicates are accepted.
    void set(const WalsFeature& feature, const LanguageId& language, const FeatureValue& value);
    std::optional<FeatureValue> get(std::string_view feature_code, const LanguageId& language) const;

    const std::string& source() const noexcept { return source_; }
    std::size_t size() const noexcept { return entries_.size(); }
    const std::map<std::pair<std::string, LanguageId>, FeatureValue>& entries() const noexcept {
        return entries_;
    }

private:
    std::map<std::pair<std::string, LanguageId>, FeatureValue> entries_;
    std::string source_;
};

AnnotationTable parse_annotations(std::string_view text, const FeatureCatalogue& catalogue,
                                  std::string source = "<memory>");
AnnotationTable load_annotations(const std::filesystem::path& path, const FeatureCatalogue& catalogue);
// Header row plus one row per entry, sorted by (feature, language).
std::string serialize_annotations(const AnnotationTable& table);

struct ProbingTaskSpec {
    WalsFeature feature;
    std::vector<LanguagePair> included_pairs;
    std::vector<int> excluded_pair_indices;
    std::vector<LanguageId> train_languages;
    std::vector<LanguageId> test_languages;
    std::map<LanguageId, FeatureValue> language_labels;

    bool includes(const LanguageId& language) const { return language_labels.count(language) != 0; }
};

ProbingTaskSpec build_probing_task(const WalsFeature& feature, const std::vector<LanguagePair>& pairs,
                                   const AnnotationTable& annotations);

}  // namespace typoprobe
