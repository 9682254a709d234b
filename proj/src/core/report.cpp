#include "report.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "error.hpp"
#include "io_util.hpp"

namespace typoprobe {

using nlohmann::json;

namespace {

const char* mode_name(Mode m) {
    switch (m) {
        case Mode::kBaseline: return "baseline";
        case Mode::kSelf: return "self";
        case Mode::kCross: return "cross";
    }
    return "?";
}

std::string opt_number(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string label_of(const TaskResult& task, int index) {
    if (index >= 0 && static_cast<std::size_t>(index) < task.labels.size()) return task.labels[static_cast<std::size_t>(index)];
    return std::to_string(index);
}

json mode_json(const TaskResult& task, const NeutralisationResult& r) {
    json per = json::object();
    const int gold_x = (r.neutraliser && task.spec && task.spec->language_labels.count(*r.neutraliser))
                           ? task.spec->language_labels.at(*r.neutraliser).index
                           : -1;
    for (const auto& [lang, o] : r.per_language) {
        json e = {{"baseline", o.baseline},
                  {"post", o.post},
                  {"delta", o.delta},
                  {"fv", label_of(task, o.gold)},
                  {"modal_predicted", label_of(task, o.modal_prediction)},
                  {"degenerate", o.degenerate}};
        if (r.mode == Mode::kCross) e["same_as_x"] = o.gold == gold_x;
        per[lang.str()] = std::move(e);
    }
    json out = {{"mode", mode_name(r.mode)}, {"per_language", std::move(per)}};
    if (r.neutraliser) out["x"] = r.neutraliser->str();
    return out;
}

json row_json(const DeltaRow& row) {
    return {{"task", row.task},
            {"x", row.x.str()},
            {"mean_same", opt_json(row.mean_same)},
            {"mean_diff", opt_json(row.mean_diff)},
            {"n_same", row.n_same},
            {"n_diff", row.n_diff},
            {"x_baseline", row.omitted ? json(nullptr) : json(row.x_baseline)},
            {"insufficient", row.insufficient},
            {"omitted", row.omitted}};
}

// Two decimals, no negative zero.
std::string two_decimals(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    std::string s(buf);
    if (s == "-0.00") s = "0.00";
    return s;
}

std::string md_cell(const std::optional<double>& v, bool insufficient) {
    if (!v) return "n/a";
    const auto s = two_decimals(*v);
    return insufficient ? "(" + s + ")" : s;
}

const DeltaRow* find_row(const ExperimentResult& result, const std::string& task, const LanguageId& x) {
    for (const auto& r : result.delta_rows) {
        if (r.task == task && r.x == x) return &r;
    }
    return nullptr;
}

void accuracy_table(std::ostringstream& out, const ExperimentResult& result, bool self) {
    out << "| Task |";
    for (const auto& l : result.language_set) out << ' ' << l.str() << " |";
    out << "\n|---|";
    for (std::size_t i = 0; i < result.language_set.size(); ++i) out << "---:|";
    out << '\n';
    for (const auto& task : result.tasks) {
        const auto& r = self ? task.self : task.baseline;
        if (!r) continue;
        out << "| " << task.feature << " |";
        for (const auto& l : result.language_set) {
            auto it = r->per_language.find(l);
            if (it == r->per_language.end()) {
                out << "  |";
            } else {
                out << ' ' << two_decimals(it->second.post) << " |";
            }
        }
        out << '\n';
    }
}

}  // namespace

std::string render_csv(const ExperimentResult& result) {
    std::string out = "task,x,mean_same,mean_diff,insufficient,omitted\n";
    for (const auto& row : result.delta_rows) {
        out += row.task + "," + row.x.str() + "," + opt_number(row.mean_same) + "," + opt_number(row.mean_diff) + "," +
               (row.insufficient ? "true" : "false") + "," + (row.omitted ? "true" : "false") + "\n";
    }
    return out;
}

json task_detail_json(const ExperimentResult& result, const TaskResult& task) {
    json out = {{"task", task.feature},
                {"covered", task.covered},
                {"labels", task.labels},
                {"chance_uniform", task.chance_uniform},
                {"chance_majority", task.chance_majority}};
    if (!task.note.empty()) out["note"] = task.note;
    if (task.spec) {
        json langs = json::object();
        for (const auto& [lang, value] : task.spec->language_labels) langs[lang.str()] = value.label;
        json train = json::array();
        for (const auto& l : task.spec->train_languages) train.push_back(l.str());
        json test = json::array();
        for (const auto& l : task.spec->test_languages) test.push_back(l.str());
        out["annotations"] = std::move(langs);
        out["train_languages"] = std::move(train);
        out["test_languages"] = std::move(test);
        out["excluded_pairs"] = task.spec->excluded_pair_indices;
    }
    json log = json::array();
    for (const auto& e : task.train_log) {
        log.push_back({{"epoch", e.epoch},
                       {"train_loss", e.train_loss},
                       {"train_accuracy", e.train_accuracy},
                       {"validation_loss", e.validation_loss},
                       {"validation_accuracy", e.validation_accuracy}});
    }
    out["train_log"] = std::move(log);
    out["selected_epoch"] = task.selected_epoch;
    if (task.baseline) out["baseline"] = mode_json(task, *task.baseline);
    if (task.self) out["self"] = mode_json(task, *task.self);
    json cross = json::object();
    for (const auto& [x, r] : task.cross) {
        auto entry = mode_json(task, r);
        if (const auto* row = find_row(result, task.feature, x)) entry["summary"] = row_json(*row);
        cross[x.str()] = std::move(entry);
    }
    out["cross"] = std::move(cross);
    return out;
}

std::string render_json(const ExperimentResult& result) {
    json langs = json::array();
    for (const auto& l : result.language_set) langs.push_back(l.str());
    json cross = json::array();
    for (const auto& l : result.cross_languages) cross.push_back(l.str());
    json rows = json::array();
    for (const auto& r : result.delta_rows) rows.push_back(row_json(r));
    json tasks = json::array();
    for (const auto& t : result.tasks) tasks.push_back(task_detail_json(result, t));
    json doc = {{"plan", result.plan.to_json()},
                {"plan_hash", result.plan.content_hash()},
                {"language_set", std::move(langs)},
                {"cross_languages", std::move(cross)},
                {"rows", std::move(rows)},
                {"tasks", std::move(tasks)}};
    return doc.dump(2) + "\n";
}

std::string render_markdown(const ExperimentResult& result) {
    std::ostringstream out;
    const auto& plan = result.plan;
    out << "# Cross-neutralisation results\n\n";
    out << "Encoder `" << plan.encoder_name << "`, layer " << plan.layer_index << ", seed " << plan.seed
        << ", plan `" << plan.content_hash().substr(0, 12) << "`.\n\n";

    if (!result.delta_rows.empty()) {
        out << "## Average change in accuracy\n\n";
        out << "Columns give the neutralising language x. `same` averages over test languages sharing x's "
               "value (x included: "
            << (plan.include_x_in_same ? "yes" : "no") << "), `diff` over the others. "
            << "Blank cells: x has no value for the task. "
            << "Parenthesised: x's own baseline accuracy is below " << two_decimals(plan.sufficiency_threshold)
            << ". `n/a`: no language in the group.\n\n";
        out << "| Task |";
        for (const auto& x : result.cross_languages) out << ' ' << x.str() << " same | " << x.str() << " diff |";
        out << "\n|---|";
        for (std::size_t i = 0; i < result.cross_languages.size(); ++i) out << "---:|---:|";
        out << '\n';
        for (const auto& task : result.tasks) {
            out << "| " << task.feature << " |";
            for (const auto& x : result.cross_languages) {
                const auto* row = find_row(result, task.feature, x);
                if (!row || row->omitted) {
                    out << "  |  |";
                } else {
                    out << ' ' << md_cell(row->mean_same, row->insufficient) << " | "
                        << md_cell(row->mean_diff, row->insufficient) << " |";
                }
            }
            out << '\n';
        }
        out << '\n';
    }

    out << "## Baseline accuracy\n\n";
    accuracy_table(out, result, false);
    bool any_self = false;
    for (const auto& t : result.tasks) any_self = any_self || t.self.has_value();
    if (any_self) {
        out << "\n## Accuracy after self-neutralisation\n\n";
        accuracy_table(out, result, true);
    }

    bool any_note = false;
    for (const auto& t : result.tasks) {
        if (t.covered) continue;
        if (!any_note) out << "\n## Tasks without coverage\n\n";
        any_note = true;
        out << "- " << t.feature << ": " << t.note << '\n';
    }

    const auto& c = plan.train;
    out << "\n## Probe training\n\n";
    out << "Optimizer " << optimizer_name(c.optimizer) << ", learning rate " << format_double(c.learning_rate)
        << ", batch " << c.batch_size << ", max epochs " << c.max_epochs << ", patience " << c.early_stop_patience
        << ", validation fraction " << format_double(c.validation_fraction) << ".\n";
    return out.str();
}

std::vector<std::filesystem::path> emit_report(const ExperimentResult& result, const std::vector<std::string>& formats,
                                               const std::filesystem::path& dir) {
    bool csv = false;
    bool js = false;
    bool md = false;
    for (const auto& f : formats) {
        if (f == "csv") {
            csv = true;
        } else if (f == "json") {
            js = true;
        } else if (f == "md") {
            md = true;
        } else if (f == "all") {
            csv = js = md = true;
        } else {
            fail(ErrorCode::kBadInput, "unknown report format '" + f + "'");
        }
    }
    if (result.tasks.empty()) fail(ErrorCode::kInvalidArgument, "nothing to report");
    std::vector<std::filesystem::path> written;
    if (csv) {
        write_file(dir / "report.csv", render_csv(result));
        written.push_back(dir / "report.csv");
    }
    if (js) {
        write_file(dir / "report.json", render_json(result));
        written.push_back(dir / "report.json");
    }
    if (md) {
        write_file(dir / "report.md", render_markdown(result));
        written.push_back(dir / "report.md");
    }
    return written;
}

}  // namespace typoprobe
