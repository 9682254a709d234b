#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "experiment.hpp"

namespace typoprobe {

std::string render_csv(const ExperimentResult& result);
std::string render_json(const ExperimentResult& result);
std::string render_markdown(const ExperimentResult& result);

// Per-task detail, also embedded in render_json.
nlohmann::json task_detail_json(const ExperimentResult& result, const TaskResult& task);

// formats: any of "csv", "json", "md", "all". Writes report.<ext> into dir.
std::vector<std::filesystem::path> emit_report(const ExperimentResult& result, const std::vector<std::string>& formats,
                                               const std::filesystem::path& dir);

}  // namespace typoprobe
