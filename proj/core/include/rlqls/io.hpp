#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "rlqls/ising.hpp"

namespace rlqls {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double x);

nlohmann::json to_json(const IsingProblem& problem);
IsingProblem problem_from_json(const nlohmann::json& j);

nlohmann::json to_json(const InstanceSet& set);
InstanceSet instance_set_from_json(const nlohmann::json& j);

/// Pretty-printed with 2-space indent and a trailing newline.
void save_instance_set(const std::filesystem::path& path, const InstanceSet& set);
InstanceSet load_instance_set(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace rlqls
