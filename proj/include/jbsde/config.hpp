#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "jbsde/comparison.hpp"

namespace jbsde {

/// A parsed experiment file. See configs/README.md for the schema.
struct ExperimentConfig {
    nlohmann::json raw;  // effective configuration, echoed into every output
    std::string id = "experiment";
    ExperimentSetup setup;
    GeneratorSpec generator;
    std::optional<GeneratorSpec> generator2;
    TerminalSpec terminal;
    std::optional<TerminalSpec> terminal2;
    std::optional<double> strict_margin;
    std::optional<ConverseParams> converse;
    ValidationOptions validation;
    bool dump_paths = true;
    bool dump_solution = true;
};

/// Throws ConfigError naming the offending key.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Builders for the small coefficient family, exposed for tests.
GeneratorSpec make_generator(const nlohmann::json& j, const JumpMeasureSpec& measure, std::size_t dim_x,
                             std::size_t dim_w, const std::string& where);
TerminalSpec make_terminal(const nlohmann::json& j, std::size_t dim_x, const std::string& where);

}  // namespace jbsde
