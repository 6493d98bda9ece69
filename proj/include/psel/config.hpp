#pragma once

#include <string>

#include <json.hpp>

#include "psel/montecarlo.hpp"

namespace psel {

/// JSON document mirroring ExperimentConfig. Populations and sweep components
/// are one-based in JSON, zero-based in C++.
nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg);

/// Throws InvalidArgument on any schema violation (unknown keys, wrong types,
/// invalid values).
ExperimentConfig config_from_json(const nlohmann::json& doc);

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

std::string dump_config(const ExperimentConfig& cfg);

Family parse_family(const std::string& name);

}  // namespace psel
