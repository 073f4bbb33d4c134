#pragma once

#include <nlohmann/json.hpp>
#include <string>

#include "cvae/data.hpp"
#include "cvae/models.hpp"
#include "cvae/training.hpp"

namespace cvae {

/// One run = one flat JSON object. Shared image/attribute dimensions appear
/// once and are applied to both the dataset spec and the model config.
struct RunConfig {
    TrainConfig train;
    ModelConfig model;
    DatasetSpec data;
    int threads = 1;
    std::string out_dir = "out";

    void validate() const;
};

/// Parses a flat config object; unknown keys are rejected, defaults are
/// materialized. The result echoes back through run_config_to_json with every
/// field resolved. dataset_only skips model/training validation (for
/// commands that touch only the data, e.g. dataset synthesis).
RunConfig run_config_from_json(const nlohmann::json& j, bool dataset_only = false);
nlohmann::json run_config_to_json(const RunConfig& cfg);

RunConfig load_run_config(const std::string& path);
void write_run_config(const std::string& path, const RunConfig& cfg);

/// Builds the dataset named by the config and applies the configured split.
std::pair<Dataset, Dataset> build_datasets(const RunConfig& cfg);

}  // namespace cvae
