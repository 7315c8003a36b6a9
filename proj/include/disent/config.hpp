#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "disent/data.hpp"
#include "disent/model.hpp"
#include "disent/training.hpp"

namespace disent {

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const SyntheticSpec& s);
void from_json(const nlohmann::json& j, SyntheticSpec& s);

/// Everything needed to replay a run.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SyntheticSpec synthetic;
  /// Dataset cache file or image-folder root; the synthetic spec is used when empty.
  std::optional<std::filesystem::path> dataset;
  std::filesystem::path output_dir = "run";
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

/// Parses a JSON run configuration; missing keys keep their defaults. Throws ConfigError.
RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& config, const std::filesystem::path& path);

}  // namespace disent
