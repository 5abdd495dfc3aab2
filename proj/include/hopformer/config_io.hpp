// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "hopformer/model.hpp"
#include "hopformer/training.hpp"

namespace hopformer {

inline constexpr const char* kCheckpointMagic = "HOPFORMER1";

nlohmann::json to_json(const ModelConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// {"model": {...}, "train": {...}}; either section may be omitted.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& cfg);

nlohmann::json save_checkpoint(const Model& m);
/// Throws InputError on a wrong magic string, missing or mis-shaped arrays.
Model load_checkpoint(const nlohmann::json& j);

/// 64-bit FNV-1a over the canonical (key-sorted) serialisation.
std::uint64_t config_hash(const nlohmann::json& j);

}  // namespace hopformer
