#pragma once

// JSON mappings for configuration structs, shared by the checkpoint header
// and the CLI run configuration. Missing keys keep their defaults.

#include <json.hpp>

#include "laygen/model.hpp"
#include "laygen/sample.hpp"
#include "laygen/synth.hpp"
#include "laygen/train.hpp"

namespace laygen {

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const SamplerConfig& c);
void from_json(const nlohmann::json& j, SamplerConfig& c);
void to_json(nlohmann::json& j, const SynthGrammarConfig& c);
void from_json(const nlohmann::json& j, SynthGrammarConfig& c);
void to_json(nlohmann::json& j, const EpochLog& e);
void from_json(const nlohmann::json& j, EpochLog& e);

}  // namespace laygen
