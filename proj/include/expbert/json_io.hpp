#pragma once

#include <json.hpp>

#include "expbert/evaluation.hpp"
#include "expbert/mlp.hpp"
#include "expbert/representation.hpp"
#include "expbert/run_result.hpp"

namespace expbert {

nlohmann::json to_json(const MlpConfig& config);
// Strict: unknown keys are a ConfigError. Missing keys keep the defaults in `base`.
MlpConfig mlp_config_from_json(const nlohmann::json& j, const MlpConfig& base = {});

nlohmann::json to_json(const RunResult& result);
RunResult run_result_from_json(const nlohmann::json& j);

nlohmann::json to_json(const AggregateResult& result);

nlohmann::json to_json(std::span<const Block> layout);
std::vector<Block> layout_from_json(const nlohmann::json& j);

// Rejects keys outside `allowed` with a ConfigError naming `context`.
void require_known_keys(const nlohmann::json& object, std::initializer_list<const char*> allowed,
                        const std::string& context);

}  // namespace expbert
