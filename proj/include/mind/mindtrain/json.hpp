#pragma once

#include <nlohmann/json.hpp>

#include "mind/mindtrain/mind.hpp"

namespace mind {

// Missing keys keep their defaults; unknown keys are rejected.
void to_json(nlohmann::json& j, const MindConfig& c);
void from_json(const nlohmann::json& j, MindConfig& c);
void to_json(nlohmann::json& j, const TransformSpec& s);
void from_json(const nlohmann::json& j, TransformSpec& s);
void to_json(nlohmann::json& j, const MindDiagnostics& d);
void from_json(const nlohmann::json& j, MindDiagnostics& d);

}  // namespace mind
