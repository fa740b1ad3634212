#pragma once

#include "json.hpp"

namespace pinrod {

struct SirenConfig;
struct PnodeConfig;
struct GeneratorConfig;
struct NormStats;
struct TrainConfig;
struct LatentFitConfig;

void to_json(nlohmann::json& j, const SirenConfig& c);
void from_json(const nlohmann::json& j, SirenConfig& c);
void to_json(nlohmann::json& j, const PnodeConfig& c);
void from_json(const nlohmann::json& j, PnodeConfig& c);
void to_json(nlohmann::json& j, const GeneratorConfig& c);
void from_json(const nlohmann::json& j, GeneratorConfig& c);
void to_json(nlohmann::json& j, const NormStats& c);
void from_json(const nlohmann::json& j, NormStats& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const LatentFitConfig& c);
void from_json(const nlohmann::json& j, LatentFitConfig& c);

}  // namespace pinrod
