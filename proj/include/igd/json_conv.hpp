#pragma once

#include "json.hpp"

#include "igd/gac.hpp"
#include "igd/models.hpp"
#include "igd/msssim.hpp"
#include "igd/trainer.hpp"

namespace igd {

// nlohmann ADL hooks shared by config files and checkpoints.
void to_json(nlohmann::json& j, const BackboneConfig& c);
void from_json(const nlohmann::json& j, BackboneConfig& c);

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

void to_json(nlohmann::json& j, const MsssimConfig& c);
void from_json(const nlohmann::json& j, MsssimConfig& c);

void to_json(nlohmann::json& j, const GaussianDescriptor& d);
void from_json(const nlohmann::json& j, GaussianDescriptor& d);

}  // namespace igd
