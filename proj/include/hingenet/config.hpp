#pragma once

#include <string>

#include <json.hpp>

#include "hingenet/baselines.hpp"
#include "hingenet/data.hpp"
#include "hingenet/foundation.hpp"
#include "hingenet/hinge.hpp"
#include "hingenet/postprocess.hpp"
#include "hingenet/train.hpp"

namespace hingenet {

// Rejects unknown keys, listing the valid ones; `where` names the section in
// the error message.
void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                const std::string& where);

nlohmann::json to_json(const StubConfig& c);
StubConfig stub_config_from_json(const nlohmann::json& j, StubConfig base = {});

nlohmann::json to_json(const HingeConfig& c);
HingeConfig hinge_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const AdapterConfig& c);
AdapterConfig adapter_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const LoraConfig& c);
LoraConfig lora_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const DbnConfig& c);
DbnConfig dbn_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SyntheticConfig& c);
SyntheticConfig synthetic_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SplitRatios& c);
SplitRatios split_ratios_from_json(const nlohmann::json& j);

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

nlohmann::json parse_json_text(const std::string& text, const std::string& where);

}  // namespace hingenet
