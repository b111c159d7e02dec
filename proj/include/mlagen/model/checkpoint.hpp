#pragma once

#include <filesystem>

#include "json.hpp"
#include "mlagen/model/flow_matching.hpp"

namespace mlagen::model {

nlohmann::json flow_config_to_json(const FlowConfig& cfg);
FlowConfig flow_config_from_json(const nlohmann::json& j);

struct FlowCheckpoint {
    FlowNet<float> net;
    MaskPolicy mask;  // the policy the network was trained with
};

void save_flow(const std::filesystem::path& path, const FlowNet<float>& net, const MaskPolicy& mask);
FlowCheckpoint load_flow(const std::filesystem::path& path);

}  // namespace mlagen::model
