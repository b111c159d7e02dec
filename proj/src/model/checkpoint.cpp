#include "mlagen/model/checkpoint.hpp"

#include <cmath>

#include "mlagen/io/tensor_archive.hpp"

namespace mlagen::model {

nlohmann::json flow_config_to_json(const FlowConfig& c) {
    return {{"joints", c.joints},     {"d_ae", c.d_ae},
            {"d_flow", c.d_flow},     {"blocks", c.blocks},
            {"slots", c.slots},       {"heads", c.heads},
            {"d_time", c.d_time},     {"max_latent", c.max_latent},
            {"ff_mult", c.ff_mult},   {"lambda", c.lambda},
            {"use_memory", c.use_memory}, {"use_align", c.use_align},
            {"text",
             {{"vocab", c.text.vocab},
              {"d_clip", c.text.d_clip},
              {"max_tokens", c.text.max_tokens},
              {"heads", c.text.heads},
              {"causal", c.text.causal},
              {"context", c.text.context}}}};
}

FlowConfig flow_config_from_json(const nlohmann::json& j) {
    try {
        FlowConfig c;
        c.joints = j.at("joints").get<int>();
        c.d_ae = j.at("d_ae").get<int>();
        c.d_flow = j.at("d_flow").get<int>();
        c.blocks = j.at("blocks").get<int>();
        c.slots = j.at("slots").get<int>();
        c.heads = j.at("heads").get<int>();
        c.d_time = j.at("d_time").get<int>();
        c.max_latent = j.at("max_latent").get<int>();
        c.ff_mult = j.at("ff_mult").get<int>();
        c.lambda = j.at("lambda").get<double>();
        c.use_memory = j.at("use_memory").get<bool>();
        c.use_align = j.at("use_align").get<bool>();
        const auto& t = j.at("text");
        c.text.vocab = t.at("vocab").get<int>();
        c.text.d_clip = t.at("d_clip").get<int>();
        c.text.max_tokens = t.at("max_tokens").get<int>();
        c.text.heads = t.at("heads").get<int>();
        c.text.causal = t.at("causal").get<bool>();
        c.text.context = t.at("context").get<int>();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("flow config: ") + e.what());
    }
}

void save_flow(const std::filesystem::path& path, const FlowNet<float>& net, const MaskPolicy& mask) {
    io::TensorArchive ar;
    io::put_params(ar, net.params());
    ar.meta()["kind"] = "flow";
    ar.meta()["config"] = flow_config_to_json(net.config());
    ar.meta()["mask"] = {{"enabled", mask.enabled},
                         {"t_thresh", std::isfinite(mask.t_thresh) ? nlohmann::json(mask.t_thresh) : nlohmann::json()},
                         {"j0", mask.j0}};
    ar.write(path);
}

FlowCheckpoint load_flow(const std::filesystem::path& path) {
    auto ar = io::TensorArchive::read(path);
    if (ar.meta().value("kind", "") != "flow") throw FormatError(path.string() + " is not a flow checkpoint");
    FlowCheckpoint ck{FlowNet<float>(flow_config_from_json(ar.meta()["config"]), 0), {}};
    io::get_params(ar, ck.net.params());
    const auto& m = ar.meta()["mask"];
    ck.mask.enabled = m["enabled"].get<bool>();
    ck.mask.t_thresh = m["t_thresh"].is_null() ? sink::kNoMask : m["t_thresh"].get<double>();
    ck.mask.j0 = m["j0"].get<int>();
    return ck;
}

}  // namespace mlagen::model
