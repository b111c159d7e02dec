#include "mlagen/sampler/sampler.hpp"

namespace mlagen::sampler {

const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::vanilla: return "vanilla";
        case Strategy::fixed_ctrl: return "fixed_ctrl";
        case Strategy::sink_ctrl: return "sink_ctrl";
    }
    return "vanilla";
}

Strategy parse_strategy(const std::string& s) {
    if (s == "vanilla") return Strategy::vanilla;
    if (s == "fixed_ctrl") return Strategy::fixed_ctrl;
    if (s == "sink_ctrl") return Strategy::sink_ctrl;
    throw ConfigError("sampler.strategy: unknown strategy '" + s + "' (vanilla|fixed_ctrl|sink_ctrl)");
}

}  // namespace mlagen::sampler
