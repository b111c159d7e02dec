#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "mlagen/eval/evaluator.hpp"
#include "mlagen/eval/protocol.hpp"
#include "mlagen/model/autoencoder.hpp"
#include "mlagen/model/flow_matching.hpp"
#include "mlagen/sampler/sampler.hpp"

namespace mlagen::pipeline {

using json = nlohmann::json;

// Every configurable field with its default. Leaf types define the schema.
json default_config();

// Fields whose default departs from the reference hyperparameters, with the
// reason. Written into every snapshot under "_notes".
std::map<std::string, std::string> desk_scale_notes();

// Sets the leaf at a dotted path from its textual value, parsed with the
// leaf's type. Unknown paths and unparsable values raise ConfigError naming
// the path.
void set_path(json& cfg, const std::string& path, const std::string& value);
const json& get_path(const json& cfg, const std::string& path);

// Dotted paths of every leaf, in document order.
std::vector<std::string> leaf_paths(const json& cfg);

// Checks `cfg` against the default schema (same keys, same leaf types) and
// value ranges. Keys starting with '_' are ignored.
void validate_config(const json& cfg);

// Fills missing keys from the defaults; used when loading a snapshot.
json merge_defaults(const json& cfg);

// Resolved run directory: relative paths live under $MLAGEN_RUN_ROOT when set.
std::filesystem::path run_directory(const json& cfg);

// Variant tag such as "S-strongmask-sinkctrl-w4".
std::string variant_tag(const json& cfg);

synth::GeneratorConfig data_config(const json& cfg);
model::AEConfig ae_config(const json& cfg);
model::FlowConfig flow_config(const json& cfg, int vocab_size);
model::FlowTrainConfig flow_train_config(const json& cfg);
model::MaskPolicy mask_policy(const json& cfg);
sampler::SamplerConfig sampler_config(const json& cfg);
eval::EvaluatorConfig evaluator_config(const json& cfg, int vocab_size);
eval::EvalProtocol eval_protocol(const json& cfg);

// Named sub-seed of the root seed.
std::uint64_t component_seed(const json& cfg, const std::string& name);

}  // namespace mlagen::pipeline
