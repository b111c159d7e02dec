#pragma once

#include <filesystem>
#include <vector>

#include "json.hpp"
#include "mlagen/synthdata/corpus.hpp"

namespace mlagen::io {

struct Corpus {
    synth::GeneratorConfig config;
    std::vector<synth::DatasetSample> samples;

    std::vector<const synth::DatasetSample*> split(synth::Split s) const;
};

nlohmann::json generator_config_to_json(const synth::GeneratorConfig& cfg);
synth::GeneratorConfig generator_config_from_json(const nlohmann::json& j);

// <dir>/manifest.json holds config, vocabulary, split assignment, surfaces and
// spans; <dir>/clips.tsr holds one "clip/<id>" entry per sample.
void save_corpus(const std::filesystem::path& dir, const Corpus& corpus);
Corpus load_corpus(const std::filesystem::path& dir);

}  // namespace mlagen::io
