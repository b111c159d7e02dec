#include "mlagen/io/corpus_io.hpp"

#include <cstdio>

#include "mlagen/io/tensor_archive.hpp"

namespace mlagen::io {

using nlohmann::json;

namespace {

std::string clip_key(int id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "clip/%06d", id);
    return buf;
}

const char* kind_name(synth::TokenKind k) {
    switch (k) {
        case synth::TokenKind::start: return "start";
        case synth::TokenKind::primitive: return "primitive";
        case synth::TokenKind::connective: return "connective";
        case synth::TokenKind::modifier: return "modifier";
    }
    return "start";
}

}  // namespace

std::vector<const synth::DatasetSample*> Corpus::split(synth::Split s) const {
    std::vector<const synth::DatasetSample*> out;
    for (const auto& x : samples)
        if (x.split == s) out.push_back(&x);
    return out;
}

json generator_config_to_json(const synth::GeneratorConfig& cfg) {
    return json{{"n_samples", cfg.n_samples},         {"seed", cfg.seed},
                {"joints", cfg.joints},               {"max_primitives", cfg.max_primitives},
                {"modifier_prob", cfg.modifier_prob}, {"while_prob", cfg.while_prob},
                {"velocity_cap", cfg.velocity_cap}};
}

synth::GeneratorConfig generator_config_from_json(const json& j) {
    synth::GeneratorConfig cfg;
    cfg.n_samples = j.at("n_samples").get<int>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.joints = j.at("joints").get<int>();
    cfg.max_primitives = j.at("max_primitives").get<int>();
    cfg.modifier_prob = j.at("modifier_prob").get<double>();
    cfg.while_prob = j.at("while_prob").get<double>();
    cfg.velocity_cap = j.at("velocity_cap").get<double>();
    if (cfg.joints < 2) throw ConfigError("data.joints: must be >= 2");
    cfg.vocab = synth::default_vocabulary(cfg.joints);
    return cfg;
}

void save_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
    json m;
    m["config"] = generator_config_to_json(corpus.config);
    json vocab = json::array();
    for (int i = 0; i < corpus.config.vocab.size(); ++i)
        vocab.push_back({{"id", i}, {"word", corpus.config.vocab.word(i)},
                         {"kind", kind_name(corpus.config.vocab.kind(i))}});
    m["vocab"] = vocab;
    json samples = json::array();
    TensorArchive ar;
    for (const auto& s : corpus.samples) {
        json spans = json::array();
        for (const auto& sp : s.text.spans) spans.push_back({sp.begin, sp.end});
        samples.push_back({{"id", s.sample_id},
                           {"split", synth::split_name(s.split)},
                           {"surface", s.text.surface},
                           {"tokens", s.text.tokens},
                           {"spans", spans},
                           {"frames", s.clip.frame_count()}});
        ar.put(clip_key(s.sample_id), MatF(s.clip.frames.cast<float>()));
    }
    m["samples"] = samples;
    ar.meta()["joints"] = corpus.config.joints;
    write_file(dir / "manifest.json", m.dump(1));
    ar.write(dir / "clips.tsr");
}

Corpus load_corpus(const std::filesystem::path& dir) {
    if (!std::filesystem::exists(dir / "manifest.json"))
        throw DependencyError("missing artifact: " + (dir / "manifest.json").string() + " (run gen-data first)");
    const json m = json::parse(read_file(dir / "manifest.json"));
    Corpus c;
    c.config = generator_config_from_json(m.at("config"));
    const auto& vocab = c.config.vocab;
    if (static_cast<int>(m.at("vocab").size()) != vocab.size())
        throw FormatError("corpus vocabulary does not match the built-in vocabulary");
    for (const auto& v : m["vocab"])
        if (vocab.word(v["id"].get<int>()) != v["word"].get<std::string>())
            throw FormatError("corpus vocabulary does not match the built-in vocabulary");
    const auto ar = TensorArchive::read(dir / "clips.tsr");
    for (const auto& js : m.at("samples")) {
        synth::DatasetSample s;
        s.sample_id = js["id"].get<int>();
        s.split = synth::parse_split(js["split"].get<std::string>());
        s.text.surface = js["surface"].get<std::string>();
        s.text.tokens = js["tokens"].get<std::vector<int>>();
        for (const auto& sp : js["spans"]) s.text.spans.push_back({sp[0].get<int>(), sp[1].get<int>()});
        s.clip.joints = c.config.joints;
        s.clip.frames = ar.get<double>(clip_key(s.sample_id));
        if (s.clip.frame_count() != js["frames"].get<int>())
            throw FormatError("clip length mismatch for sample " + std::to_string(s.sample_id));
        c.samples.push_back(std::move(s));
    }
    return c;
}

}  // namespace mlagen::io
