#pragma once

#include <string>
#include <vector>

#include "mlagen/eval/evaluator.hpp"
#include "mlagen/eval/metrics.hpp"
#include "mlagen/model/autoencoder.hpp"
#include "mlagen/sampler/sampler.hpp"

namespace mlagen::eval {

struct EvalProtocol {
    int repetitions = 20;
    int mm_texts = 8;    // prompts used for MModality
    int mm_pairs = 10;   // paired generations per prompt
    int batch = 64;      // prompts per sampling call
    std::uint64_t seed = 0;

    void validate() const;
};

// Generated clips for a prompt list, with the conditional alignment maps of
// the final step and the sink trace. Without an alignment block the maps and
// the trace are empty.
struct Generation {
    std::vector<synth::MotionClip> clips;
    std::vector<MatD> final_align;
    sink::TraceStore trace;
    double final_sinkratio = 0.0;
};

// One Euler trajectory per prompt, with the prompt's ground-truth length.
// `noise_seed` picks the X_0 draw; equal seeds give identical output.
Generation generate(const model::FlowNet<float>& net, const model::MotionAutoencoder& ae,
                    const std::vector<const synth::DatasetSample*>& prompts, const sampler::SamplerConfig& cfg,
                    std::uint64_t noise_seed, int batch = 64);

// Real features of `test` against fresh generations per repetition.
MetricReport evaluate_model(const model::FlowNet<float>& net, const model::MotionAutoencoder& ae,
                            const Evaluator& evaluator, const std::vector<const synth::DatasetSample*>& test,
                            const synth::Vocabulary& vocab, const sampler::SamplerConfig& cfg,
                            const EvalProtocol& protocol, const std::string& variant,
                            std::vector<sink::SinkTrace>* traces = nullptr);

}  // namespace mlagen::eval
