#include "mlagen/eval/protocol.hpp"

#include <limits>
#include <numeric>

#include "mlagen/model/flow_matching.hpp"

namespace mlagen::eval {

void EvalProtocol::validate() const {
    if (repetitions < 1) throw ConfigError("eval.repetitions: must be >= 1");
    if (mm_texts < 0 || mm_pairs < 1) throw ConfigError("eval.mm_texts >= 0 and eval.mm_pairs >= 1 required");
    if (batch < 1) throw ConfigError("eval.batch: must be >= 1");
}

Generation generate(const model::FlowNet<float>& net, const model::MotionAutoencoder& ae,
                    const std::vector<const synth::DatasetSample*>& prompts, const sampler::SamplerConfig& cfg,
                    std::uint64_t noise_seed, int batch) {
    if (prompts.empty()) throw DataError("generate: no prompts");
    const int C = net.config().joints * net.config().d_ae;
    Generation out;
    out.trace = sink::TraceStore(cfg.K);
    int chunk = 0;
    for (std::size_t b = 0; b < prompts.size(); b += static_cast<std::size_t>(batch), ++chunk) {
        const std::size_t e = std::min(prompts.size(), b + static_cast<std::size_t>(batch));
        std::vector<std::vector<int>> tokens;
        std::vector<int> lengths;
        Eigen::Index rows = 0;
        for (std::size_t i = b; i < e; ++i) {
            tokens.push_back(prompts[i]->text.tokens);
            lengths.push_back(model::latent_length(prompts[i]->clip.frame_count()));
            rows += lengths.back();
        }
        Rng rng = substream(noise_seed, "sampling", static_cast<std::uint64_t>(chunk));
        MatF x0 = model::standard_normal_matrix<float>(rows, C, rng);
        auto res = sampler::euler_sample<float>(sampler::model_field(net, tokens, lengths, cfg), x0, lengths, cfg);
        for (const auto& en : res.trace.entries())
            out.trace.record_value(en.sample_id + static_cast<int>(b), en.step, en.t, en.value);
        Eigen::Index r0 = 0;
        for (std::size_t i = b; i < e; ++i) {
            const int L = lengths[i - b];
            out.clips.push_back(ae.decode(MatF(res.x1.middleRows(r0, L)), prompts[i]->clip.frame_count()));
            if (!res.final_align.empty()) out.final_align.push_back(res.final_align[i - b]);
            r0 += L;
        }
    }
    const auto summary = out.trace.summarize();
    out.final_sinkratio = summary.empty() ? std::numeric_limits<double>::quiet_NaN() : summary.back().mean;
    return out;
}

MetricReport evaluate_model(const model::FlowNet<float>& net, const model::MotionAutoencoder& ae,
                            const Evaluator& evaluator, const std::vector<const synth::DatasetSample*>& test,
                            const synth::Vocabulary& vocab, const sampler::SamplerConfig& cfg,
                            const EvalProtocol& protocol, const std::string& variant,
                            std::vector<sink::SinkTrace>* traces) {
    protocol.validate();
    evaluator.require_gate();
    const auto n = static_cast<Eigen::Index>(test.size());
    if (n < kPoolSize) throw ProtocolError("evaluate: need at least 32 test prompts, got " + std::to_string(n));
    if (n < evaluator.config().d_eval + 1)
        throw ProtocolError("evaluate: FID needs at least d_eval + 1 test prompts");

    std::vector<const synth::MotionClip*> real_clips;
    std::vector<std::vector<int>> tokens;
    for (const auto* s : test) {
        real_clips.push_back(&s->clip);
        tokens.push_back(s->text.tokens);
    }
    const MatD real = evaluator.motion_features(real_clips);
    const MatD text = evaluator.text_features(tokens);

    std::vector<std::size_t> multi;
    for (std::size_t i = 0; i < test.size(); ++i)
        if (synth::content_positions(test[i]->text, vocab).size() >= 2) multi.push_back(i);

    MetricReport report;
    report.variant = variant;
    for (int r = 0; r < protocol.repetitions; ++r) {
        const auto rep = static_cast<std::uint64_t>(r);
        const Generation gen = generate(net, ae, test, cfg, substream(protocol.seed, "eval/noise", rep)(),
                                        protocol.batch);
        const MatD feats = evaluator.motion_features(gen.clips);
        MetricRow row;
        row.fid = fid(real, feats);

        std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
        std::iota(perm.begin(), perm.end(), 0);
        Rng pool_rng = substream(protocol.seed, "eval/pool", rep);
        for (std::size_t i = perm.size(); i > 1; --i)
            std::swap(perm[i - 1], perm[static_cast<std::size_t>(pool_rng() % i)]);
        MatD pm(n, feats.cols()), pt(n, text.cols());
        for (Eigen::Index i = 0; i < n; ++i) {
            pm.row(i) = feats.row(perm[static_cast<std::size_t>(i)]);
            pt.row(i) = text.row(perm[static_cast<std::size_t>(i)]);
        }
        row.r = r_precision(pm, pt, kPoolSize);
        row.matching = matching(feats, text);
        row.clip_score = clip_score(feats, text);

        if (!multi.empty() && !gen.final_align.empty()) {
            std::vector<MatD> recs;
            std::vector<const synth::DatasetSample*> ss;
            for (auto i : multi) {
                recs.push_back(gen.final_align[i]);
                ss.push_back(test[i]);
            }
            const auto a = alignment_accuracy(recs, ss, vocab);
            row.alignment_accuracy = a.accuracy;
            row.alignment_chance = a.chance;
        } else {
            row.alignment_accuracy = row.alignment_chance = std::numeric_limits<double>::quiet_NaN();
        }
        row.sinkratio = gen.final_sinkratio;

        if (protocol.mm_texts > 0) {
            const int m = std::min<int>(protocol.mm_texts, static_cast<int>(n));
            std::vector<const synth::DatasetSample*> mm;
            for (int half = 0; half < 2; ++half)
                for (int i = 0; i < m; ++i)
                    for (int k = 0; k < protocol.mm_pairs; ++k) mm.push_back(test[static_cast<std::size_t>(i)]);
            const Generation g2 = generate(net, ae, mm, cfg, substream(protocol.seed, "eval/mm", rep)(),
                                           protocol.batch);
            const MatD f2 = evaluator.motion_features(g2.clips);
            const auto half = static_cast<Eigen::Index>(m * protocol.mm_pairs);
            row.mmodality = mmodality(f2.topRows(half), f2.bottomRows(half));
        } else {
            row.mmodality = std::numeric_limits<double>::quiet_NaN();
        }
        report.repetitions.push_back(row);
        if (traces) traces->push_back(gen.trace.summarize());
    }
    return report;
}

}  // namespace mlagen::eval
