#include "mlagen/eval/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mlagen/eval/metrics.hpp"
#include "mlagen/io/tensor_archive.hpp"
#include "mlagen/numerics/ops.hpp"

namespace mlagen::eval {

namespace {

constexpr double kStdFloor = 1e-3;
constexpr int kFeatureChunk = 256;

}  // namespace

void EvaluatorConfig::validate() const {
    if (joints < 1) throw ConfigError("eval.joints: must be >= 1");
    if (d_eval < 1 || hidden < 1) throw ConfigError("eval.d_eval and eval.hidden must be >= 1");
    if (time_bins < 1 || time_bins > synth::kMinFrames) throw ConfigError("eval.time_bins: must lie in [1, 16]");
    if (epochs < 1 || batch_size < 2) throw ConfigError("eval.epochs >= 1 and eval.batch_size >= 2 required");
    if (!(temperature > 0)) throw ConfigError("eval.temperature: must be > 0");
    if (!(lr > 0)) throw ConfigError("eval.lr: must be > 0");
}

Evaluator::Evaluator(const EvaluatorConfig& cfg) : cfg_(cfg), text_(cfg.text, "eval.text.") {
    cfg_.validate();
    in_mean_ = RowVec<double>::Zero(cfg_.joints * 6);
    in_std_ = RowVec<double>::Ones(cfg_.joints * 6);
    init_params();
}

void Evaluator::init_params() {
    store_ = ParamStore<float>();
    Rng rng = substream(cfg_.seed, "init/eval");
    const int C = cfg_.joints * 6 + 2;
    const int H = cfg_.hidden;
    store_.add_dense("eval.m1.w", C, H, rng);
    store_.add_zeros("eval.m1.b", 1, H);
    store_.add_dense("eval.m2.w", H, H, rng);
    store_.add_zeros("eval.m2.b", 1, H);
    store_.add_dense("eval.mout.w", H * cfg_.time_bins, cfg_.d_eval, rng);
    store_.add_zeros("eval.mout.b", 1, cfg_.d_eval);
    text_.add_params(store_, rng);
    store_.add_dense("eval.tout.w", cfg_.text.d_clip, cfg_.d_eval, rng);
    store_.add_zeros("eval.tout.b", 1, cfg_.d_eval);
}

// Per frame: positions and forward differences, normalized, plus the
// relative time as (sin, cos) of a half turn.
MatF Evaluator::frame_inputs(const synth::MotionClip& clip) const {
    const int C = cfg_.joints * 3;
    if (clip.joints != cfg_.joints || clip.frames.cols() != C)
        throw ShapeError("evaluator: clip has " + std::to_string(clip.joints) + " joints, expected " +
                         std::to_string(cfg_.joints));
    const int F = clip.frame_count();
    if (F < cfg_.time_bins) throw ShapeError("evaluator: clip shorter than eval.time_bins");
    MatF x(F, 2 * C + 2);
    for (int f = 0; f < F; ++f) {
        const int nf = std::min(f + 1, F - 1);
        for (int c = 0; c < C; ++c) {
            const double pos = clip.frames(f, c);
            const double vel = clip.frames(nf, c) - clip.frames(f, c);
            x(f, c) = static_cast<float>((pos - in_mean_(c)) / in_std_(c));
            x(f, C + c) = static_cast<float>((vel - in_mean_(C + c)) / in_std_(C + c));
        }
        const double r = F > 1 ? static_cast<double>(f) / (F - 1) : 0.0;
        x(f, 2 * C) = static_cast<float>(std::sin(M_PI * r));
        x(f, 2 * C + 1) = static_cast<float>(std::cos(M_PI * r));
    }
    return x;
}

void Evaluator::fit_normalization(const std::vector<const synth::DatasetSample*>& train) {
    const int C = cfg_.joints * 6;
    in_mean_ = RowVec<double>::Zero(C);
    in_std_ = RowVec<double>::Ones(C);
    MatF all;
    {
        std::vector<MatF> parts;
        long rows = 0;
        for (const auto* s : train) {
            parts.push_back(frame_inputs(s->clip));
            rows += parts.back().rows();
        }
        all.resize(rows, C + 2);
        rows = 0;
        for (const auto& p : parts) {
            all.middleRows(rows, p.rows()) = p;
            rows += p.rows();
        }
    }
    for (int c = 0; c < C; ++c) {
        const auto col = all.col(c).cast<double>();
        const double m = col.mean();
        in_mean_(c) = m;
        in_std_(c) = std::max(kStdFloor, std::sqrt((col.array() - m).square().mean()));
    }
}

Var<float> Evaluator::motion_tower(Tape<float>& tape, const std::vector<const synth::MotionClip*>& clips) const {
    using namespace ops;
    auto& store = const_cast<ParamStore<float>&>(store_);
    std::vector<MatF> parts;
    std::vector<std::pair<int, int>> bins;
    int rows = 0;
    for (const auto* c : clips) {
        parts.push_back(frame_inputs(*c));
        const int F = static_cast<int>(parts.back().rows());
        for (int k = 0; k < cfg_.time_bins; ++k) {
            const int b = F * k / cfg_.time_bins;
            const int e = F * (k + 1) / cfg_.time_bins;
            bins.emplace_back(rows + b, e - b);
        }
        rows += F;
    }
    MatF x(rows, cfg_.joints * 6 + 2);
    rows = 0;
    for (const auto& p : parts) {
        x.middleRows(rows, p.rows()) = p;
        rows += static_cast<int>(p.rows());
    }
    auto p = [&](const char* n) { return tape.param(store, n); };
    auto h = gelu(linear(tape.constant(x), p("eval.m1.w"), p("eval.m1.b")));
    h = gelu(linear(h, p("eval.m2.w"), p("eval.m2.b")));
    auto pooled = reshape(segment_mean_rows(h, bins), static_cast<Eigen::Index>(clips.size()),
                          static_cast<Eigen::Index>(cfg_.hidden) * cfg_.time_bins);
    return l2_normalize_rows(linear(pooled, p("eval.mout.w"), p("eval.mout.b")));
}

Var<float> Evaluator::text_tower(Tape<float>& tape, const std::vector<std::vector<int>>& tokens) const {
    using namespace ops;
    auto& store = const_cast<ParamStore<float>&>(store_);
    auto feats = text_.forward(tape, store, tokens);
    return l2_normalize_rows(
        linear(feats.global, tape.param(store, "eval.tout.w"), tape.param(store, "eval.tout.b")));
}

MatD Evaluator::motion_features(const std::vector<const synth::MotionClip*>& clips) const {
    MatD out(static_cast<Eigen::Index>(clips.size()), cfg_.d_eval);
    for (std::size_t b = 0; b < clips.size(); b += kFeatureChunk) {
        const std::size_t e = std::min(clips.size(), b + kFeatureChunk);
        std::vector<const synth::MotionClip*> chunk(clips.begin() + static_cast<long>(b),
                                                    clips.begin() + static_cast<long>(e));
        Tape<float> tape(false);
        out.middleRows(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(e - b)) =
            motion_tower(tape, chunk).value().cast<double>();
    }
    return out;
}

MatD Evaluator::motion_features(const std::vector<synth::MotionClip>& clips) const {
    std::vector<const synth::MotionClip*> ptr;
    for (const auto& c : clips) ptr.push_back(&c);
    return motion_features(ptr);
}

MatD Evaluator::text_features(const std::vector<std::vector<int>>& tokens) const {
    MatD out(static_cast<Eigen::Index>(tokens.size()), cfg_.d_eval);
    for (std::size_t b = 0; b < tokens.size(); b += kFeatureChunk) {
        const std::size_t e = std::min(tokens.size(), b + kFeatureChunk);
        std::vector<std::vector<int>> chunk(tokens.begin() + static_cast<long>(b),
                                            tokens.begin() + static_cast<long>(e));
        Tape<float> tape(false);
        out.middleRows(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(e - b)) =
            text_tower(tape, chunk).value().cast<double>();
    }
    return out;
}

double Evaluator::retrieval_top1(const std::vector<const synth::DatasetSample*>& set) const {
    std::vector<const synth::MotionClip*> clips;
    std::vector<std::vector<int>> tokens;
    for (const auto* s : set) {
        clips.push_back(&s->clip);
        tokens.push_back(s->text.tokens);
    }
    return r_precision(motion_features(clips), text_features(tokens), kPoolSize).top1;
}

EvaluatorReport Evaluator::train(const std::vector<const synth::DatasetSample*>& train,
                                 const std::vector<const synth::DatasetSample*>& val) {
    if (train.size() < static_cast<std::size_t>(cfg_.batch_size)) throw DataError("train_eval: train split too small");
    if (val.size() < static_cast<std::size_t>(kPoolSize))
        throw ProtocolError("train_eval: validation split has fewer than 32 samples");
    gate_passed_ = false;
    init_params();
    fit_normalization(train);

    EvaluatorReport report;
    report.untrained_top1 = retrieval_top1(val);

    AdamWConfig opt;
    opt.lr = cfg_.lr;
    opt.weight_decay = cfg_.weight_decay;
    Rng shuffle = substream(cfg_.seed, "shuffle/eval");
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    const auto B = static_cast<std::size_t>(cfg_.batch_size);
    const float inv_tau = static_cast<float>(1.0 / cfg_.temperature);
    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle() % i)]);
        double total = 0;
        int batches = 0;
        for (std::size_t b = 0; b + B <= order.size(); b += B) {
            std::vector<const synth::MotionClip*> clips;
            std::vector<std::vector<int>> tokens;
            for (std::size_t r = b; r < b + B; ++r) {
                clips.push_back(&train[order[r]]->clip);
                tokens.push_back(train[order[r]]->text.tokens);
            }
            // Other pairs with the same description are not negatives.
            const auto n = static_cast<Eigen::Index>(B);
            MatF same = MatF::Zero(n, n);
            for (Eigen::Index i = 0; i < n; ++i)
                for (Eigen::Index j = 0; j < n; ++j)
                    if (i != j && tokens[static_cast<std::size_t>(i)] == tokens[static_cast<std::size_t>(j)])
                        same(i, j) = -1e4f;
            std::vector<int> diag(B);
            std::iota(diag.begin(), diag.end(), 0);

            store_.zero_grad();
            Tape<float> tape;
            auto m = motion_tower(tape, clips);
            auto t = text_tower(tape, tokens);
            auto logits = ops::add(ops::scale(ops::matmul_nt(m, t), inv_tau), tape.constant(same));
            auto loss = ops::scale(ops::add(ops::cross_entropy_rows(logits, diag),
                                            ops::cross_entropy_rows(ops::transpose(logits), diag)),
                                   0.5f);
            const double lv = loss.value()(0, 0);
            if (!std::isfinite(lv)) throw TrainingError("train_eval: loss diverged at epoch " + std::to_string(epoch));
            tape.backward(loss);
            adamw_step(store_, opt);
            total += lv;
            ++batches;
        }
        report.epoch_loss.push_back(total / std::max(1, batches));
    }
    report.val_top1 = retrieval_top1(val);
    val_top1_ = report.val_top1;
    gate_passed_ = val_top1_ >= kGateTop1;
    if (!gate_passed_)
        throw EvaluatorQualityError("train_eval: validation top-1 " + std::to_string(val_top1_) +
                                    " is below the 0.5 gate");
    return report;
}

void Evaluator::require_gate() const {
    if (!gate_passed_)
        throw EvaluatorQualityError("evaluator has not passed the validation gate (top-1 " + std::to_string(val_top1_) +
                                    " < 0.5); metrics refused");
}

void Evaluator::save(const std::filesystem::path& path) const {
    io::TensorArchive ar;
    io::put_params(ar, store_);
    ar.put("stats/in_mean", MatD(in_mean_));
    ar.put("stats/in_std", MatD(in_std_));
    auto& m = ar.meta();
    m["kind"] = "evaluator";
    m["joints"] = cfg_.joints;
    m["d_eval"] = cfg_.d_eval;
    m["hidden"] = cfg_.hidden;
    m["time_bins"] = cfg_.time_bins;
    m["text"] = {{"vocab", cfg_.text.vocab},   {"d_clip", cfg_.text.d_clip},
                 {"max_tokens", cfg_.text.max_tokens}, {"heads", cfg_.text.heads},
                 {"causal", cfg_.text.causal}, {"context", cfg_.text.context}};
    m["gate_passed"] = gate_passed_;
    m["val_top1"] = val_top1_;
    ar.write(path);
}

Evaluator Evaluator::load(const std::filesystem::path& path) {
    auto ar = io::TensorArchive::read(path);
    const auto& m = ar.meta();
    if (m.value("kind", "") != "evaluator") throw FormatError(path.string() + " is not an evaluator checkpoint");
    EvaluatorConfig cfg;
    cfg.joints = m["joints"].get<int>();
    cfg.d_eval = m["d_eval"].get<int>();
    cfg.hidden = m["hidden"].get<int>();
    cfg.time_bins = m["time_bins"].get<int>();
    const auto& t = m["text"];
    cfg.text = {t["vocab"].get<int>(), t["d_clip"].get<int>(), t["max_tokens"].get<int>(),
                t["heads"].get<int>(), t["causal"].get<bool>(), t["context"].get<int>()};
    Evaluator ev(cfg);
    io::get_params(ar, ev.store_);
    ev.in_mean_ = ar.get<double>("stats/in_mean");
    ev.in_std_ = ar.get<double>("stats/in_std");
    ev.gate_passed_ = m["gate_passed"].get<bool>();
    ev.val_top1_ = m["val_top1"].get<double>();
    return ev;
}

}  // namespace mlagen::eval
