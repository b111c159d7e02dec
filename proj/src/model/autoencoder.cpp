#include "mlagen/model/autoencoder.hpp"

#include <algorithm>
#include <numeric>

#include "mlagen/numerics/ops.hpp"

namespace mlagen::model {

namespace {

constexpr int kWindow = kStride * 3;
constexpr double kStdFloor = 1e-3;

}  // namespace

MotionAutoencoder::MotionAutoencoder(const AEConfig& cfg) : cfg_(cfg) {
    if (cfg.joints < 1 || cfg.d_ae < 1 || cfg.hidden < 1) throw ConfigError("ae: dimensions must be positive");
    if (cfg.epochs < 1 || cfg.batch_rows < 1) throw ConfigError("ae: epochs and batch_rows must be positive");
    init_params();
}

void MotionAutoencoder::init_params() {
    store_ = ParamStore<float>();
    Rng rng = substream(cfg_.seed, "init/ae");
    store_.add_dense("enc1.w", kWindow, cfg_.hidden, rng);
    store_.add_zeros("enc1.b", 1, cfg_.hidden);
    store_.add_dense("enc2.w", cfg_.hidden, cfg_.d_ae, rng);
    store_.add_zeros("enc2.b", 1, cfg_.d_ae);
    store_.add_dense("dec1.w", cfg_.d_ae, cfg_.hidden, rng);
    store_.add_zeros("dec1.b", 1, cfg_.hidden);
    store_.add_dense("dec2.w", cfg_.hidden, kWindow, rng);
    store_.add_zeros("dec2.b", 1, kWindow);
}

void MotionAutoencoder::require_trained(const char* op) const {
    if (!trained_) throw StateError(std::string("autoencoder is untrained (") + op + ")");
}

MatF MotionAutoencoder::windows(const synth::MotionClip& clip) const {
    const int J = cfg_.joints;
    if (clip.joints != J || clip.frames.cols() != J * 3)
        throw ShapeError("ae: clip has " + std::to_string(clip.joints) + " joints, expected " + std::to_string(J));
    const int F = clip.frame_count();
    if (F < 1) throw ShapeError("ae: empty clip");
    const int L = latent_length(F);
    MatF w(L * J, kWindow);
    for (int i = 0; i < L; ++i)
        for (int k = 0; k < kStride; ++k) {
            const int f = std::min(i * kStride + k, F - 1);
            for (int j = 0; j < J; ++j)
                for (int c = 0; c < 3; ++c) {
                    const int ch = j * 3 + c;
                    w(i * J + j, k * 3 + c) =
                        static_cast<float>((clip.frames(f, ch) - coord_mean_(ch)) / coord_std_(ch));
                }
        }
    return w;
}

MatF MotionAutoencoder::encode_rows(const MatF& w) const {
    auto& store = const_cast<ParamStore<float>&>(store_);
    Tape<float> tape(false);
    auto x = tape.constant(w);
    auto h = ops::silu(ops::linear(x, tape.param(store, "enc1.w"), tape.param(store, "enc1.b")));
    return ops::linear(h, tape.param(store, "enc2.w"), tape.param(store, "enc2.b")).value();
}

MatF MotionAutoencoder::decode_rows(const MatF& z) const {
    auto& store = const_cast<ParamStore<float>&>(store_);
    Tape<float> tape(false);
    auto x = tape.constant(z);
    auto h = ops::silu(ops::linear(x, tape.param(store, "dec1.w"), tape.param(store, "dec1.b")));
    return ops::linear(h, tape.param(store, "dec2.w"), tape.param(store, "dec2.b")).value();
}

AETrainReport MotionAutoencoder::train(const std::vector<const synth::DatasetSample*>& train_set) {
    if (train_set.empty()) throw DataError("train_ae: empty train split");
    const int J = cfg_.joints;
    const int C = J * 3;

    // Per-channel coordinate statistics over every training frame.
    RowVec<double> sum = RowVec<double>::Zero(C), sq = RowVec<double>::Zero(C);
    double n = 0;
    for (const auto* s : train_set) {
        sum += s->clip.frames.colwise().sum();
        sq += s->clip.frames.array().square().matrix().colwise().sum();
        n += s->clip.frame_count();
    }
    coord_mean_ = sum / n;
    coord_std_.resize(C);
    for (int c = 0; c < C; ++c)
        coord_std_(c) = std::max(kStdFloor, std::sqrt(std::max(0.0, sq(c) / n - coord_mean_(c) * coord_mean_(c))));

    std::vector<MatF> parts;
    Eigen::Index rows = 0;
    for (const auto* s : train_set) {
        parts.push_back(windows(s->clip));
        rows += parts.back().rows();
    }
    MatF all(rows, kWindow);
    rows = 0;
    for (const auto& p : parts) {
        all.middleRows(rows, p.rows()) = p;
        rows += p.rows();
    }

    init_params();
    AdamWConfig opt;
    opt.lr = cfg_.lr;
    opt.weight_decay = cfg_.weight_decay;
    Rng shuffle = substream(cfg_.seed, "shuffle/ae");
    std::vector<int> order(static_cast<std::size_t>(all.rows()));
    std::iota(order.begin(), order.end(), 0);

    AETrainReport report;
    auto eval_loss = [&]() {
        MatF rec = decode_rows(encode_rows(all));
        return static_cast<double>((rec - all).squaredNorm()) / static_cast<double>(all.size());
    };
    report.initial_loss = eval_loss();
    const int B = cfg_.batch_rows;
    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle() % i)]);
        double total = 0;
        int batches = 0;
        for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(B)) {
            const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(B));
            MatF xb(static_cast<Eigen::Index>(e - b), kWindow);
            for (std::size_t r = b; r < e; ++r) xb.row(static_cast<Eigen::Index>(r - b)) = all.row(order[r]);
            store_.zero_grad();
            Tape<float> tape;
            auto x = tape.constant(xb);
            auto h = ops::silu(ops::linear(x, tape.param(store_, "enc1.w"), tape.param(store_, "enc1.b")));
            auto z = ops::linear(h, tape.param(store_, "enc2.w"), tape.param(store_, "enc2.b"));
            auto h2 = ops::silu(ops::linear(z, tape.param(store_, "dec1.w"), tape.param(store_, "dec1.b")));
            auto y = ops::linear(h2, tape.param(store_, "dec2.w"), tape.param(store_, "dec2.b"));
            auto loss = ops::mse(y, x);
            const double lv = loss.value()(0, 0);
            if (!std::isfinite(lv)) throw TrainingError("train_ae: loss diverged at epoch " + std::to_string(epoch));
            tape.backward(loss);
            adamw_step(store_, opt);
            total += lv;
            ++batches;
        }
        report.epoch_loss.push_back(total / batches);
    }
    report.final_loss = eval_loss();
    if (!std::isfinite(report.final_loss)) throw TrainingError("train_ae: final loss is not finite");

    // Latent channel statistics so the flow sees unit-scale targets.
    MatF z = encode_rows(all);
    latent_mean_ = z.cast<double>().colwise().mean();
    latent_std_.resize(cfg_.d_ae);
    for (int c = 0; c < cfg_.d_ae; ++c) {
        const double m = latent_mean_(c);
        const double v = (z.col(c).cast<double>().array() - m).square().mean();
        latent_std_(c) = std::max(kStdFloor, std::sqrt(v));
    }
    trained_ = true;
    return report;
}

LatentSequence MotionAutoencoder::encode(const synth::MotionClip& clip) const {
    require_trained("encode");
    MatF z = encode_rows(windows(clip));
    for (Eigen::Index r = 0; r < z.rows(); ++r)
        for (int c = 0; c < cfg_.d_ae; ++c)
            z(r, c) = static_cast<float>((z(r, c) - latent_mean_(c)) / latent_std_(c));
    LatentSequence out;
    out.frames = clip.frame_count();
    out.joints = cfg_.joints;
    out.d_ae = cfg_.d_ae;
    const int L = latent_length(out.frames);
    out.x = Eigen::Map<const MatF>(z.data(), L, cfg_.joints * cfg_.d_ae);
    return out;
}

synth::MotionClip MotionAutoencoder::decode(const LatentSequence& z) const { return decode(z.x, z.frames); }

synth::MotionClip MotionAutoencoder::decode(const MatF& x, int frames) const {
    require_trained("decode");
    const int J = cfg_.joints;
    if (x.cols() != J * cfg_.d_ae) throw ShapeError("ae decode: bad latent width " + std::to_string(x.cols()));
    if (frames < 1 || latent_length(frames) != x.rows())
        throw ShapeError("ae decode: " + std::to_string(x.rows()) + " latent frames cannot decode to " +
                         std::to_string(frames) + " frames");
    MatF rows = Eigen::Map<const MatF>(x.data(), x.rows() * J, cfg_.d_ae);
    for (Eigen::Index r = 0; r < rows.rows(); ++r)
        for (int c = 0; c < cfg_.d_ae; ++c)
            rows(r, c) = static_cast<float>(rows(r, c) * latent_std_(c) + latent_mean_(c));
    MatF w = decode_rows(rows);
    synth::MotionClip clip;
    clip.joints = J;
    clip.frames.resize(frames, J * 3);
    for (int f = 0; f < frames; ++f) {
        const int i = f / kStride, k = f % kStride;
        for (int j = 0; j < J; ++j)
            for (int c = 0; c < 3; ++c) {
                const int ch = j * 3 + c;
                clip.frames(f, ch) = w(i * J + j, k * 3 + c) * coord_std_(ch) + coord_mean_(ch);
            }
    }
    return clip;
}

double MotionAutoencoder::reconstruction_mse(const std::vector<const synth::DatasetSample*>& set) const {
    require_trained("reconstruction_mse");
    double err = 0, n = 0;
    for (const auto* s : set) {
        auto rec = decode(encode(s->clip));
        for (int f = 0; f < rec.frame_count(); ++f)
            for (int ch = 0; ch < rec.frames.cols(); ++ch) {
                const double d = (rec.frames(f, ch) - s->clip.frames(f, ch)) / coord_std_(ch);
                err += d * d;
            }
        n += static_cast<double>(rec.frames.size());
    }
    return n > 0 ? err / n : 0.0;
}

void MotionAutoencoder::save(const std::filesystem::path& path) const {
    require_trained("save");
    io::TensorArchive ar;
    io::put_params(ar, store_);
    ar.put("stats/coord_mean", MatD(coord_mean_));
    ar.put("stats/coord_std", MatD(coord_std_));
    ar.put("stats/latent_mean", MatD(latent_mean_));
    ar.put("stats/latent_std", MatD(latent_std_));
    ar.meta()["kind"] = "autoencoder";
    ar.meta()["joints"] = cfg_.joints;
    ar.meta()["d_ae"] = cfg_.d_ae;
    ar.meta()["hidden"] = cfg_.hidden;
    ar.write(path);
}

MotionAutoencoder MotionAutoencoder::load(const std::filesystem::path& path) {
    auto ar = io::TensorArchive::read(path);
    if (ar.meta().value("kind", "") != "autoencoder") throw FormatError(path.string() + " is not an autoencoder checkpoint");
    AEConfig cfg;
    cfg.joints = ar.meta()["joints"].get<int>();
    cfg.d_ae = ar.meta()["d_ae"].get<int>();
    cfg.hidden = ar.meta()["hidden"].get<int>();
    MotionAutoencoder ae(cfg);
    io::get_params(ar, ae.store_);
    ae.coord_mean_ = ar.get<double>("stats/coord_mean");
    ae.coord_std_ = ar.get<double>("stats/coord_std");
    ae.latent_mean_ = ar.get<double>("stats/latent_mean");
    ae.latent_std_ = ar.get<double>("stats/latent_std");
    ae.trained_ = true;
    return ae;
}

}  // namespace mlagen::model
