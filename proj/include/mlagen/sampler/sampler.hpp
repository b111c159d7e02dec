#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mlagen/model/flownet.hpp"
#include "mlagen/sink/sink.hpp"

namespace mlagen::sampler {

enum class Strategy { vanilla, fixed_ctrl, sink_ctrl };
const char* strategy_name(Strategy s);
Strategy parse_strategy(const std::string& s);

struct GuidanceConstants {
    double lambda_ctrl = 6.0;
    double k_base = 2.0;
    double alpha = 0.18;
};

struct SamplerConfig {
    int steps = 100;
    double w = 4.0;
    Strategy strategy = Strategy::sink_ctrl;
    double cl_scale_uncond = 1.0;
    model::MaskPolicy mask;
    GuidanceConstants ctrl;
    int K = 2;

    void validate() const {
        if (steps < 1) throw ConfigError("sampler.steps: must be >= 1");
        if (!(w > 0)) throw ConfigError("sampler.w: must be > 0");
        if (K < 1) throw ConfigError("sampler.K: must be >= 1");
    }
};

inline double k_eff(const GuidanceConstants& c, double sink_ratio, Strategy s) {
    return s == Strategy::sink_ctrl ? c.k_base * (1.0 + c.alpha * sink_ratio) : c.k_base;
}

template <typename S>
S sign0(S x) {
    return x > S(0) ? S(1) : (x < S(0) ? S(-1) : S(0));
}

// Per-trajectory control state; E_hat_prev starts at zero.
template <typename S>
struct GuidanceState {
    Mat<S> e_hat_prev;
    GuidanceConstants c;

    GuidanceState() = default;
    GuidanceState(Eigen::Index rows, Eigen::Index cols, GuidanceConstants constants)
        : e_hat_prev(Mat<S>::Zero(rows, cols)), c(constants) {}
};

// S = E + (lambda_ctrl - 1) E_hat_prev; E_hat = E - k_eff sign(S); state <- E_hat.
// `row_k` holds k_eff per row (trajectories stacked along rows).
template <typename S>
Mat<S> rectify_rows(const Mat<S>& E, GuidanceState<S>& state, const std::vector<S>& row_k) {
    require_same_shape(E, state.e_hat_prev, "rectify");
    if (static_cast<Eigen::Index>(row_k.size()) != E.rows()) throw ShapeError("rectify: k_eff per row mismatch");
    const S lam = static_cast<S>(state.c.lambda_ctrl - 1.0);
    Mat<S> out(E.rows(), E.cols());
    for (Eigen::Index i = 0; i < E.rows(); ++i) {
        const S k = row_k[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < E.cols(); ++j) {
            const S s = E(i, j) + lam * state.e_hat_prev(i, j);
            out(i, j) = E(i, j) - k * sign0(s);
        }
    }
    state.e_hat_prev = out;
    return out;
}

template <typename S>
Mat<S> rectify(const Mat<S>& E, GuidanceState<S>& state, double sink_ratio, Strategy strategy) {
    const S k = static_cast<S>(k_eff(state.c, sink_ratio, strategy));
    return rectify_rows(E, state, std::vector<S>(static_cast<std::size_t>(E.rows()), k));
}

// Guided velocity X_uncond + w * E_hat, written as X_cond + (w - 1) E_hat + (E_hat - E)
// so that w = 1 with E_hat = E returns X_cond exactly.
template <typename S>
Mat<S> combine(const Mat<S>& x_cond, const Mat<S>& e, const Mat<S>& e_hat, double w) {
    return x_cond + static_cast<S>(w - 1.0) * e_hat + (e_hat - e);
}

// One field evaluation over stacked trajectories.
template <typename S>
struct FieldEval {
    Mat<S> cond;
    Mat<S> uncond;
    std::vector<MatD> align;  // conditional-branch records per trajectory (may be empty)
};

template <typename S>
using Field = std::function<FieldEval<S>(const Mat<S>& x, double t, int step)>;

template <typename S>
struct SampleResult {
    Mat<S> x1;
    sink::TraceStore trace;
    std::vector<MatD> final_align;  // conditional records at the last step
    std::vector<Mat<S>> e_stream, e_hat_stream;  // per step, when requested
    std::vector<std::vector<double>> sink_stream;  // per step, per trajectory
};

// Explicit Euler from t = 0 to 1 with dt = 1 / steps and guidance per step.
// `lengths` splits the stacked rows into trajectories.
template <typename S>
SampleResult<S> euler_sample(const Field<S>& field, const Mat<S>& x0, const std::vector<int>& lengths,
                             const SamplerConfig& cfg, bool keep_streams = false) {
    cfg.validate();
    std::vector<int> row_traj;
    for (std::size_t b = 0; b < lengths.size(); ++b)
        for (int i = 0; i < lengths[b]; ++i) row_traj.push_back(static_cast<int>(b));
    if (static_cast<Eigen::Index>(row_traj.size()) != x0.rows()) throw ShapeError("euler_sample: lengths do not cover X_0");

    SampleResult<S> res{x0, sink::TraceStore(cfg.K), {}, {}, {}, {}};
    GuidanceState<S> state(x0.rows(), x0.cols(), cfg.ctrl);
    const double dt = 1.0 / cfg.steps;
    for (int n = 0; n < cfg.steps; ++n) {
        const double t = static_cast<double>(n) / cfg.steps;
        auto ev = field(res.x1, t, n);
        require_same_shape(ev.cond, res.x1, "euler_sample: conditional velocity");
        require_same_shape(ev.uncond, res.x1, "euler_sample: unconditional velocity");
        std::vector<double> sr(lengths.size(), 0.0);
        if (!ev.align.empty()) {
            if (ev.align.size() != lengths.size()) throw ShapeError("euler_sample: one record per trajectory expected");
            for (std::size_t b = 0; b < lengths.size(); ++b) {
                sr[b] = sink::sink_ratio(ev.align[b], cfg.K);
                res.trace.record_value(static_cast<int>(b), n, t, sr[b]);
            }
        }
        Mat<S> e = ev.cond - ev.uncond;
        Mat<S> e_hat;
        if (cfg.strategy == Strategy::vanilla) {
            e_hat = e;
        } else {
            std::vector<S> row_k(row_traj.size());
            for (std::size_t r = 0; r < row_traj.size(); ++r)
                row_k[r] = static_cast<S>(k_eff(cfg.ctrl, sr[static_cast<std::size_t>(row_traj[r])], cfg.strategy));
            e_hat = rectify_rows(e, state, row_k);
        }
        Mat<S> v = combine(ev.cond, e, e_hat, cfg.w);
        res.x1 += static_cast<S>(dt) * v;
        if (!res.x1.allFinite()) throw SamplingError("euler_sample: non-finite state at step " + std::to_string(n));
        if (keep_streams) {
            res.e_stream.push_back(e);
            res.e_hat_stream.push_back(e_hat);
            res.sink_stream.push_back(sr);
        }
        if (n == cfg.steps - 1) res.final_align = std::move(ev.align);
    }
    return res;
}

// Field backed by a flow network: conditional and unconditional passes for
// every trajectory run as one stacked forward without gradient recording.
template <typename S>
Field<S> model_field(const model::FlowNet<S>& net, std::vector<std::vector<int>> tokens, std::vector<int> lengths,
                     const SamplerConfig& cfg) {
    return [&net, tokens = std::move(tokens), lengths = std::move(lengths), cfg](const Mat<S>& x, double t, int) {
        const int B = static_cast<int>(lengths.size());
        model::FlowBatch<S> batch;
        batch.x.resize(2 * x.rows(), x.cols());
        batch.x << x, x;
        batch.lengths = lengths;
        batch.lengths.insert(batch.lengths.end(), lengths.begin(), lengths.end());
        batch.tokens = tokens;
        batch.tokens.insert(batch.tokens.end(), tokens.begin(), tokens.end());
        batch.t.assign(static_cast<std::size_t>(2 * B), t);
        batch.null_text.assign(static_cast<std::size_t>(2 * B), 0);
        for (int b = B; b < 2 * B; ++b) batch.null_text[static_cast<std::size_t>(b)] = 1;
        batch.cl_scale_uncond = cfg.cl_scale_uncond;
        batch.mask = cfg.mask;
        Tape<S> tape(false);
        auto out = net.forward(tape, batch);
        FieldEval<S> ev;
        const auto& v = out.v.value();
        ev.cond = v.topRows(x.rows());
        ev.uncond = v.bottomRows(x.rows());
        for (int b = 0; b < static_cast<int>(out.align.size()) && b < B; ++b)
            ev.align.push_back(out.align[static_cast<std::size_t>(b)].template cast<double>());
        return ev;
    };
}

}  // namespace mlagen::sampler
