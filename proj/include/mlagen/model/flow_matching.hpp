#pragma once

#include <functional>
#include <numeric>
#include <vector>

#include "mlagen/model/flownet.hpp"

namespace mlagen::model {

// One training pair: data latent X_1 (L x J*d_ae) and its token ids.
template <typename S>
struct FlowItem {
    Mat<S> x1;
    std::vector<int> tokens;
};

// Randomness of one fm_loss evaluation, drawn up front so the loss is a
// deterministic function of the parameters.
template <typename S>
struct FmNoise {
    std::vector<double> t;
    std::vector<Mat<S>> x0;
    std::vector<char> drop;
};

template <typename S>
Mat<S> standard_normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    Mat<S> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(standard_normal(rng));
    return m;
}

// t ~ U(0,1) and X_0 ~ N(0, I) from `noise`; condition dropout from `dropout`.
template <typename S>
FmNoise<S> draw_noise(const std::vector<const FlowItem<S>*>& items, Rng& noise, Rng& dropout, double p_drop) {
    FmNoise<S> n;
    for (const auto* it : items) {
        n.t.push_back(uniform01(noise));
        n.x0.push_back(standard_normal_matrix<S>(it->x1.rows(), it->x1.cols(), noise));
        n.drop.push_back(uniform01(dropout) < p_drop ? 1 : 0);
    }
    return n;
}

// X_t = (1 - t) X_0 + t X_1.
template <typename S>
Mat<S> interpolate(const Mat<S>& x0, const Mat<S>& x1, double t) {
    return (S(1) - static_cast<S>(t)) * x0 + static_cast<S>(t) * x1;
}

template <typename S>
struct FmLossResult {
    Var<S> loss;
    FlowOutput<S> forward;
};

// mean || v(X_t, t, y) - (X_1 - X_0) ||^2 over every element of the batch.
template <typename S>
FmLossResult<S> fm_loss(const FlowNet<S>& net, Tape<S>& tape, const std::vector<const FlowItem<S>*>& items,
                        const FmNoise<S>& noise, const MaskPolicy& mask) {
    if (items.empty()) throw ConfigError("fm_loss: empty batch");
    FlowBatch<S> batch;
    Eigen::Index rows = 0;
    for (const auto* it : items) rows += it->x1.rows();
    const auto W = items[0]->x1.cols();
    batch.x.resize(rows, W);
    Mat<S> target(rows, W);
    rows = 0;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& x1 = items[i]->x1;
        if (x1.cols() != W) throw ShapeError("fm_loss: latent widths differ within a batch");
        batch.x.middleRows(rows, x1.rows()) = interpolate<S>(noise.x0[i], x1, noise.t[i]);
        target.middleRows(rows, x1.rows()) = x1 - noise.x0[i];
        rows += x1.rows();
        batch.lengths.push_back(static_cast<int>(x1.rows()));
        batch.tokens.push_back(items[i]->tokens);
    }
    batch.t = noise.t;
    batch.null_text = noise.drop;
    batch.cl_scale_uncond = 1.0;
    batch.mask = mask;
    FmLossResult<S> r;
    r.forward = net.forward(tape, batch);
    r.loss = ops::mse(r.forward.v, tape.constant(std::move(target)));
    return r;
}

struct FlowTrainConfig {
    int epochs = 50;
    int batch_size = 64;
    double lr = 2e-4;
    double weight_decay = 0.1;
    double p_drop = 0.1;
    double grad_clip = 1.0;
    int warmup_steps = 0;
    MaskPolicy mask;
    std::uint64_t seed = 0;
};

struct FlowTrainReport {
    std::vector<double> epoch_loss;
    std::int64_t steps = 0;
};

// Shuffled minibatch AdamW; `on_epoch(epoch, mean_loss)` is called after each epoch.
template <typename S>
FlowTrainReport train_flow(FlowNet<S>& net, const std::vector<FlowItem<S>>& data, const FlowTrainConfig& cfg,
                           const std::function<void(int, double)>& on_epoch = {}) {
    if (data.empty()) throw DataError("train_flow: empty training set");
    if (cfg.epochs < 1 || cfg.batch_size < 1) throw ConfigError("flow.train: epochs and batch_size must be >= 1");
    AdamWConfig opt;
    opt.weight_decay = cfg.weight_decay;
    Rng shuffle = substream(cfg.seed, "shuffle/flow");
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    FlowTrainReport report;
    auto& store = net.params();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle() % i)]);
        double total = 0;
        int batches = 0;
        for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
            std::vector<const FlowItem<S>*> items;
            for (std::size_t k = b; k < e; ++k) items.push_back(&data[order[k]]);
            const auto step = static_cast<std::uint64_t>(store.step());
            Rng noise = substream(cfg.seed, "noise", step);
            Rng dropout = substream(cfg.seed, "dropout", step);
            auto n = draw_noise(items, noise, dropout, cfg.p_drop);
            store.zero_grad();
            Tape<S> tape;
            auto r = fm_loss(net, tape, items, n, cfg.mask);
            const double lv = static_cast<double>(r.loss.value()(0, 0));
            if (!std::isfinite(lv))
                throw TrainingError("train_flow: loss diverged at step " + std::to_string(step));
            tape.backward(r.loss);
            store.clip_grad_norm(cfg.grad_clip);
            opt.lr = cfg.lr;
            if (cfg.warmup_steps > 0 && store.step() < cfg.warmup_steps)
                opt.lr = cfg.lr * static_cast<double>(store.step() + 1) / cfg.warmup_steps;
            adamw_step(store, opt);
            total += lv;
            ++batches;
        }
        report.epoch_loss.push_back(total / batches);
        if (on_epoch) on_epoch(epoch, report.epoch_loss.back());
    }
    report.steps = store.step();
    return report;
}

}  // namespace mlagen::model
