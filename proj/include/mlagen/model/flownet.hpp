#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mlagen/model/text_encoder.hpp"
#include "mlagen/sink/sink.hpp"

namespace mlagen::model {

struct FlowConfig {
    int joints = 8;
    int d_ae = 8;
    int d_flow = 128;
    int blocks = 4;
    int slots = 16;
    int heads = 4;
    int d_time = 32;
    int max_latent = 64;
    int ff_mult = 2;
    double lambda = 0.2;
    bool use_memory = true;
    bool use_align = true;
    TextEncoderConfig text;

    int latent_width() const { return joints * d_ae; }
    void validate() const;
};

inline void FlowConfig::validate() const {
    if (joints < 1 || d_ae < 1 || blocks < 1 || slots < 1 || d_time < 2 || d_time % 2)
        throw ConfigError("flow: joints, d_ae, blocks, slots must be >= 1 and d_time even");
    if (d_flow < heads || d_flow % heads) throw ConfigError("flow.d_flow must be divisible by flow.heads");
    if (max_latent < 1) throw ConfigError("flow.max_latent must be >= 1");
}

// Mask state fed to the alignment attention (threshold on t, see sink module).
struct MaskPolicy {
    bool enabled = false;
    double t_thresh = sink::kNoMask;
    int j0 = 0;
};

// Stacked batch of noisy latents. Sample b owns rows [offset_b, offset_b+L_b).
template <typename S>
struct FlowBatch {
    Mat<S> x;
    std::vector<int> lengths;
    std::vector<double> t;
    std::vector<std::vector<int>> tokens;
    std::vector<char> null_text;  // per sample: use the unconditional branch
    double cl_scale_uncond = 1.0;
    MaskPolicy mask;

    int size() const { return static_cast<int>(lengths.size()); }
};

template <typename S>
struct FlowOutput {
    Var<S> v;
    // Head-averaged L_b x N_b alignment weights per sample (empty without alignment).
    std::vector<Mat<S>> align;
    std::vector<char> masked;
    // Mean attention per slot over all rows, one 1 x S row per block.
    std::vector<Mat<S>> slot_usage;
    // Condition parts, kept for inspection.
    Var<S> c_global_rows, c_local, c_local_down, c_fused, z;
};

namespace detail {

template <typename S>
Var<S> modulate(const Var<S>& x, const Var<S>& shift, const Var<S>& scale) {
    return ops::add(ops::mul(x, ops::add_scalar(scale, S(1))), shift);
}

}  // namespace detail

// Sinusoidal timestep features, B x d (half sines, half cosines).
template <typename S>
Mat<S> timestep_features(const std::vector<double>& t, int d) {
    const int half = d / 2;
    Mat<S> out(static_cast<Eigen::Index>(t.size()), d);
    for (std::size_t b = 0; b < t.size(); ++b)
        for (int k = 0; k < half; ++k) {
            const double freq = std::exp(-std::log(10000.0) * k / half);
            const double a = 1000.0 * t[b] * freq;
            out(static_cast<Eigen::Index>(b), k) = static_cast<S>(std::sin(a));
            out(static_cast<Eigen::Index>(b), half + k) = static_cast<S>(std::cos(a));
        }
    return out;
}

// Velocity network: per-joint input encoding, timestep embedding, one local
// motion-text alignment pass that feeds the fused condition C to every block,
// and B blocks of {self attention, memory-slot attention, feed-forward}, each
// sublayer modulated per latent frame by C and the time embedding.
// Memory-slot attention with its residual: h + Attn(Q=q_in Wq, K=M Wk, V=M Wv) Wo.
// The query input is h itself or a normalized view of it.
template <typename S>
AttentionOutput<S> memory_attend(const Var<S>& h, const Var<S>& q_in, const Var<S>& slots, const Var<S>& wq,
                                 const Var<S>& wk, const Var<S>& wv, const Var<S>& wo, int heads) {
    using namespace ops;
    const int R = static_cast<int>(h.rows()), Sn = static_cast<int>(slots.rows());
    auto a = attention(matmul(q_in, wq), matmul(slots, wk), matmul(slots, wv), single_block(R, Sn), heads);
    a.output = add(h, matmul(a.output, wo));
    return a;
}

// C = repeat(C_g) + weight_r * (C_l W_down), with weight_r = lambda (times
// cl_scale on unconditional rows). `cg_rows` is C_g already repeated per row.
template <typename S>
Var<S> fuse_condition(const Var<S>& cg_rows, const Var<S>& c_local_down, const std::vector<S>& weight) {
    if (static_cast<Eigen::Index>(weight.size()) != c_local_down.rows())
        throw ShapeError("fuse_condition: one weight per row expected");
    Mat<S> factor(c_local_down.rows(), c_local_down.cols());
    for (Eigen::Index r = 0; r < factor.rows(); ++r) factor.row(r).setConstant(weight[static_cast<std::size_t>(r)]);
    return ops::add(cg_rows, ops::mul(c_local_down, cg_rows.tape->constant(std::move(factor))));
}

template <typename S>
class FlowNet {
public:
    FlowNet() = default;
    FlowNet(const FlowConfig& cfg, std::uint64_t seed) : cfg_(cfg), text_(cfg.text, "text.") {
        cfg.validate();
        Rng rng = substream(seed, "init/flow");
        init(rng);
    }

    const FlowConfig& config() const { return cfg_; }
    ParamStore<S>& params() { return store_; }
    const ParamStore<S>& params() const { return store_; }
    const TextEncoder<S>& text_encoder() const { return text_; }

    FlowOutput<S> forward(Tape<S>& tape, const FlowBatch<S>& batch) const;

private:
    void init(Rng& rng);
    Var<S> p(Tape<S>& tape, const std::string& n) const {
        return tape.param(const_cast<ParamStore<S>&>(store_), n);
    }

    FlowConfig cfg_;
    TextEncoder<S> text_;
    ParamStore<S> store_;
};

template <typename S>
void FlowNet<S>::init(Rng& rng) {
    const int D = cfg_.d_flow, Dc = cfg_.text.d_clip, J = cfg_.joints;
    text_.add_params(store_, rng);
    store_.add_dense("in.joint.w", cfg_.d_ae, D, rng);
    store_.add_zeros("in.joint.b", 1, D);
    store_.add_normal("in.joint_embed", J, D, 0.5, rng, true);
    store_.add_dense("in.proj.w", J * D, D, rng);
    store_.add_zeros("in.proj.b", 1, D);
    store_.add_normal("in.pos", cfg_.max_latent, D, 0.5, rng, true);
    store_.add_dense("time.w1", cfg_.d_time, D, rng);
    store_.add_zeros("time.b1", 1, D);
    store_.add_dense("time.w2", D, D, rng);
    store_.add_zeros("time.b2", 1, D);
    store_.add_normal("null_embed", 1, Dc, 1.0, rng, true);
    store_.add_dense("align.up", Dc, D, rng);
    store_.add_dense("align.q", D, D, rng);
    store_.add_dense("align.k", D, D, rng);
    store_.add_dense("align.v", D, D, rng);
    store_.add_dense("align.o", D, D, rng);
    store_.add_dense("align.down", D, Dc, rng);
    store_.add_normal("memory.slots", cfg_.slots, D, 1.0, rng, true);
    store_.add_dense("cond.w", Dc, D, rng);
    store_.add_zeros("cond.b", 1, D);
    const int chunks = 6;
    for (int b = 0; b < cfg_.blocks; ++b) {
        const std::string n = "block" + std::to_string(b) + ".";
        store_.add_dense(n + "mod.w", D, chunks * D, rng, 0.1);
        store_.add_zeros(n + "mod.b", 1, chunks * D);
        store_.add_dense(n + "self.qkv", D, 3 * D, rng);
        store_.add_dense(n + "self.o", D, D, rng, 0.5);
        store_.add_dense(n + "mem.q", D, D, rng);
        store_.add_dense(n + "mem.k", D, D, rng);
        store_.add_dense(n + "mem.v", D, D, rng);
        store_.add_dense(n + "mem.o", D, D, rng, 0.5);
        store_.add_dense(n + "ff1.w", D, cfg_.ff_mult * D, rng);
        store_.add_zeros(n + "ff1.b", 1, cfg_.ff_mult * D);
        store_.add_dense(n + "ff2.w", cfg_.ff_mult * D, D, rng, 0.5);
        store_.add_zeros(n + "ff2.b", 1, D);
    }
    store_.add_dense("out.mod.w", D, 2 * D, rng, 0.1);
    store_.add_zeros("out.mod.b", 1, 2 * D);
    store_.add_dense("out.w", D, cfg_.latent_width(), rng, 0.5);
    store_.add_zeros("out.b", 1, cfg_.latent_width());
}

template <typename S>
FlowOutput<S> FlowNet<S>::forward(Tape<S>& tape, const FlowBatch<S>& batch) const {
    using namespace ops;
    const int B = batch.size();
    const int D = cfg_.d_flow, J = cfg_.joints;
    if (B == 0) throw ShapeError("velocity: empty batch");
    if (static_cast<int>(batch.t.size()) != B || static_cast<int>(batch.tokens.size()) != B)
        throw ShapeError("velocity: batch field sizes disagree");
    if (batch.x.cols() != cfg_.latent_width())
        throw ShapeError("velocity: latent width " + std::to_string(batch.x.cols()) + ", expected " +
                         std::to_string(cfg_.latent_width()));
    for (double t : batch.t)
        if (!(t >= 0.0 && t <= 1.0)) throw DomainError("velocity: t=" + std::to_string(t) + " outside [0,1]");

    std::vector<std::pair<int, int>> segs;
    std::vector<int> row_sample, row_pos, joint_ids;
    int R = 0;
    for (int b = 0; b < B; ++b) {
        const int L = batch.lengths[static_cast<std::size_t>(b)];
        if (L < 1 || L > cfg_.max_latent)
            throw ShapeError("velocity: latent length " + std::to_string(L) + " outside [1, flow.max_latent]");
        segs.emplace_back(R, L);
        for (int i = 0; i < L; ++i) {
            row_sample.push_back(b);
            row_pos.push_back(i);
        }
        R += L;
    }
    if (batch.x.rows() != R) throw ShapeError("velocity: lengths do not cover the stacked rows");
    for (int r = 0; r < R; ++r)
        for (int j = 0; j < J; ++j) joint_ids.push_back(j);

    FlowOutput<S> out;
    auto x = tape.constant(batch.x);

    // Per-joint encoding; z is its mean over joints, h0 its joint-flattened projection.
    auto xj = reshape(x, static_cast<Eigen::Index>(R) * J, cfg_.d_ae);
    auto e = silu(add(linear(xj, p(tape, "in.joint.w"), p(tape, "in.joint.b")),
                      gather_rows(p(tape, "in.joint_embed"), joint_ids)));
    out.z = group_mean_rows(e, J);
    auto pos = gather_rows(p(tape, "in.pos"), row_pos);
    auto h = add(linear(reshape(e, R, static_cast<Eigen::Index>(J) * D), p(tape, "in.proj.w"), p(tape, "in.proj.b")), pos);

    auto temb = linear(silu(linear(tape.constant(timestep_features<S>(batch.t, cfg_.d_time)), p(tape, "time.w1"),
                                   p(tape, "time.b1"))),
                       p(tape, "time.w2"), p(tape, "time.b2"));
    auto temb_rows = gather_rows(temb, row_sample);

    auto text = text_.forward(tape, const_cast<ParamStore<S>&>(store_), batch.tokens);

    // Global condition per row: C_g, or the learned null embedding for unconditional samples.
    std::vector<int> cg_index;
    for (int r = 0; r < R; ++r) {
        const int b = row_sample[static_cast<std::size_t>(r)];
        cg_index.push_back(batch.null_text.empty() || !batch.null_text[static_cast<std::size_t>(b)] ? b : B);
    }
    out.c_global_rows = gather_rows(concat_rows(std::vector<Var<S>>{text.global, p(tape, "null_embed")}), cg_index);

    if (cfg_.use_align) {
        std::vector<AttnBlock> blocks;
        KeyMask<S> key_mask;
        out.masked.assign(static_cast<std::size_t>(B), 0);
        for (int b = 0; b < B; ++b) {
            const auto [tb, n] = text.segments[static_cast<std::size_t>(b)];
            if (n < 2) throw ShapeError("local_align: text needs at least two tokens");
            blocks.push_back({segs[static_cast<std::size_t>(b)].first, segs[static_cast<std::size_t>(b)].second, tb, n});
            sink::SinkConfig sc;
            sc.t_thresh = batch.mask.enabled ? batch.mask.t_thresh : sink::kNoMask;
            sc.j0 = batch.mask.j0;
            auto m = sink::mask_policy<S>(batch.t[static_cast<std::size_t>(b)], sc, n);
            out.masked[static_cast<std::size_t>(b)] = batch.mask.enabled && sink::mask_active(batch.t[static_cast<std::size_t>(b)], sc.t_thresh);
            key_mask.insert(key_mask.end(), m.begin(), m.end());
        }
        auto q = matmul(add(add(layernorm(out.z), pos), temb_rows), p(tape, "align.q"));
        auto kv = matmul(text.tokens, p(tape, "align.up"));
        auto att = attention(q, matmul(kv, p(tape, "align.k")), matmul(kv, p(tape, "align.v")), blocks, cfg_.heads,
                             key_mask);
        out.align = std::move(att.head_mean);
        out.c_local = matmul(att.output, p(tape, "align.o"));
        out.c_local_down = matmul(out.c_local, p(tape, "align.down"));
        std::vector<S> weight(static_cast<std::size_t>(R));
        for (int r = 0; r < R; ++r) {
            const int b = row_sample[static_cast<std::size_t>(r)];
            const bool uncond = !batch.null_text.empty() && batch.null_text[static_cast<std::size_t>(b)];
            weight[static_cast<std::size_t>(r)] = static_cast<S>(cfg_.lambda * (uncond ? batch.cl_scale_uncond : 1.0));
        }
        out.c_fused = fuse_condition(out.c_global_rows, out.c_local_down, weight);
    } else {
        out.c_fused = out.c_global_rows;
    }

    auto cond = silu(add(linear(out.c_fused, p(tape, "cond.w"), p(tape, "cond.b")), temb_rows));
    const auto self_att_blocks = self_blocks(segs);
    for (int blk = 0; blk < cfg_.blocks; ++blk) {
        const std::string n = "block" + std::to_string(blk) + ".";
        auto mod = linear(cond, p(tape, n + "mod.w"), p(tape, n + "mod.b"));
        auto chunk = [&](int i) { return slice_cols(mod, static_cast<Eigen::Index>(i) * D, D); };

        auto a = linear(detail::modulate(layernorm(h), chunk(0), chunk(1)), p(tape, n + "self.qkv"));
        auto sa = attention(slice_cols(a, 0, D), slice_cols(a, D, D), slice_cols(a, 2 * D, D), self_att_blocks, cfg_.heads);
        h = add(h, matmul(sa.output, p(tape, n + "self.o")));

        if (cfg_.use_memory) {
            // h_hat = h + Attn(Q=h, K=M, V=M); value/output maps carry no bias.
            auto ma = memory_attend(h, detail::modulate(layernorm(h), chunk(2), chunk(3)), p(tape, "memory.slots"),
                                    p(tape, n + "mem.q"), p(tape, n + "mem.k"), p(tape, n + "mem.v"),
                                    p(tape, n + "mem.o"), cfg_.heads);
            out.slot_usage.push_back(ma.head_mean[0].colwise().mean());
            h = ma.output;
        }

        auto f = detail::modulate(layernorm(h), chunk(4), chunk(5));
        f = linear(gelu(linear(f, p(tape, n + "ff1.w"), p(tape, n + "ff1.b"))), p(tape, n + "ff2.w"), p(tape, n + "ff2.b"));
        h = add(h, f);
    }
    auto fm = linear(cond, p(tape, "out.mod.w"), p(tape, "out.mod.b"));
    auto hf = detail::modulate(layernorm(h), slice_cols(fm, 0, D), slice_cols(fm, D, D));
    out.v = linear(hf, p(tape, "out.w"), p(tape, "out.b"));
    return out;
}

}  // namespace mlagen::model
