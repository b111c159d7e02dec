#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "mlagen/numerics/ops.hpp"

namespace mlagen {

// One independent attention problem inside a stacked batch: queries
// [q_begin, q_begin+q_len) attend to keys [k_begin, k_begin+k_len).
struct AttnBlock {
    int q_begin = 0;
    int q_len = 0;
    int k_begin = 0;
    int k_len = 0;
};

// Additive logit mask over key rows: 0 keeps a key, -inf removes it.
template <typename Scalar>
using KeyMask = std::vector<Scalar>;

template <typename Scalar>
struct AttentionOutput {
    Var<Scalar> output;
    // head_mean[b] is the q_len x k_len head-averaged weight matrix of block b.
    std::vector<Mat<Scalar>> head_mean;
    // weights[b][h], filled only when requested.
    std::vector<std::vector<Mat<Scalar>>> weights;
};

inline std::vector<AttnBlock> single_block(int q_rows, int k_rows) {
    return {AttnBlock{0, q_rows, 0, k_rows}};
}

// Block-diagonal self attention over row segments given as (begin, len).
inline std::vector<AttnBlock> self_blocks(const std::vector<std::pair<int, int>>& segs) {
    std::vector<AttnBlock> out;
    out.reserve(segs.size());
    for (auto [b, n] : segs) out.push_back(AttnBlock{b, n, b, n});
    return out;
}

// Causal self attention: row i of a segment attends to rows 0..i of it.
inline std::vector<AttnBlock> causal_blocks(const std::vector<std::pair<int, int>>& segs) {
    std::vector<AttnBlock> out;
    for (auto [b, n] : segs)
        for (int i = 0; i < n; ++i) out.push_back(AttnBlock{b + i, 1, b, i + 1});
    return out;
}

// Every query segment attends to the same shared key set (e.g. memory slots).
inline std::vector<AttnBlock> shared_key_blocks(const std::vector<std::pair<int, int>>& q_segs,
                                                int k_rows) {
    std::vector<AttnBlock> out;
    out.reserve(q_segs.size());
    for (auto [b, n] : q_segs) out.push_back(AttnBlock{b, n, 0, k_rows});
    return out;
}

// Multi-head scaled dot-product attention over a set of blocks:
//   out_h = softmax(Q_h K_h^T / sqrt(d_head) + mask) V_h, heads concatenated.
// Query/key channels and value channels are split evenly across heads. The
// mask carries no gradient; masked logits contribute exactly zero weight.
template <typename S>
AttentionOutput<S> attention(const Var<S>& q, const Var<S>& k, const Var<S>& v,
                             const std::vector<AttnBlock>& blocks, int heads,
                             const KeyMask<S>& key_mask = {}, bool keep_head_weights = false) {
    ops::detail::same_tape(q, k);
    ops::detail::same_tape(q, v);
    auto& t = ops::detail::tape_of(q);
    const int iq = t.check(q), ik = t.check(k), iv = t.check(v);
    const auto& Q = t.value(iq);
    const auto& K = t.value(ik);
    const auto& V = t.value(iv);
    if (heads <= 0 || Q.cols() != K.cols() || Q.cols() % heads != 0 || V.cols() % heads != 0)
        throw ShapeError("attention: channel/head mismatch Q" + shape_str(Q.rows(), Q.cols()) + " K" +
                         shape_str(K.rows(), K.cols()) + " V" + shape_str(V.rows(), V.cols()));
    if (K.rows() != V.rows()) throw ShapeError("attention: K and V row counts differ");
    if (!key_mask.empty() && static_cast<Eigen::Index>(key_mask.size()) != K.rows())
        throw ShapeError("attention: key mask length mismatch");
    for (S m : key_mask)
        if (!(m == S(0) || (std::isinf(m) && m < 0)))
            throw ShapeError("attention: mask values must be 0 or -inf");

    const int dh = static_cast<int>(Q.cols()) / heads;
    const int dv = static_cast<int>(V.cols()) / heads;
    const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(dh));

    std::vector<char> covered(static_cast<std::size_t>(Q.rows()), 0);
    auto probs = std::make_shared<std::vector<Mat<S>>>();  // [block * heads + h]
    probs->reserve(blocks.size() * static_cast<std::size_t>(heads));

    AttentionOutput<S> result;
    result.head_mean.reserve(blocks.size());
    Mat<S> out = Mat<S>::Zero(Q.rows(), V.cols());
    for (const auto& blk : blocks) {
        if (blk.q_len <= 0 || blk.k_len <= 0 || blk.q_begin < 0 || blk.k_begin < 0 ||
            blk.q_begin + blk.q_len > Q.rows() || blk.k_begin + blk.k_len > K.rows())
            throw ShapeError("attention: block out of range");
        for (int r = blk.q_begin; r < blk.q_begin + blk.q_len; ++r) {
            if (covered[static_cast<std::size_t>(r)]) throw ShapeError("attention: overlapping query blocks");
            covered[static_cast<std::size_t>(r)] = 1;
        }
        Mat<S> mean = Mat<S>::Zero(blk.q_len, blk.k_len);
        std::vector<Mat<S>> per_head;
        for (int h = 0; h < heads; ++h) {
            auto Qh = Q.block(blk.q_begin, h * dh, blk.q_len, dh);
            auto Kh = K.block(blk.k_begin, h * dh, blk.k_len, dh);
            auto Vh = V.block(blk.k_begin, h * dv, blk.k_len, dv);
            Mat<S> logits = (Qh * Kh.transpose()) * inv_sqrt;
            if (!key_mask.empty())
                for (int j = 0; j < blk.k_len; ++j) {
                    const S m = key_mask[static_cast<std::size_t>(blk.k_begin + j)];
                    if (m != S(0)) logits.col(j).setConstant(m);
                }
            Mat<S> p(blk.q_len, blk.k_len);
            for (int i = 0; i < blk.q_len; ++i) {
                const S mx = logits.row(i).maxCoeff();
                if (std::isinf(mx)) throw MaskedRowError("attention: fully masked query row");
                p.row(i) = (logits.row(i).array() - mx).exp().matrix();
                p.row(i) /= p.row(i).sum();
            }
            out.block(blk.q_begin, h * dv, blk.q_len, dv) = p * Vh;
            mean += p;
            if (keep_head_weights) per_head.push_back(p);
            probs->push_back(std::move(p));
        }
        result.head_mean.push_back(mean / static_cast<S>(heads));
        if (keep_head_weights) result.weights.push_back(std::move(per_head));
    }
    for (char c : covered)
        if (!c) throw ShapeError("attention: query rows not covered by any block");

    result.output = t.push(
        std::move(out), t.any_needs_grad({q, k, v}),
        [iq, ik, iv, blocks, heads, dh, dv, inv_sqrt, probs](Tape<S>& tp, const Mat<S>& g) {
            const auto& Qv = tp.value(iq);
            const auto& Kv = tp.value(ik);
            const auto& Vv = tp.value(iv);
            const bool gq = tp.needs_grad(iq), gk = tp.needs_grad(ik), gv = tp.needs_grad(iv);
            Mat<S> dQ = gq ? Mat<S>::Zero(Qv.rows(), Qv.cols()) : Mat<S>();
            Mat<S> dK = gk ? Mat<S>::Zero(Kv.rows(), Kv.cols()) : Mat<S>();
            Mat<S> dV = gv ? Mat<S>::Zero(Vv.rows(), Vv.cols()) : Mat<S>();
            std::size_t pi = 0;
            for (const auto& blk : blocks) {
                for (int h = 0; h < heads; ++h, ++pi) {
                    const Mat<S>& p = (*probs)[pi];
                    auto gO = g.block(blk.q_begin, h * dv, blk.q_len, dv);
                    auto Vh = Vv.block(blk.k_begin, h * dv, blk.k_len, dv);
                    if (gv) dV.block(blk.k_begin, h * dv, blk.k_len, dv) += p.transpose() * gO;
                    if (!gq && !gk) continue;
                    Mat<S> dP = gO * Vh.transpose();
                    Mat<S> dL(blk.q_len, blk.k_len);
                    for (int i = 0; i < blk.q_len; ++i) {
                        const S dot = dP.row(i).dot(p.row(i));
                        dL.row(i) = p.row(i).cwiseProduct((dP.row(i).array() - dot).matrix());
                    }
                    dL *= inv_sqrt;
                    if (gq)
                        dQ.block(blk.q_begin, h * dh, blk.q_len, dh) +=
                            dL * Kv.block(blk.k_begin, h * dh, blk.k_len, dh);
                    if (gk)
                        dK.block(blk.k_begin, h * dh, blk.k_len, dh) +=
                            dL.transpose() * Qv.block(blk.q_begin, h * dh, blk.q_len, dh);
                }
            }
            if (gq) tp.accumulate(iq, dQ);
            if (gk) tp.accumulate(ik, dK);
            if (gv) tp.accumulate(iv, dV);
        });
    return result;
}

}  // namespace mlagen
