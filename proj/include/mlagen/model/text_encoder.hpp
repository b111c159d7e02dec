#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mlagen/numerics/attention.hpp"
#include "mlagen/numerics/param_store.hpp"

namespace mlagen::model {

struct TextEncoderConfig {
    int vocab = 17;
    int d_clip = 32;
    int max_tokens = 16;
    int heads = 4;
    bool causal = true;  // token i attends to tokens 0..i, as in CLIP's text transformer
    int context = 0;     // > 0: pad every sequence to this many rows with a learned pad token
};

template <typename S>
struct TextFeatures {
    Var<S> tokens;  // stacked N_b x d_clip rows, one segment per sample
    Var<S> global;  // B x d_clip
    std::vector<std::pair<int, int>> segments;  // (first row, N_b)
};

// Token embedding + learned positions, one pre-norm self-attention block with
// a feed-forward sublayer, and learned attention pooling for the global feature.
template <typename S>
class TextEncoder {
public:
    TextEncoder() = default;
    TextEncoder(TextEncoderConfig cfg, std::string prefix) : cfg_(cfg), prefix_(std::move(prefix)) {
        if (cfg.d_clip % cfg.heads != 0) throw ConfigError("text.d_clip must be divisible by text.heads");
        if (cfg.vocab < 2 || cfg.max_tokens < 2) throw ConfigError("text: vocab and max_tokens must be >= 2");
        if (cfg.context < 0 || cfg.context > cfg.max_tokens)
            throw ConfigError("text.context must lie in [0, text.max_tokens]");
    }

    const TextEncoderConfig& config() const { return cfg_; }
    const std::string& prefix() const { return prefix_; }
    // Rows per sample after padding.
    int rows_for(int n_tokens) const { return cfg_.context > 0 ? cfg_.context : n_tokens; }

    void add_params(ParamStore<S>& store, Rng& rng) const {
        const int D = cfg_.d_clip;
        store.add_normal(name("embed"), cfg_.vocab + (cfg_.context > 0 ? 1 : 0), D, 1.0, rng, true);
        store.add_normal(name("pos"), cfg_.max_tokens, D, 0.5, rng, true);
        store.add_constant(name("ln1.g"), 1, D, S(1));
        store.add_zeros(name("ln1.b"), 1, D);
        store.add_dense(name("attn.qkv"), D, 3 * D, rng);
        store.add_dense(name("attn.o"), D, D, rng);
        store.add_constant(name("ln2.g"), 1, D, S(1));
        store.add_zeros(name("ln2.b"), 1, D);
        store.add_dense(name("ff1.w"), D, 2 * D, rng);
        store.add_zeros(name("ff1.b"), 1, 2 * D);
        store.add_dense(name("ff2.w"), 2 * D, D, rng);
        store.add_zeros(name("ff2.b"), 1, D);
        store.add_constant(name("lnf.g"), 1, D, S(1));
        store.add_zeros(name("lnf.b"), 1, D);
        store.add_normal(name("pool.q"), 1, D, 1.0, rng, true);
        store.add_dense(name("pool.k"), D, D, rng);
    }

    TextFeatures<S> forward(Tape<S>& tape, ParamStore<S>& store, const std::vector<std::vector<int>>& texts) const {
        using namespace ops;
        if (texts.empty()) throw ShapeError("encode_text: empty batch");
        std::vector<int> ids, pos, zeros;
        TextFeatures<S> out;
        for (const auto& tk : texts) {
            if (tk.empty()) throw TokenizationError("encode_text: empty token sequence");
            if (static_cast<int>(tk.size()) > cfg_.max_tokens)
                throw TokenizationError("encode_text: " + std::to_string(tk.size()) + " tokens exceed text.max_tokens=" +
                                        std::to_string(cfg_.max_tokens));
            const int n = rows_for(static_cast<int>(tk.size()));
            out.segments.emplace_back(static_cast<int>(ids.size()), n);
            for (int i = 0; i < n; ++i) {
                const int id = i < static_cast<int>(tk.size()) ? tk[static_cast<std::size_t>(i)] : cfg_.vocab;
                if (i < static_cast<int>(tk.size()) && (id < 0 || id >= cfg_.vocab))
                    throw TokenizationError("encode_text: token id " + std::to_string(id) + " out of vocabulary");
                ids.push_back(id);
                pos.push_back(i);
            }
            zeros.push_back(0);
        }
        auto p = [&](const char* n) { return tape.param(store, name(n)); };
        const int D = cfg_.d_clip;
        auto x = add(gather_rows(p("embed"), ids), gather_rows(p("pos"), pos));
        auto a = linear(layernorm(x, p("ln1.g"), p("ln1.b")), p("attn.qkv"));
        auto att = attention(slice_cols(a, 0, D), slice_cols(a, D, D), slice_cols(a, 2 * D, D),
                             cfg_.causal ? causal_blocks(out.segments) : self_blocks(out.segments), cfg_.heads);
        x = add(x, matmul(att.output, p("attn.o")));
        auto f = layernorm(x, p("ln2.g"), p("ln2.b"));
        f = linear(gelu(linear(f, p("ff1.w"), p("ff1.b"))), p("ff2.w"), p("ff2.b"));
        x = add(x, f);
        out.tokens = layernorm(x, p("lnf.g"), p("lnf.b"));

        std::vector<AttnBlock> pool_blocks;
        for (std::size_t b = 0; b < out.segments.size(); ++b)
            pool_blocks.push_back({static_cast<int>(b), 1, out.segments[b].first, out.segments[b].second});
        auto q = gather_rows(p("pool.q"), zeros);
        out.global = attention(q, matmul(out.tokens, p("pool.k")), out.tokens, pool_blocks, 1).output;
        return out;
    }

private:
    std::string name(const char* n) const { return prefix_ + n; }

    TextEncoderConfig cfg_;
    std::string prefix_ = "text.";
};

}  // namespace mlagen::model
