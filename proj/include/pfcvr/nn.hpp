#pragma once

#include <string>
#include <vector>

#include "pfcvr/autograd.hpp"
#include "pfcvr/rng.hpp"

namespace pfcvr::nn {

using ag::Tape;
using ag::Var;

constexpr double kInitStd = 0.02;

struct Linear {
    Param w;  // in x out
    Param b;  // 1 x out
    bool has_bias = true;

    Linear() = default;
    Linear(const std::string& name, int in, int out, Rng& rng, int group,
           bool bias = true, double init_std = kInitStd)
        : w(name + ".w", random_normal_mat(rng, in, out, init_std), group),
          b(name + ".b", Mat(1, out), group), has_bias(bias) {}

    Var operator()(Tape& t, Var x) {
        Var y = ag::matmul(x, t.param(w));
        if (has_bias) y = ag::add_row(y, t.param(b));
        return y;
    }

    void collect(std::vector<Param*>& out) {
        out.push_back(&w);
        if (has_bias) out.push_back(&b);
    }
};

struct LayerNorm {
    Param gain;  // 1 x d
    Param bias;  // 1 x d

    LayerNorm() = default;
    LayerNorm(const std::string& name, int d, int group)
        : gain(name + ".g", Mat::full(1, d, 1.0), group), bias(name + ".b", Mat(1, d), group) {}

    Var operator()(Tape& t, Var x) {
        return ag::add_row(ag::mul_row(ag::layernorm(x), t.param(gain)), t.param(bias));
    }

    void collect(std::vector<Param*>& out) {
        out.push_back(&gain);
        out.push_back(&bias);
    }
};

// Multi-head attention over full sequences; self-attention when q_in == kv_in.
// No attention masking: all encoders and decoders here are bidirectional.
struct MultiHeadAttention {
    Linear wq, wk, wv, wo;
    int heads = 1;
    int dim = 0;

    MultiHeadAttention() = default;
    MultiHeadAttention(const std::string& name, int d, int num_heads, Rng& rng, int group)
        : wq(name + ".wq", d, d, rng, group),
          wk(name + ".wk", d, d, rng, group),
          wv(name + ".wv", d, d, rng, group),
          wo(name + ".wo", d, d, rng, group),
          heads(num_heads), dim(d) {
        check(d % num_heads == 0, "MultiHeadAttention: dim not divisible by heads");
    }

    Var operator()(Tape& t, Var q_in, Var kv_in) {
        Var q = wq(t, q_in), k = wk(t, kv_in), v = wv(t, kv_in);
        const int dh = dim / heads;
        const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
        std::vector<Var> outs;
        outs.reserve(heads);
        for (int h = 0; h < heads; ++h) {
            Var qh = ag::slice_cols(q, h * dh, (h + 1) * dh);
            Var kh = ag::slice_cols(k, h * dh, (h + 1) * dh);
            Var vh = ag::slice_cols(v, h * dh, (h + 1) * dh);
            Var attn = ag::row_softmax(ag::scale(ag::matmul_nt(qh, kh), inv_sqrt_dh));
            outs.push_back(ag::matmul(attn, vh));
        }
        return wo(t, ag::concat_cols(outs));
    }

    void collect(std::vector<Param*>& out) {
        wq.collect(out);
        wk.collect(out);
        wv.collect(out);
        wo.collect(out);
    }
};

struct FeedForward {
    Linear fc1, fc2;

    FeedForward() = default;
    FeedForward(const std::string& name, int d, int hidden, Rng& rng, int group)
        : fc1(name + ".fc1", d, hidden, rng, group), fc2(name + ".fc2", hidden, d, rng, group) {}

    Var operator()(Tape& t, Var x) { return fc2(t, ag::gelu(fc1(t, x))); }

    void collect(std::vector<Param*>& out) {
        fc1.collect(out);
        fc2.collect(out);
    }
};

// Pre-norm transformer encoder block: x += MSA(LN(x)); x += FFN(LN(x)).
struct EncoderBlock {
    LayerNorm ln1, ln2;
    MultiHeadAttention attn;
    FeedForward ffn;

    EncoderBlock() = default;
    EncoderBlock(const std::string& name, int d, int heads, int ffn_hidden, Rng& rng, int group)
        : ln1(name + ".ln1", d, group), ln2(name + ".ln2", d, group),
          attn(name + ".attn", d, heads, rng, group),
          ffn(name + ".ffn", d, ffn_hidden, rng, group) {}

    Var operator()(Tape& t, Var x) {
        Var h = ln1(t, x);
        x = ag::add(x, attn(t, h, h));
        x = ag::add(x, ffn(t, ln2(t, x)));
        return x;
    }

    void collect(std::vector<Param*>& out) {
        ln1.collect(out);
        ln2.collect(out);
        attn.collect(out);
        ffn.collect(out);
    }
};

// Cross-modal decoder block: cross-attention into the guiding sequence, then
// feed-forward, then self-attention, each as a pre-norm residual sub-block.
struct CrossDecoderBlock {
    LayerNorm ln_q, ln_ffn, ln_sa;
    MultiHeadAttention mca, msa;
    FeedForward ffn;

    CrossDecoderBlock() = default;
    CrossDecoderBlock(const std::string& name, int d, int heads, int ffn_hidden, Rng& rng,
                      int group)
        : ln_q(name + ".ln_q", d, group), ln_ffn(name + ".ln_ffn", d, group),
          ln_sa(name + ".ln_sa", d, group),
          mca(name + ".mca", d, heads, rng, group),
          msa(name + ".msa", d, heads, rng, group),
          ffn(name + ".ffn", d, ffn_hidden, rng, group) {}

    Var operator()(Tape& t, Var x, Var guide) {
        x = ag::add(x, mca(t, ln_q(t, x), guide));
        x = ag::add(x, ffn(t, ln_ffn(t, x)));
        Var h = ln_sa(t, x);
        x = ag::add(x, msa(t, h, h));
        return x;
    }

    void collect(std::vector<Param*>& out) {
        ln_q.collect(out);
        ln_ffn.collect(out);
        ln_sa.collect(out);
        mca.collect(out);
        msa.collect(out);
        ffn.collect(out);
    }
};

}  // namespace pfcvr::nn
