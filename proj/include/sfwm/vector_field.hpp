#ifndef SFWM_VECTOR_FIELD_HPP
#define SFWM_VECTOR_FIELD_HPP

#include <cmath>
#include <map>
#include <string>

#include "sfwm/graph.hpp"
#include "sfwm/optim.hpp"
#include "sfwm/rng.hpp"

namespace sfwm {

// Transformer over the token axis with per-frame adaptive layer-norm
// modulation computed from a conditioning vector. Attention is the only
// cross-frame pathway; the modulation of every frame depends only on
// (flow time, conditioning features).
struct VectorFieldConfig {
    int token_dim = 32;   // d of each sequence row
    int ctx_len = 8;      // clean context rows prepended to the sequence (0 for the policy)
    int fut_len = 16;     // rows being generated
    int hidden = 128;
    int heads = 4;
    int blocks = 2;
    int cond_dim = 32;    // width of the conditioning feature vector
    int t_emb_dim = 64;

    int seq_len() const { return ctx_len + fut_len; }
};

namespace vfdetail {

inline Mat<float> xavier(Rng& rng, int64_t rows, int64_t cols) {
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    return rng.uniform_mat<float>(rows, cols, -a, a);
}

// Sinusoidal embedding of the scalar flow time.
inline Mat<float> time_embedding(double t, int dim) {
    Mat<float> e(1, dim);
    const int half = dim / 2;
    for (int k = 0; k < half; ++k) {
        const double freq = std::pow(1000.0, static_cast<double>(k) / std::max(1, half - 1));
        e.v[static_cast<size_t>(2 * k)] = static_cast<float>(std::sin(t * freq));
        e.v[static_cast<size_t>(2 * k + 1)] = static_cast<float>(std::cos(t * freq));
    }
    return e;
}

// Fixed sinusoidal position table over the sequence axis.
inline Mat<float> position_encoding(int seq_len, int hidden) {
    Mat<float> p(seq_len, hidden);
    for (int pos = 0; pos < seq_len; ++pos)
        for (int i = 0; i < hidden; i += 2) {
            const double freq = std::pow(10000.0, -static_cast<double>(i) / hidden);
            p.at(pos, i) = static_cast<float>(std::sin(pos * freq));
            if (i + 1 < hidden) p.at(pos, i + 1) = static_cast<float>(std::cos(pos * freq));
        }
    return p;
}

}  // namespace vfdetail

inline void init_vector_field_params(ParamStore<float>& store, const VectorFieldConfig& cfg, Rng& rng,
                                     const std::string& prefix = "vf.") {
    using vfdetail::xavier;
    auto add = [&](const std::string& name, Mat<float> m) { store.add(prefix + name, std::move(m)); };
    add("in.W", xavier(rng, cfg.token_dim, cfg.hidden));
    add("in.b", Mat<float>(1, cfg.hidden));
    add("cond.W1", xavier(rng, cfg.t_emb_dim + cfg.cond_dim, cfg.hidden));
    add("cond.b1", Mat<float>(1, cfg.hidden));
    add("cond.W2", xavier(rng, cfg.hidden, cfg.hidden));
    add("cond.b2", Mat<float>(1, cfg.hidden));
    for (int b = 0; b < cfg.blocks; ++b) {
        const std::string p = "blk" + std::to_string(b) + ".";
        add(p + "attn.Wq", xavier(rng, cfg.hidden, cfg.hidden));
        add(p + "attn.bq", Mat<float>(1, cfg.hidden));
        add(p + "attn.Wk", xavier(rng, cfg.hidden, cfg.hidden));
        add(p + "attn.bk", Mat<float>(1, cfg.hidden));
        add(p + "attn.Wv", xavier(rng, cfg.hidden, cfg.hidden));
        add(p + "attn.bv", Mat<float>(1, cfg.hidden));
        add(p + "attn.Wo", xavier(rng, cfg.hidden, cfg.hidden));
        add(p + "attn.bo", Mat<float>(1, cfg.hidden));
        add(p + "mlp.W1", xavier(rng, cfg.hidden, 4 * cfg.hidden));
        add(p + "mlp.b1", Mat<float>(1, 4 * cfg.hidden));
        add(p + "mlp.W2", xavier(rng, 4 * cfg.hidden, cfg.hidden));
        add(p + "mlp.b2", Mat<float>(1, cfg.hidden));
        // shift1 | scale1 | gate1 | shift2 | scale2 | gate2
        add(p + "mod.W", xavier(rng, cfg.hidden, 6 * cfg.hidden));
        add(p + "mod.b", Mat<float>(1, 6 * cfg.hidden));
    }
    add("final.mod.W", xavier(rng, cfg.hidden, 2 * cfg.hidden));
    add("final.mod.b", Mat<float>(1, 2 * cfg.hidden));
    add("out.W", xavier(rng, cfg.hidden, cfg.token_dim));
    add("out.b", Mat<float>(1, cfg.token_dim));
    if (cfg.ctx_len > 0) add("null_token", rng.normal_mat<float>(1, cfg.token_dim, 0.02));
}

// Shares one graph's parameter nodes across repeated uses.
template <typename T>
struct NetBuilder {
    Graph<T>& g;
    const ParamStore<T>& store;
    std::string prefix = "vf.";
    std::map<std::string, typename Graph<T>::Var> cache;

    typename Graph<T>::Var P(const std::string& name) {
        auto it = cache.find(name);
        if (it != cache.end()) return it->second;
        auto v = g.param(prefix + name, store.at(prefix + name));
        cache.emplace(name, v);
        return v;
    }
};

// Full forward pass: x_tokens is the (ctx_len + fut_len) x token_dim sequence,
// cond_feat the 1 x cond_dim conditioning row. Output has the input shape.
template <typename T>
typename Graph<T>::Var vector_field_forward(NetBuilder<T>& nb, const VectorFieldConfig& cfg,
                                            typename Graph<T>::Var x_tokens, double t,
                                            typename Graph<T>::Var cond_feat) {
    Graph<T>& g = nb.g;
    if (g.rows(x_tokens) != cfg.seq_len() || g.cols(x_tokens) != cfg.token_dim)
        throw NumericError("vector field: bad token shape");
    if (g.rows(cond_feat) != 1 || g.cols(cond_feat) != cfg.cond_dim)
        throw NumericError("vector field: bad condition shape");

    Mat<float> temb_f = vfdetail::time_embedding(t, cfg.t_emb_dim);
    Mat<T> temb(1, cfg.t_emb_dim);
    for (size_t i = 0; i < temb.v.size(); ++i) temb.v[i] = static_cast<T>(temb_f.v[i]);
    auto cond_in = g.concat_cols(g.input(temb), cond_feat);
    auto c = g.add_rowvec(g.matmul_op(g.silu(g.add_rowvec(g.matmul_op(cond_in, nb.P("cond.W1")),
                                                          nb.P("cond.b1"))),
                                      nb.P("cond.W2")),
                          nb.P("cond.b2"));
    auto c_act = g.silu(c);

    Mat<float> pos_f = vfdetail::position_encoding(cfg.seq_len(), cfg.hidden);
    Mat<T> pos(pos_f.rows, pos_f.cols);
    for (size_t i = 0; i < pos.v.size(); ++i) pos.v[i] = static_cast<T>(pos_f.v[i]);

    auto h = g.add(g.add_rowvec(g.matmul_op(x_tokens, nb.P("in.W")), nb.P("in.b")), g.input(pos));

    const int dh = cfg.hidden / cfg.heads;
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int b = 0; b < cfg.blocks; ++b) {
        const std::string p = "blk" + std::to_string(b) + ".";
        auto mod = g.add_rowvec(g.matmul_op(c_act, nb.P(p + "mod.W")), nb.P(p + "mod.b"));
        auto shift1 = g.slice_cols(mod, 0, cfg.hidden);
        auto scale1 = g.slice_cols(mod, cfg.hidden, 2 * cfg.hidden);
        auto gate1 = g.slice_cols(mod, 2 * cfg.hidden, 3 * cfg.hidden);
        auto shift2 = g.slice_cols(mod, 3 * cfg.hidden, 4 * cfg.hidden);
        auto scale2 = g.slice_cols(mod, 4 * cfg.hidden, 5 * cfg.hidden);
        auto gate2 = g.slice_cols(mod, 5 * cfg.hidden, 6 * cfg.hidden);

        auto a_in = g.add_rowvec(g.mul_rowvec(g.layer_norm(h), g.add_const(scale1, 1.0)), shift1);
        auto q = g.add_rowvec(g.matmul_op(a_in, nb.P(p + "attn.Wq")), nb.P(p + "attn.bq"));
        auto k = g.add_rowvec(g.matmul_op(a_in, nb.P(p + "attn.Wk")), nb.P(p + "attn.bk"));
        auto v = g.add_rowvec(g.matmul_op(a_in, nb.P(p + "attn.Wv")), nb.P(p + "attn.bv"));
        typename Graph<T>::Var heads_out{-1};
        for (int hd = 0; hd < cfg.heads; ++hd) {
            auto qh = g.slice_cols(q, hd * dh, (hd + 1) * dh);
            auto kh = g.slice_cols(k, hd * dh, (hd + 1) * dh);
            auto vh = g.slice_cols(v, hd * dh, (hd + 1) * dh);
            auto att = g.softmax(g.scale(g.matmul_op(qh, g.transpose_op(kh)), att_scale));
            auto oh = g.matmul_op(att, vh);
            heads_out = hd == 0 ? oh : g.concat_cols(heads_out, oh);
        }
        auto attn = g.add_rowvec(g.matmul_op(heads_out, nb.P(p + "attn.Wo")), nb.P(p + "attn.bo"));
        h = g.add(h, g.mul_rowvec(attn, gate1));

        auto m_in = g.add_rowvec(g.mul_rowvec(g.layer_norm(h), g.add_const(scale2, 1.0)), shift2);
        auto m = g.add_rowvec(
            g.matmul_op(g.gelu(g.add_rowvec(g.matmul_op(m_in, nb.P(p + "mlp.W1")), nb.P(p + "mlp.b1"))),
                        nb.P(p + "mlp.W2")),
            nb.P(p + "mlp.b2"));
        h = g.add(h, g.mul_rowvec(m, gate2));
    }

    auto fmod = g.add_rowvec(g.matmul_op(c_act, nb.P("final.mod.W")), nb.P("final.mod.b"));
    auto fshift = g.slice_cols(fmod, 0, cfg.hidden);
    auto fscale = g.slice_cols(fmod, cfg.hidden, 2 * cfg.hidden);
    auto out_in = g.add_rowvec(g.mul_rowvec(g.layer_norm(h), g.add_const(fscale, 1.0)), fshift);
    return g.add_rowvec(g.matmul_op(out_in, nb.P("out.W")), nb.P("out.b"));
}

// Plain (non-training) evaluation of the field for a given token matrix.
inline Mat<float> vector_field_eval(const ParamStore<float>& store, const VectorFieldConfig& cfg,
                                    const Mat<float>& x_tokens, double t, const Mat<float>& cond_feat,
                                    const std::string& prefix = "vf.") {
    Graph<float> g;
    NetBuilder<float> nb{g, store, prefix};
    auto out = vector_field_forward(nb, cfg, g.input(x_tokens), t, g.input(cond_feat));
    return g.value(out);
}

}  // namespace sfwm

#endif
