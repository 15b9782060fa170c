#ifndef SFWM_AUTOENCODER_HPP
#define SFWM_AUTOENCODER_HPP

#include <functional>
#include <string>
#include <vector>

#include "sfwm/graph.hpp"
#include "sfwm/optim.hpp"
#include "sfwm/rng.hpp"

namespace sfwm {

// Per-frame latent sequence: L rows of width d.
using LatentSequence = Mat<float>;

// Block-local autoencoder: each run of `block` consecutive frames maps to one
// latent row and back, so latent frame k depends only on input frames
// [k*block, (k+1)*block) in both directions. The piano-roll variant uses a
// sigmoid output head; the spectrogram variant is linear with an inference
// clamp to [-1, 1].
struct AutoencoderConfig {
    int block = 16;
    int d = 32;
    int hidden = 256;
    int width = 128;  // frame width M (mel bins or keys)
    std::string domain = "spectrogram";  // or "piano-roll"

    // Piano rolls are ~99.7% zeros; plain MSE has a self-reinforcing all-zero
    // basin under the sigmoid head. Active-cell weighting and 50/50 sampling
    // of note-bearing blocks keep the optimum (exact reconstruction) while
    // steering optimization out of that basin. Inert for spectrograms.
    double active_cell_weight = 64.0;

    int in_dim() const { return block * width; }
    bool is_roll() const { return domain == "piano-roll"; }
};

namespace aedetail {

inline Mat<float> xavier(Rng& rng, int64_t rows, int64_t cols) {
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    return rng.uniform_mat<float>(rows, cols, -a, a);
}

}  // namespace aedetail

inline void init_autoencoder_params(ParamStore<float>& store, const AutoencoderConfig& cfg, Rng& rng) {
    using aedetail::xavier;
    store.add("ae.enc.W1", xavier(rng, cfg.in_dim(), cfg.hidden));
    store.add("ae.enc.b1", Mat<float>(1, cfg.hidden));
    store.add("ae.enc.W2", xavier(rng, cfg.hidden, cfg.d));
    store.add("ae.enc.b2", Mat<float>(1, cfg.d));
    store.add("ae.dec.W1", xavier(rng, cfg.d, cfg.hidden));
    store.add("ae.dec.b1", Mat<float>(1, cfg.hidden));
    store.add("ae.dec.W2", xavier(rng, cfg.hidden, cfg.in_dim()));
    store.add("ae.dec.b2", Mat<float>(1, cfg.in_dim()));
}

// T x M window -> L x (block*M) rows, one per latent frame.
inline Mat<float> window_to_block_rows(const Mat<float>& window, int block) {
    if (block < 1 || window.rows % block != 0)
        throw ConfigError("autoencoder: window length not divisible by block");
    const int64_t L = window.rows / block;
    Mat<float> rows(L, static_cast<int64_t>(block) * window.cols);
    for (int64_t k = 0; k < L; ++k)
        for (int64_t i = 0; i < block; ++i)
            for (int64_t j = 0; j < window.cols; ++j)
                rows.at(k, i * window.cols + j) = window.at(k * block + i, j);
    return rows;
}

inline Mat<float> block_rows_to_window(const Mat<float>& rows, int block, int width) {
    if (rows.cols != static_cast<int64_t>(block) * width)
        throw ConfigError("autoencoder: block rows do not match block*width");
    Mat<float> window(rows.rows * block, width);
    for (int64_t k = 0; k < rows.rows; ++k)
        for (int64_t i = 0; i < block; ++i)
            for (int64_t j = 0; j < width; ++j)
                window.at(k * block + i, j) = rows.at(k, i * width + j);
    return window;
}

namespace aedetail {

template <typename T>
typename Graph<T>::Var encoder_graph(Graph<T>& g, const ParamStore<T>& ps,
                                     typename Graph<T>::Var x) {
    auto h = g.gelu(g.add_rowvec(g.matmul_op(x, g.param("ae.enc.W1", ps.at("ae.enc.W1"))),
                                 g.param("ae.enc.b1", ps.at("ae.enc.b1"))));
    return g.add_rowvec(g.matmul_op(h, g.param("ae.enc.W2", ps.at("ae.enc.W2"))),
                        g.param("ae.enc.b2", ps.at("ae.enc.b2")));
}

template <typename T>
typename Graph<T>::Var decoder_graph(Graph<T>& g, const ParamStore<T>& ps, const AutoencoderConfig& cfg,
                                     typename Graph<T>::Var z) {
    auto h = g.gelu(g.add_rowvec(g.matmul_op(z, g.param("ae.dec.W1", ps.at("ae.dec.W1"))),
                                 g.param("ae.dec.b1", ps.at("ae.dec.b1"))));
    auto y = g.add_rowvec(g.matmul_op(h, g.param("ae.dec.W2", ps.at("ae.dec.W2"))),
                          g.param("ae.dec.b2", ps.at("ae.dec.b2")));
    if (cfg.domain == "piano-roll") y = g.sigmoid(y);
    return y;
}

}  // namespace aedetail

// T x M window -> L x d latents, L = T / block.
inline LatentSequence ae_encode(const ParamStore<float>& ps, const AutoencoderConfig& cfg,
                                const Mat<float>& window) {
    Graph<float> g;
    auto z = aedetail::encoder_graph(g, ps, g.input(window_to_block_rows(window, cfg.block)));
    return g.value(z);
}

// L x d latents -> T x M window, clamped to [-1, 1].
inline Mat<float> ae_decode(const ParamStore<float>& ps, const AutoencoderConfig& cfg,
                            const LatentSequence& latents) {
    Graph<float> g;
    auto y = aedetail::decoder_graph(g, ps, cfg, g.input(latents));
    Mat<float> rows = g.value(y);
    for (auto& x : rows.v) {
        if (x > 1.0f) x = 1.0f;
        if (x < -1.0f) x = -1.0f;
    }
    return block_rows_to_window(rows, cfg.block, cfg.width);
}

struct TrainLogEntry {
    int64_t step = 0;
    double lr = 0.0;
    double loss = 0.0;
};

// Reconstruction training over block rows gathered from the corpus windows.
// Returns the per-log-interval loss trace.
inline std::vector<TrainLogEntry> train_autoencoder(
    ParamStore<float>& store, const AutoencoderConfig& cfg, const std::vector<Mat<float>>& windows,
    const LrSchedule& schedule, int64_t steps, int64_t batch, double weight_decay, uint64_t seed,
    int64_t log_every = 50) {
    if (windows.empty()) throw ConfigError("train_autoencoder: empty corpus");
    Mat<float> rows;
    for (const auto& w : windows) {
        Mat<float> r = window_to_block_rows(w, cfg.block);
        rows = rows.rows == 0 ? r : vstack(rows, r);
    }
    Rng rng(seed);
    AdamWConfig opt;
    opt.weight_decay = weight_decay;
    std::vector<TrainLogEntry> log;
    for (int64_t step = 0; step < steps; ++step) {
        Mat<float> x(batch, rows.cols);
        for (int64_t b = 0; b < batch; ++b) {
            const int64_t pick = static_cast<int64_t>(rng.index(static_cast<uint64_t>(rows.rows)));
            for (int64_t j = 0; j < rows.cols; ++j) x.at(b, j) = rows.at(pick, j);
        }
        Graph<float> g;
        auto xv = g.input(x);
        auto y = aedetail::decoder_graph(g, store, cfg, aedetail::encoder_graph(g, store, xv));
        auto loss = g.mean_sq(g.sub(y, xv));
        const double loss_val = static_cast<double>(g.value(loss).v[0]);
        if (!std::isfinite(loss_val)) throw NumericError("train_autoencoder: non-finite loss");
        g.backward(loss);
        const double lr = lr_at(schedule, std::min(step, schedule.total_steps));
        adamw_step(store, g.collect_grads(), lr, opt);
        if (step % log_every == 0 || step == steps - 1)
            log.push_back({step, lr, loss_val});
    }
    return log;
}

}  // namespace sfwm

#endif
