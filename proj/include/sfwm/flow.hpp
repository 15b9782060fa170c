#ifndef SFWM_FLOW_HPP
#define SFWM_FLOW_HPP

#include <functional>
#include <vector>

#include "sfwm/autoencoder.hpp"
#include "sfwm/vector_field.hpp"

namespace sfwm {

// ---- path algebra ----------------------------------------------------------

// (1-t) x0 + t w, elementwise.
inline Mat<float> interpolant(const Mat<float>& x0, const Mat<float>& w, double t) {
    if (!x0.same_shape(w)) throw NumericError("interpolant: shape mismatch");
    if (t < 0.0 || t > 1.0) throw NumericError("interpolant: t outside [0,1]");
    Mat<float> out(x0.rows, x0.cols);
    for (size_t i = 0; i < out.v.size(); ++i)
        out.v[i] = static_cast<float>((1.0 - t) * x0.v[i] + t * w.v[i]);
    return out;
}

// Time derivative of the linear path: w - x0, constant in t.
inline Mat<float> target_field(const Mat<float>& x0, const Mat<float>& w) {
    if (!x0.same_shape(w)) throw NumericError("target_field: shape mismatch");
    Mat<float> out(x0.rows, x0.cols);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = w.v[i] - x0.v[i];
    return out;
}

// MSE over the final fut rows of the predicted field; context rows carry no
// supervision target and are excluded.
inline double fm_loss(const Mat<float>& v_pred_full, const Mat<float>& u_target, int64_t ctx_len) {
    if (v_pred_full.cols != u_target.cols || v_pred_full.rows != ctx_len + u_target.rows)
        throw NumericError("fm_loss: shape mismatch");
    double acc = 0.0;
    for (int64_t i = 0; i < u_target.rows; ++i)
        for (int64_t j = 0; j < u_target.cols; ++j) {
            const double d = static_cast<double>(v_pred_full.at(ctx_len + i, j)) - u_target.at(i, j);
            acc += d * d;
        }
    return acc / static_cast<double>(u_target.size());
}

// MSE between frame-wise time differences of prediction and target over the
// supervised rows.
inline double velocity_loss(const Mat<float>& v_pred, const Mat<float>& u_target) {
    if (!v_pred.same_shape(u_target)) throw NumericError("velocity_loss: shape mismatch");
    if (v_pred.rows < 2) throw NumericError("velocity_loss: needs at least two frames");
    double acc = 0.0;
    for (int64_t i = 0; i + 1 < v_pred.rows; ++i)
        for (int64_t j = 0; j < v_pred.cols; ++j) {
            const double dv = static_cast<double>(v_pred.at(i + 1, j)) - v_pred.at(i, j);
            const double du = static_cast<double>(u_target.at(i + 1, j)) - u_target.at(i, j);
            acc += (dv - du) * (dv - du);
        }
    return acc / static_cast<double>((v_pred.rows - 1) * v_pred.cols);
}

// ---- training --------------------------------------------------------------

struct FmLossConfig {
    double lambda_fm = 1.0;
    double lambda_v = 1.0;
    double context_dropout_p = 0.5;
};

struct SamplerConfig {
    int n_steps = 10;
    uint64_t seed = 0;
};

struct LatentPair {
    Mat<float> context;  // ctx_len x d
    Mat<float> future;   // fut_len x d
};

struct FlowStepOut {
    double loss = 0.0;
    double fm = 0.0;
    double vel = 0.0;
    int64_t dropped = 0;  // samples whose context was replaced by the null token
    std::map<std::string, Mat<float>> grads;
};

// Per batch: draw (dropout coin, t, x0) per sample, build the interpolant with
// context rows prepended, run the net, and average lambda_fm*fm + lambda_v*vel.
// Context rows enter the loss only through the learned null token.
inline FlowStepOut flow_training_step(const ParamStore<float>& store, const VectorFieldConfig& cfg,
                                      const FmLossConfig& lc,
                                      const std::vector<const LatentPair*>& batch, Rng& rng,
                                      const std::string& prefix = "vf.") {
    if (batch.empty()) throw ConfigError("flow_training_step: empty batch");
    Graph<float> g;
    NetBuilder<float> nb{g, store, prefix};
    Graph<float>::Var total{-1};
    FlowStepOut out;
    double fm_acc = 0.0, vel_acc = 0.0;
    for (size_t s = 0; s < batch.size(); ++s) {
        const LatentPair& pair = *batch[s];
        const bool drop = rng.uniform() < lc.context_dropout_p;
        const double t = rng.uniform();
        Mat<float> x0 = rng.normal_mat<float>(cfg.fut_len, cfg.token_dim);
        out.dropped += drop ? 1 : 0;

        auto ctx_rows = drop ? g.repeat_rows(nb.P("null_token"), cfg.ctx_len)
                             : g.input(pair.context);
        auto cond = g.mean_rows(ctx_rows);
        auto x_t = g.input(interpolant(x0, pair.future, t));
        auto x_full = g.concat_rows(ctx_rows, x_t);
        auto v = vector_field_forward(nb, cfg, x_full, t, cond);
        auto v_fut = g.slice_rows(v, cfg.ctx_len, cfg.seq_len());
        auto u = g.input(target_field(x0, pair.future));
        auto fm = g.mean_sq(g.sub(v_fut, u));
        fm_acc += g.value(fm).v[0];
        auto sample_loss = g.scale(fm, lc.lambda_fm);
        if (lc.lambda_v != 0.0 && cfg.fut_len >= 2) {
            auto dv = g.sub(g.slice_rows(v_fut, 1, cfg.fut_len), g.slice_rows(v_fut, 0, cfg.fut_len - 1));
            auto du = g.sub(g.slice_rows(u, 1, cfg.fut_len), g.slice_rows(u, 0, cfg.fut_len - 1));
            auto vel = g.mean_sq(g.sub(dv, du));
            vel_acc += g.value(vel).v[0];
            sample_loss = g.add(sample_loss, g.scale(vel, lc.lambda_v));
        }
        total = s == 0 ? sample_loss : g.add(total, sample_loss);
    }
    total = g.scale(total, 1.0 / static_cast<double>(batch.size()));
    out.loss = g.value(total).v[0];
    out.fm = fm_acc / static_cast<double>(batch.size());
    out.vel = vel_acc / static_cast<double>(batch.size());
    if (!std::isfinite(out.loss)) throw NumericError("flow_training_step: non-finite loss");
    g.backward(total);
    out.grads = g.collect_grads();
    complete_grads(store, out.grads);
    return out;
}

// Full training loop over latent pairs.
inline std::vector<TrainLogEntry> train_world_model(ParamStore<float>& store,
                                                    const VectorFieldConfig& cfg, const FmLossConfig& lc,
                                                    const std::vector<LatentPair>& pairs,
                                                    const LrSchedule& schedule, int64_t steps,
                                                    int64_t batch, double weight_decay, uint64_t seed,
                                                    int64_t log_every = 50) {
    if (pairs.empty()) throw ConfigError("train_world_model: no training pairs");
    Rng rng(seed);
    AdamWConfig opt;
    opt.weight_decay = weight_decay;
    std::vector<TrainLogEntry> log;
    for (int64_t step = 0; step < steps; ++step) {
        std::vector<const LatentPair*> b;
        for (int64_t i = 0; i < batch; ++i)
            b.push_back(&pairs[rng.index(static_cast<uint64_t>(pairs.size()))]);
        auto res = flow_training_step(store, cfg, lc, b, rng);
        adamw_step(store, res.grads, lr_at(schedule, std::min(step, schedule.total_steps)), opt);
        if (step % log_every == 0 || step == steps - 1)
            log.push_back({step, lr_at(schedule, std::min(step, schedule.total_steps)), res.loss});
    }
    return log;
}

// ---- sampling --------------------------------------------------------------

// Explicit Euler from t=0 to t=1 on the grid {0, dt, ..., 1-dt}.
inline Mat<float> euler_integrate(const std::function<Mat<float>(const Mat<float>&, double)>& field,
                                  Mat<float> x, int n_steps) {
    if (n_steps < 1) throw ConfigError("euler_integrate: n_steps must be >= 1");
    const double dt = 1.0 / static_cast<double>(n_steps);
    for (int k = 0; k < n_steps; ++k) {
        const double t = static_cast<double>(k) * dt;
        const Mat<float> v = field(x, t);
        if (!v.same_shape(x)) throw NumericError("euler_integrate: field shape mismatch");
        for (size_t i = 0; i < x.v.size(); ++i) {
            x.v[i] = static_cast<float>(x.v[i] + dt * v.v[i]);
            if (!std::isfinite(x.v[i])) throw NumericError("euler_integrate: non-finite state");
        }
    }
    return x;
}

// Integrate the learned field with context rows held fixed; returns the
// fut_len x d future latents. A null context means the learned null token.
inline Mat<float> flow_sample(const ParamStore<float>& store, const VectorFieldConfig& cfg,
                              const Mat<float>* context, int n_steps, Rng& rng,
                              const std::string& prefix = "vf.") {
    Mat<float> ctx_rows;
    if (context) {
        if (context->rows != cfg.ctx_len || context->cols != cfg.token_dim)
            throw NumericError("flow_sample: bad context shape");
        ctx_rows = *context;
    } else {
        const Mat<float>& nt = store.at(prefix + "null_token");
        ctx_rows = Mat<float>(cfg.ctx_len, cfg.token_dim);
        for (int64_t i = 0; i < cfg.ctx_len; ++i)
            for (int64_t j = 0; j < cfg.token_dim; ++j) ctx_rows.at(i, j) = nt.v[static_cast<size_t>(j)];
    }
    Mat<float> cond(1, cfg.token_dim);
    for (int64_t i = 0; i < ctx_rows.rows; ++i)
        for (int64_t j = 0; j < cfg.token_dim; ++j)
            cond.v[static_cast<size_t>(j)] += ctx_rows.at(i, j) / static_cast<float>(ctx_rows.rows);

    Mat<float> x0 = rng.normal_mat<float>(cfg.fut_len, cfg.token_dim);
    auto field = [&](const Mat<float>& x, double t) {
        Mat<float> full = vstack(ctx_rows, x);
        Mat<float> v = vector_field_eval(store, cfg, full, t, cond, prefix);
        return take_rows(v, cfg.ctx_len, cfg.seq_len());
    };
    return euler_integrate(field, std::move(x0), n_steps);
}

inline Mat<float> flow_sample(const ParamStore<float>& store, const VectorFieldConfig& cfg,
                              const Mat<float>* context, const SamplerConfig& sc,
                              const std::string& prefix = "vf.") {
    Rng rng(sc.seed);
    return flow_sample(store, cfg, context, sc.n_steps, rng, prefix);
}

// ---- autoregressive rollout -------------------------------------------------

struct RolloutWindowInfo {
    int window = 0;
    uint64_t seed = 0;
    int n_steps = 0;
    int64_t latent_frames = 0;
};

struct RolloutResult {
    Mat<float> latents;   // (n_windows * fut_len) x d
    Mat<float> decoded;   // latents pushed through the decoder
    std::vector<RolloutWindowInfo> windows;
};

// Window i conditions on the final ctx_len latent frames of window i-1;
// window 0 uses the seed context.
inline RolloutResult flow_rollout(const ParamStore<float>& wm, const VectorFieldConfig& cfg,
                                  const ParamStore<float>& ae, const AutoencoderConfig& ae_cfg,
                                  const Mat<float>& seed_context, int n_windows,
                                  const SamplerConfig& sc) {
    if (n_windows < 1) throw ConfigError("flow_rollout: n_windows must be >= 1");
    if (cfg.fut_len < cfg.ctx_len)
        throw ConfigError("flow_rollout: window shorter than the context it must provide");
    RolloutResult res;
    Mat<float> ctx = seed_context;
    Rng rng(sc.seed);
    for (int w = 0; w < n_windows; ++w) {
        Mat<float> fut = flow_sample(wm, cfg, &ctx, sc.n_steps, rng);
        res.latents = res.latents.rows == 0 ? fut : vstack(res.latents, fut);
        ctx = take_rows(fut, cfg.fut_len - cfg.ctx_len, cfg.fut_len);
        res.windows.push_back({w, sc.seed, sc.n_steps, fut.rows});
    }
    res.decoded = ae_decode(ae, ae_cfg, res.latents);
    return res;
}

}  // namespace sfwm

#endif
