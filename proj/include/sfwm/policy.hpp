#ifndef SFWM_POLICY_HPP
#define SFWM_POLICY_HPP

#include <vector>

#include "sfwm/flow.hpp"
#include "sfwm/pianoroll.hpp"

namespace sfwm {

// ---- observations -----------------------------------------------------------

struct ObservationConfig {
    int64_t cur_t = 128, cur_f = 128;   // current window geometry
    int64_t fut_t = 256, fut_f = 128;   // predicted window geometry
    int64_t tile_t = 8, tile_f = 8;     // mean-pool tile size
    int64_t state_dim = 1;

    int64_t cur_dim() const { return (cur_t / tile_t) * (cur_f / tile_f); }
    int64_t fut_dim() const { return (fut_t / tile_t) * (fut_f / tile_f); }
    int64_t obs_dim() const { return cur_dim() + fut_dim() + state_dim; }
};

namespace policydetail {

inline void pool_into(const Mat<float>& win, int64_t tile_t, int64_t tile_f, float* out) {
    const int64_t nt = win.rows / tile_t, nf = win.cols / tile_f;
    for (int64_t a = 0; a < nt; ++a)
        for (int64_t b = 0; b < nf; ++b) {
            double acc = 0.0;
            for (int64_t i = 0; i < tile_t; ++i)
                for (int64_t j = 0; j < tile_f; ++j) acc += win.at(a * tile_t + i, b * tile_f + j);
            out[a * nf + b] = static_cast<float>(acc / static_cast<double>(tile_t * tile_f));
        }
}

}  // namespace policydetail

// Mean-pool the current and predicted windows over a fixed tile grid and
// append the simulator state features. In baseline mode (or with no predicted
// window) the predicted block is identically zero.
inline Mat<float> build_observation(const ObservationConfig& oc, const Mat<float>& current,
                                    const Mat<float>* predicted, const std::vector<float>& state,
                                    bool baseline_mode) {
    if (current.rows != oc.cur_t || current.cols != oc.cur_f)
        throw NumericError("build_observation: bad current window shape");
    if (static_cast<int64_t>(state.size()) != oc.state_dim)
        throw NumericError("build_observation: bad state width");
    Mat<float> obs(1, oc.obs_dim());
    policydetail::pool_into(current, oc.tile_t, oc.tile_f, obs.v.data());
    if (!baseline_mode && predicted) {
        if (predicted->rows != oc.fut_t || predicted->cols != oc.fut_f)
            throw NumericError("build_observation: bad predicted window shape");
        policydetail::pool_into(*predicted, oc.tile_t, oc.tile_f, obs.v.data() + oc.cur_dim());
    }
    for (int64_t i = 0; i < oc.state_dim; ++i)
        obs.v[static_cast<size_t>(oc.cur_dim() + oc.fut_dim() + i)] = state[static_cast<size_t>(i)];
    if (!all_finite(obs)) throw NumericError("build_observation: non-finite feature");
    return obs;
}

// ---- flow-matching action-chunk policy ---------------------------------------

struct ChunkPolicyConfig {
    VectorFieldConfig vf;     // ctx_len = 0, fut_len = chunk, token_dim = action dim
    bool baseline_mode = false;
    double action_bound = 1.0;

    static ChunkPolicyConfig make(int chunk, int action_dim, int64_t obs_dim, bool baseline,
                                  int hidden = 128, int heads = 4, int blocks = 2) {
        ChunkPolicyConfig c;
        c.vf.token_dim = action_dim;
        c.vf.ctx_len = 0;
        c.vf.fut_len = chunk;
        c.vf.hidden = hidden;
        c.vf.heads = heads;
        c.vf.blocks = blocks;
        c.vf.cond_dim = static_cast<int>(obs_dim);
        c.baseline_mode = baseline;
        return c;
    }
};

struct Demo {
    Mat<float> obs;    // 1 x obs_dim
    Mat<float> chunk;  // chunk x action_dim
};

// Flow matching over action chunks: the chunk is the generated sequence, the
// observation is the condition, and there is no velocity term.
inline std::vector<TrainLogEntry> train_chunk_policy(ParamStore<float>& store,
                                                     const ChunkPolicyConfig& cfg,
                                                     const std::vector<Demo>& demos,
                                                     const LrSchedule& schedule, int64_t steps,
                                                     int64_t batch, double weight_decay, uint64_t seed,
                                                     int64_t log_every = 50) {
    if (demos.empty()) throw ConfigError("train_chunk_policy: no demonstrations");
    Rng rng(seed);
    AdamWConfig opt;
    opt.weight_decay = weight_decay;
    std::vector<TrainLogEntry> log;
    for (int64_t step = 0; step < steps; ++step) {
        Graph<float> g;
        NetBuilder<float> nb{g, store, "vf."};
        Graph<float>::Var total{-1};
        for (int64_t b = 0; b < batch; ++b) {
            const Demo& d = demos[rng.index(static_cast<uint64_t>(demos.size()))];
            const double t = rng.uniform();
            Mat<float> x0 = rng.normal_mat<float>(cfg.vf.fut_len, cfg.vf.token_dim);
            auto x_t = g.input(interpolant(x0, d.chunk, t));
            auto v = vector_field_forward(nb, cfg.vf, x_t, t, g.input(d.obs));
            auto fm = g.mean_sq(g.sub(v, g.input(target_field(x0, d.chunk))));
            total = b == 0 ? fm : g.add(total, fm);
        }
        total = g.scale(total, 1.0 / static_cast<double>(batch));
        const double loss = g.value(total).v[0];
        if (!std::isfinite(loss)) throw NumericError("train_chunk_policy: non-finite loss");
        g.backward(total);
        adamw_step(store, g.collect_grads(), lr_at(schedule, std::min(step, schedule.total_steps)), opt);
        if (step % log_every == 0 || step == steps - 1)
            log.push_back({step, lr_at(schedule, std::min(step, schedule.total_steps)), loss});
    }
    return log;
}

// Euler-sampled action chunk, clamped to the action bounds. A policy trained
// in baseline mode ignores the predicted block of the observation by
// construction (the block is zeroed before conditioning).
inline Mat<float> policy_act(const ParamStore<float>& store, const ChunkPolicyConfig& cfg,
                             const ObservationConfig& oc, Mat<float> obs, const SamplerConfig& sc) {
    if (obs.cols != cfg.vf.cond_dim) throw DependencyError("policy_act: observation width mismatch");
    if (cfg.baseline_mode)
        for (int64_t i = oc.cur_dim(); i < oc.cur_dim() + oc.fut_dim(); ++i)
            obs.v[static_cast<size_t>(i)] = 0.0f;
    Rng rng(sc.seed);
    Mat<float> x0 = rng.normal_mat<float>(cfg.vf.fut_len, cfg.vf.token_dim);
    auto field = [&](const Mat<float>& x, double t) {
        return vector_field_eval(store, cfg.vf, x, t, obs);
    };
    Mat<float> chunk = euler_integrate(field, std::move(x0), sc.n_steps);
    for (auto& a : chunk.v) {
        if (a > cfg.action_bound) a = static_cast<float>(cfg.action_bound);
        if (a < -cfg.action_bound) a = static_cast<float>(-cfg.action_bound);
    }
    return chunk;
}

// ---- receding-horizon piano controller ---------------------------------------

struct KeyCommand {
    double target_position = 0.0;
    std::vector<bool> press_mask = std::vector<bool>(kKeys, false);
};

// Move toward the centroid of the earliest upcoming nonzero goal row (capped
// at max_speed per step) and press the keys of the current goal row that lie
// within reach. With H = 1 this is purely reactive.
inline KeyCommand piano_controller(const GoalStack& goals, double hand_position, double max_speed,
                                   double reach) {
    KeyCommand cmd;
    cmd.target_position = hand_position;
    for (int h = 0; h < goals.rows.rows; ++h) {
        double centroid = 0.0;
        int count = 0;
        for (int k = 0; k < kKeys; ++k)
            if (goals.rows.at(h, k) > 0.5f) {
                centroid += k;
                ++count;
            }
        if (count > 0) {
            centroid /= count;
            double step = centroid - hand_position;
            if (step > max_speed) step = max_speed;
            if (step < -max_speed) step = -max_speed;
            cmd.target_position = hand_position + step;
            break;
        }
    }
    // reach is measured from the commanded position: presses land after the move
    for (int k = 0; k < kKeys; ++k)
        if (goals.rows.at(0, k) > 0.5f && std::abs(k - cmd.target_position) <= reach)
            cmd.press_mask[static_cast<size_t>(k)] = true;
    return cmd;
}

// ---- scoring -----------------------------------------------------------------

// Cellwise F1 between executed and reference rolls. Both empty -> 1,
// exactly one empty -> 0.
inline double f1_score(const PianoRoll& executed, const PianoRoll& reference) {
    if (!executed.grid.same_shape(reference.grid)) throw NumericError("f1_score: shape mismatch");
    int64_t tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < executed.grid.v.size(); ++i) {
        const bool e = executed.grid.v[i] > 0.5f;
        const bool r = reference.grid.v[i] > 0.5f;
        tp += e && r;
        fp += e && !r;
        fn += !e && r;
    }
    if (tp + fp == 0 && tp + fn == 0) return 1.0;
    if (tp + fp == 0 || tp + fn == 0) return 0.0;
    const double p = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double r = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (p + r == 0.0) return 0.0;
    return 2.0 * p * r / (p + r);
}

}  // namespace sfwm

#endif
