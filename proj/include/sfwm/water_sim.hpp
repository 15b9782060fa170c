#ifndef SFWM_WATER_SIM_HPP
#define SFWM_WATER_SIM_HPP

#include <optional>
#include <vector>

#include "sfwm/policy.hpp"
#include "sfwm/rng.hpp"
#include "sfwm/spectrogram.hpp"

namespace sfwm {

// Synthetic water-filling sound source: a sine whose frequency rises linearly
// with fill level while the button is pressed, plus background noise and a
// broadband click on every press/release transition.

enum class ButtonAction { Press, Release, Hold };

struct WaterSimConfig {
    double fill_rate = 0.16;    // fill fraction per second while pressed
    double f_empty = 300.0;     // Hz at fill 0
    double f_full = 1200.0;     // Hz at fill 1
    double click_ms = 5.0;
    double click_amp = 0.8;
    double tone_amp = 0.5;
    double noise_rms = 0.01;
    double fill_lo = 0.85;      // success band
    double fill_hi = 0.98;
    int sample_rate = 16000;
};

struct WaterSimState {
    double fill_level = 0.0;
    bool pressed = false;
    double time_s = 0.0;
    bool overflowed = false;
    double phase = 0.0;  // running tone phase, keeps the chirp continuous
};

inline double water_pitch(const WaterSimConfig& cfg, double fill) {
    return cfg.f_empty + (cfg.f_full - cfg.f_empty) * fill;
}

// Advance the simulator by dt under one button action; returns the emitted
// audio chunk. Fill rises at fill_rate while pressed; overflow latches once
// the level would pass 1 and the episode continues as a failure.
inline PcmSignal water_step(WaterSimState& st, ButtonAction action, double dt,
                            const WaterSimConfig& cfg, double fill_rate, Rng& rng) {
    if (dt <= 0.0) throw ConfigError("water_step: dt must be positive");
    const bool was_pressed = st.pressed;
    if (action == ButtonAction::Press) st.pressed = true;
    if (action == ButtonAction::Release) st.pressed = false;
    const bool transition = st.pressed != was_pressed;

    const int sr = cfg.sample_rate;
    const int64_t n = static_cast<int64_t>(std::llround(dt * sr));
    const int64_t click_n = transition ? static_cast<int64_t>(cfg.click_ms * 1e-3 * sr) : 0;

    PcmSignal chunk;
    chunk.sample_rate = sr;
    chunk.samples.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        double s = cfg.noise_rms * rng.normal();
        if (st.pressed) {
            double next_fill = st.fill_level + fill_rate / sr;
            if (next_fill > 1.0) {
                next_fill = 1.0;
                st.overflowed = true;
            }
            st.fill_level = next_fill;
            st.phase += 2.0 * 3.14159265358979323846 * water_pitch(cfg, st.fill_level) / sr;
            s += cfg.tone_amp * std::sin(st.phase);
        }
        if (i < click_n) s += cfg.click_amp * rng.uniform(-1.0, 1.0);
        if (s > 1.0) s = 1.0;
        if (s < -1.0) s = -1.0;
        chunk.samples[static_cast<size_t>(i)] = static_cast<float>(s);
    }
    st.time_s += dt;
    return chunk;
}

// ---- episodes ----------------------------------------------------------------

struct WaterTaskConfig {
    WaterSimConfig sim;
    double control_dt = 0.1;      // 10 Hz control
    int chunk_steps = 16;
    int replan_steps = 8;
    double episode_s = 15.5;
    double press_lo_s = 1.5;      // scripted press window for the expert
    double press_hi_s = 2.5;
    double tail_s = 6.0;          // recorded audio after the expert release
    double rate_jitter = 0.2;     // +-20 percent fill-rate randomization
};

struct WaterStepRecord {
    int step = 0;
    double t = 0.0;
    float action = -1.0f;  // +1 pressed, -1 released for this control step
    float pressed = 0.0f;
    float fill = 0.0f;
};

struct WaterEpisode {
    PcmSignal audio;
    std::vector<WaterStepRecord> steps;
    double fill_rate = 0.25;
    int press_step = 0;
    int release_step = 0;
    bool success = false;
    bool overflowed = false;
    double final_fill = 0.0;
};

// Scripted expert: press at a random start, hold, release at the first control
// step where the fill has entered the success band, then idle for the tail.
inline WaterEpisode water_episode_oracle(const WaterTaskConfig& tc, uint64_t seed) {
    Rng rng(seed);
    WaterEpisode ep;
    ep.fill_rate = tc.sim.fill_rate * (1.0 - tc.rate_jitter + 2.0 * tc.rate_jitter * rng.uniform());
    const double press_t = rng.uniform(tc.press_lo_s, tc.press_hi_s);
    ep.press_step = static_cast<int>(std::ceil(press_t / tc.control_dt));
    ep.audio.sample_rate = tc.sim.sample_rate;

    WaterSimState st;
    ep.release_step = -1;
    int step = 0;
    while (true) {
        ButtonAction action = ButtonAction::Hold;
        if (step == ep.press_step) action = ButtonAction::Press;
        if (ep.release_step < 0 && st.pressed && st.fill_level >= tc.sim.fill_lo) {
            action = ButtonAction::Release;
            ep.release_step = step;
        }
        const bool will_press = action == ButtonAction::Press || (st.pressed && action == ButtonAction::Hold);
        PcmSignal chunk = water_step(st, action, tc.control_dt, tc.sim, ep.fill_rate, rng);
        ep.audio.samples.insert(ep.audio.samples.end(), chunk.samples.begin(), chunk.samples.end());
        ep.steps.push_back({step, st.time_s, will_press ? 1.0f : -1.0f,
                            st.pressed ? 1.0f : 0.0f, static_cast<float>(st.fill_level)});
        ++step;
        if (ep.release_step >= 0 &&
            step >= ep.release_step + static_cast<int>(std::ceil(tc.tail_s / tc.control_dt)))
            break;
        if (st.time_s > tc.episode_s + tc.tail_s + 5.0)
            throw NumericError("water_episode_oracle: expert never reached the band");
    }
    ep.final_fill = st.fill_level;
    ep.overflowed = st.overflowed;
    ep.success = !st.overflowed && !st.pressed && st.fill_level >= tc.sim.fill_lo &&
                 st.fill_level <= tc.sim.fill_hi;
    return ep;
}

// ---- closed-loop control ------------------------------------------------------

// Context window ending at the newest complete frame, or nothing while the
// buffer is shorter than ctx_frames. Frames are aligned to sample 0, so the
// result is identical to slicing the full-episode spectrogram.
inline std::optional<Mat<float>> latest_context_window(const std::vector<float>& audio, int sr,
                                                       const FrontendConfig& fc,
                                                       const NormalizationStats& stats) {
    const int64_t win = static_cast<int64_t>(std::llround(fc.frame_len_s * sr));
    const int64_t hop = static_cast<int64_t>(std::llround(fc.frame_shift_s * sr));
    const int64_t n = static_cast<int64_t>(audio.size());
    if (n < win) return std::nullopt;
    const int64_t frames = (n - win) / hop + 1;
    if (frames < fc.ctx_frames) return std::nullopt;
    const int64_t start_frame = frames - fc.ctx_frames;
    PcmSignal slice;
    slice.sample_rate = sr;
    const int64_t s0 = start_frame * hop;
    const int64_t s1 = (frames - 1) * hop + win;
    slice.samples.assign(audio.begin() + s0, audio.begin() + s1);
    NormalizedSpectrogram ns = signal_to_normalized(slice, fc, stats);
    if (ns.frames.rows != fc.ctx_frames) throw NumericError("latest_context_window: frame miscount");
    return ns.frames;
}

inline ButtonAction chunk_value_to_action(float a) {
    if (a > 0.5f) return ButtonAction::Press;
    if (a < -0.5f) return ButtonAction::Release;
    return ButtonAction::Hold;
}

// Frame index at which a predicted spectrogram window shows the tone stopping
// (the release signature), or -1. Diagnostic only.
inline int64_t predicted_release_frame(const Mat<float>& predicted) {
    const int64_t m0 = 8, m1 = std::min<int64_t>(predicted.cols, 64);
    std::vector<bool> tone(static_cast<size_t>(predicted.rows));
    for (int64_t t = 0; t < predicted.rows; ++t) {
        float peak = -1.0f;
        for (int64_t m = m0; m < m1; ++m) peak = std::max(peak, predicted.at(t, m));
        tone[static_cast<size_t>(t)] = peak > 0.3f;
    }
    int64_t seen_tone = 0;
    for (int64_t t = 0; t < predicted.rows; ++t) {
        if (tone[static_cast<size_t>(t)]) {
            ++seen_tone;
            continue;
        }
        if (seen_tone >= 10) {
            int64_t quiet = 0;
            for (int64_t u = t; u < predicted.rows && !tone[static_cast<size_t>(u)]; ++u) ++quiet;
            if (quiet >= 15) return t;
        }
    }
    return -1;
}

struct WaterTrialResult {
    bool success = false;
    double final_fill = 0.0;
    bool released = false;
    bool overflowed = false;
    int steps = 0;
    double sim_duration_s = 0.0;
    int first_predicted_release_step = -1;  // diagnostic: predicted release seen ahead of time
};

struct WaterWorldModel {
    const ParamStore<float>* wm = nullptr;
    const VectorFieldConfig* wm_cfg = nullptr;
    const ParamStore<float>* ae = nullptr;
    const AutoencoderConfig* ae_cfg = nullptr;
};

// One closed-loop trial. The policy replans every replan_steps once the audio
// buffer covers a full context window; before that the button is left alone.
inline WaterTrialResult run_water_trial(const ParamStore<float>& policy, const ChunkPolicyConfig& pc,
                                        const ObservationConfig& oc, const WaterWorldModel& world,
                                        const FrontendConfig& fc, const NormalizationStats& stats,
                                        const WaterTaskConfig& tc, uint64_t seed) {
    Rng rng(seed);
    const double rate = tc.sim.fill_rate * (1.0 - tc.rate_jitter + 2.0 * tc.rate_jitter * rng.uniform());
    Rng noise_rng = rng.fork(1);

    WaterSimState st;
    std::vector<float> audio;
    WaterTrialResult res;
    Mat<float> chunk;
    int chunk_pos = 0;
    bool have_chunk = false;
    bool has_pressed = false;
    const int total_steps = static_cast<int>(std::ceil(tc.episode_s / tc.control_dt));

    for (int step = 0; step < total_steps; ++step) {
        ButtonAction action = ButtonAction::Hold;
        auto ctx = latest_context_window(audio, tc.sim.sample_rate, fc, stats);
        if (ctx) {
            if (!have_chunk || chunk_pos >= tc.replan_steps) {
                Mat<float> predicted;
                const Mat<float>* pred_ptr = nullptr;
                if (world.wm && !pc.baseline_mode) {
                    LatentSequence z = ae_encode(*world.ae, *world.ae_cfg, *ctx);
                    SamplerConfig sc;
                    sc.n_steps = 10;
                    sc.seed = seed * 1000003ULL + static_cast<uint64_t>(step);
                    Mat<float> fut = flow_sample(*world.wm, *world.wm_cfg, &z, sc);
                    predicted = ae_decode(*world.ae, *world.ae_cfg, fut);
                    pred_ptr = &predicted;
                    if (res.first_predicted_release_step < 0 && st.pressed &&
                        predicted_release_frame(predicted) >= 0)
                        res.first_predicted_release_step = step;
                }
                std::vector<float> state{st.pressed ? 1.0f : 0.0f, has_pressed ? 1.0f : 0.0f};
                Mat<float> obs = build_observation(oc, *ctx, pred_ptr, state, pc.baseline_mode);
                SamplerConfig psc;
                psc.n_steps = 10;
                psc.seed = seed * 2000003ULL + static_cast<uint64_t>(step);
                chunk = policy_act(policy, pc, oc, obs, psc);
                chunk_pos = 0;
                have_chunk = true;
            }
            action = chunk_value_to_action(chunk.v[static_cast<size_t>(chunk_pos)]);
            ++chunk_pos;
        }
        PcmSignal emitted = water_step(st, action, tc.control_dt, tc.sim, rate, noise_rng);
        audio.insert(audio.end(), emitted.samples.begin(), emitted.samples.end());
        if (st.pressed) has_pressed = true;
        ++res.steps;
    }
    res.final_fill = st.fill_level;
    res.released = !st.pressed && has_pressed;
    res.overflowed = st.overflowed;
    res.sim_duration_s = st.time_s;
    res.success = res.released && !st.overflowed && st.fill_level >= tc.sim.fill_lo &&
                  st.fill_level <= tc.sim.fill_hi;
    return res;
}

}  // namespace sfwm

#endif
