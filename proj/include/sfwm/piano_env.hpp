#ifndef SFWM_PIANO_ENV_HPP
#define SFWM_PIANO_ENV_HPP

#include <map>
#include <string>

#include "sfwm/policy.hpp"

namespace sfwm {

// Kinematic one-hand piano: the hand is a point on the key axis that moves
// with bounded speed and can press any goal key within its reach radius.

struct PianoEnvConfig {
    double max_speed = 2.5;  // key indices per step
    double reach = 12.0;     // key indices
    double step_s = 0.125;
    double start_position = 44.0;
};

struct PianoEnvState {
    double hand_position = 44.0;
    Mat<float> executed;  // accrues one row per step
    int64_t step_index = 0;
};

// Move toward the commanded target (speed-capped) and record the in-reach
// presses for this step; out-of-reach presses are dropped silently.
inline void piano_step(PianoEnvState& st, const KeyCommand& cmd, const PianoEnvConfig& cfg) {
    if (st.step_index >= st.executed.rows) throw ConfigError("piano_step: episode is over");
    double delta = cmd.target_position - st.hand_position;
    if (delta > cfg.max_speed) delta = cfg.max_speed;
    if (delta < -cfg.max_speed) delta = -cfg.max_speed;
    st.hand_position += delta;
    if (st.hand_position < 0.0) st.hand_position = 0.0;
    if (st.hand_position > 87.0) st.hand_position = 87.0;
    for (int k = 0; k < kKeys; ++k)
        if (cmd.press_mask[static_cast<size_t>(k)] && std::abs(k - st.hand_position) <= cfg.reach)
            st.executed.at(st.step_index, k) = 1.0f;
    st.step_index += 1;
}

// ---- benchmark songs -----------------------------------------------------------

struct EtudeConfig {
    int64_t length = 160;
    int64_t silence_prefix = 64;
    int64_t note_period = 10;
    int64_t note_duration = 2;
    int small_jump = 4;
    int big_jump_lo = 18;
    int big_jump_hi = 32;
};

// Single-line study piece alternating near moves with jumps wide enough that
// a purely reactive hand cannot arrive in time.
inline PianoRoll make_etude(uint64_t seed, const EtudeConfig& ec = {}) {
    Rng rng(seed);
    PianoRoll roll;
    roll.step_s = 0.125;
    roll.grid = Mat<float>(ec.length, kKeys);
    int key = 36 + static_cast<int>(rng.index(16));
    bool big = false;
    for (int64_t onset = ec.silence_prefix; onset + ec.note_duration <= ec.length;
         onset += ec.note_period) {
        for (int64_t t = onset; t < onset + ec.note_duration; ++t) roll.grid.at(t, key) = 1.0f;
        int jump;
        if (big) {
            jump = ec.big_jump_lo + static_cast<int>(rng.index(
                                        static_cast<uint64_t>(ec.big_jump_hi - ec.big_jump_lo + 1)));
        } else {
            jump = static_cast<int>(rng.index(static_cast<uint64_t>(ec.small_jump + 1)));
        }
        if (rng.uniform() < 0.5) jump = -jump;
        int next = key + jump;
        if (next < 4 || next > 83) next = key - jump;
        key = std::clamp(next, 4, 83);
        big = !big;
    }
    return roll;
}

// Hand-encoded public-domain melody, one step per quarter note, C major.
inline PianoRoll make_twinkle(int64_t total_length = 160, int64_t silence_prefix = 64) {
    // pitch indices (MIDI - 21): C4=39 D=41 E=43 F=44 G=46 A=48
    const int C = 39, D = 41, E = 43, F = 44, G = 46, A = 48;
    const std::vector<int> phrase_a{C, C, G, G, A, A, G, G};
    const std::vector<int> phrase_b{F, F, E, E, D, D, C, C};
    const std::vector<int> phrase_c{G, G, F, F, E, E, D, D};
    std::vector<int> song;
    for (const auto* ph : {&phrase_a, &phrase_b, &phrase_c, &phrase_c, &phrase_a, &phrase_b})
        song.insert(song.end(), ph->begin(), ph->end());
    PianoRoll roll;
    roll.step_s = 0.125;
    roll.grid = Mat<float>(std::max<int64_t>(total_length, silence_prefix + static_cast<int64_t>(song.size())),
                           kKeys);
    for (size_t i = 0; i < song.size(); ++i)
        roll.grid.at(silence_prefix + static_cast<int64_t>(i), song[i]) = 1.0f;
    return roll;
}

// Named benchmark set: the hand-encoded melody plus seeded study pieces.
inline std::map<std::string, PianoRoll> make_benchmark_songs(uint64_t seed, int n_etudes = 24) {
    std::map<std::string, PianoRoll> songs;
    songs["twinkle"] = make_twinkle();
    for (int i = 0; i < n_etudes; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "etude%02d", i);
        songs[name] = make_etude(seed * 1000ULL + static_cast<uint64_t>(i));
    }
    return songs;
}

// ---- episodes -------------------------------------------------------------------

enum class LookaheadSource { CurrentOnly, GroundTruth, Generated };

struct PianoEpisodeConfig {
    PianoEnvConfig env;
    int horizon = 16;
    LookaheadSource source = LookaheadSource::CurrentOnly;
    int sampler_steps = 10;
    int64_t wm_window_steps = 64;  // context/future length in roll steps
};

struct PianoWorldModel {
    const ParamStore<float>* wm = nullptr;
    const VectorFieldConfig* wm_cfg = nullptr;
    const ParamStore<float>* ae = nullptr;
    const AutoencoderConfig* ae_cfg = nullptr;
};

struct PianoEpisodeResult {
    double f1 = 0.0;
    PianoRoll executed;
};

// Play along with a reference roll. Row 0 of the goal stack is always the true
// current goal; rows 1..H-1 come from the configured lookahead source. The
// generated source re-predicts the next window from the last 64 heard steps.
inline PianoEpisodeResult run_piano_episode(const PianoRoll& reference, const PianoEpisodeConfig& pc,
                                            const PianoWorldModel& world, uint64_t seed) {
    const int64_t T = reference.grid.rows;
    PianoEnvState st;
    st.hand_position = pc.env.start_position;
    st.executed = Mat<float>(T, kKeys);

    for (int64_t t = 0; t < T; ++t) {
        GoalStack gs;
        gs.horizon = pc.horizon;
        gs.rows = Mat<float>(pc.horizon, kKeys);
        for (int k = 0; k < kKeys; ++k) gs.rows.at(0, k) = reference.grid.at(t, k);
        if (pc.horizon > 1) {
            if (pc.source == LookaheadSource::GroundTruth) {
                for (int h = 1; h < pc.horizon; ++h)
                    if (t + h < T)
                        for (int k = 0; k < kKeys; ++k) gs.rows.at(h, k) = reference.grid.at(t + h, k);
            } else if (pc.source == LookaheadSource::Generated) {
                if (!world.wm) throw DependencyError("run_piano_episode: generated lookahead needs a world model");
                // heard context: the last wm_window_steps true rows ending at t
                Mat<float> context(pc.wm_window_steps, kKeys);
                for (int64_t i = 0; i < pc.wm_window_steps; ++i) {
                    const int64_t src = t - pc.wm_window_steps + 1 + i;
                    if (src >= 0)
                        for (int k = 0; k < kKeys; ++k) context.at(i, k) = reference.grid.at(src, k);
                }
                LatentSequence z = ae_encode(*world.ae, *world.ae_cfg, context);
                SamplerConfig sc;
                sc.n_steps = pc.sampler_steps;
                sc.seed = seed * 4000037ULL + static_cast<uint64_t>(t);
                Mat<float> fut = flow_sample(*world.wm, *world.wm_cfg, &z, sc);
                Mat<float> decoded = ae_decode(*world.ae, *world.ae_cfg, fut);  // rows t+1 ...
                for (int h = 1; h < pc.horizon; ++h)
                    if (h - 1 < decoded.rows)
                        for (int k = 0; k < kKeys; ++k)
                            gs.rows.at(h, k) = decoded.at(h - 1, k) > 0.5f ? 1.0f : 0.0f;
            }
        }
        KeyCommand cmd = piano_controller(gs, st.hand_position, pc.env.max_speed, pc.env.reach);
        piano_step(st, cmd, pc.env);
    }

    PianoEpisodeResult res;
    res.executed.step_s = reference.step_s;
    res.executed.grid = st.executed;
    PianoRoll ref_roll;
    ref_roll.step_s = reference.step_s;
    ref_roll.grid = reference.grid;
    res.f1 = f1_score(res.executed, ref_roll);
    return res;
}

}  // namespace sfwm

#endif
