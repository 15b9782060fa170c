#include <catch2/catch_amalgamated.hpp>

#include "sfwm/piano_env.hpp"
#include "sfwm/stats.hpp"
#include "sfwm/water_sim.hpp"

using namespace sfwm;

TEST_CASE("water pitch endpoints and dynamics") {
    WaterSimConfig cfg;
    REQUIRE(water_pitch(cfg, 0.0) == Catch::Approx(cfg.f_empty));
    REQUIRE(water_pitch(cfg, 1.0) == Catch::Approx(cfg.f_full));

    SECTION("holding released leaves the fill unchanged") {
        WaterSimState st;
        Rng rng(1);
        for (int i = 0; i < 5; ++i) water_step(st, ButtonAction::Hold, 0.13, cfg, 0.25, rng);
        REQUIRE(st.fill_level == 0.0);
        REQUIRE_FALSE(st.pressed);
        REQUIRE(st.time_s == Catch::Approx(0.65));
    }
    SECTION("pressing fills linearly") {
        WaterSimState st;
        Rng rng(2);
        water_step(st, ButtonAction::Press, 1.0, cfg, 0.25, rng);
        REQUIRE(st.fill_level == Catch::Approx(0.25).margin(1e-3));
        water_step(st, ButtonAction::Hold, 1.0, cfg, 0.25, rng);
        REQUIRE(st.fill_level == Catch::Approx(0.5).margin(1e-3));
        water_step(st, ButtonAction::Release, 1.0, cfg, 0.25, rng);
        REQUIRE(st.fill_level == Catch::Approx(0.5).margin(1e-3));
        REQUIRE_FALSE(st.overflowed);
    }
    SECTION("overflow latches and the episode continues") {
        WaterSimState st;
        Rng rng(3);
        water_step(st, ButtonAction::Press, 5.0, cfg, 0.25, rng);
        REQUIRE(st.fill_level == 1.0);
        REQUIRE(st.overflowed);
        auto chunk = water_step(st, ButtonAction::Hold, 0.1, cfg, 0.25, rng);
        REQUIRE(chunk.samples.size() == 1600);
    }
}

TEST_CASE("water audio carries the tone only while pressed") {
    WaterSimConfig cfg;
    cfg.noise_rms = 0.0;
    WaterSimState st;
    Rng rng(4);
    auto quiet = water_step(st, ButtonAction::Hold, 0.05, cfg, 0.25, rng);
    for (float s : quiet.samples) REQUIRE(s == 0.0f);
    auto loud = water_step(st, ButtonAction::Press, 0.05, cfg, 0.25, rng);
    double energy = 0.0;
    // skip the click region
    for (size_t i = static_cast<size_t>(cfg.click_ms * 1e-3 * cfg.sample_rate); i < loud.samples.size(); ++i)
        energy += loud.samples[i] * loud.samples[i];
    REQUIRE(energy > 0.01);
}

TEST_CASE("oracle episodes release inside the band within one control step") {
    WaterTaskConfig tc;
    for (uint64_t seed = 0; seed < 8; ++seed) {
        auto ep = water_episode_oracle(tc, seed);
        REQUIRE(ep.success);
        REQUIRE(ep.final_fill >= tc.sim.fill_lo);
        REQUIRE(ep.final_fill <= tc.sim.fill_hi);
        REQUIRE_FALSE(ep.overflowed);
        // release time = press time + fill_lo / rate, within one dt
        const double expected = ep.press_step * tc.control_dt + tc.sim.fill_lo / ep.fill_rate;
        const double actual = ep.release_step * tc.control_dt;
        REQUIRE(std::abs(actual - expected) <= tc.control_dt + 1e-9);
    }
}

TEST_CASE("oracle episodes are bit-identical for a fixed seed") {
    WaterTaskConfig tc;
    auto a = water_episode_oracle(tc, 42);
    auto b = water_episode_oracle(tc, 42);
    REQUIRE(a.audio.samples.size() == b.audio.samples.size());
    for (size_t i = 0; i < a.audio.samples.size(); ++i)
        REQUIRE(a.audio.samples[i] == b.audio.samples[i]);
    REQUIRE(a.press_step == b.press_step);
    REQUIRE(a.release_step == b.release_step);
    auto c = water_episode_oracle(tc, 43);
    REQUIRE((c.press_step != a.press_step || c.audio.samples != a.audio.samples));
}

TEST_CASE("frontend dominant mel bin tracks the simulated pitch") {
    WaterSimConfig cfg;
    cfg.noise_rms = 0.005;
    FrontendConfig fc;
    for (double fill : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        // synthesize a short tone at the pitch for this fill level
        PcmSignal sig;
        sig.sample_rate = cfg.sample_rate;
        sig.samples.resize(static_cast<size_t>(cfg.sample_rate / 2));
        Rng rng(7);
        const double f = water_pitch(cfg, fill);
        double phase = 0.0;
        for (auto& s : sig.samples) {
            phase += 2.0 * 3.14159265358979323846 * f / cfg.sample_rate;
            s = static_cast<float>(cfg.tone_amp * std::sin(phase) + cfg.noise_rms * rng.normal());
        }
        auto power = stft_power(sig, fc.frame_len_s, fc.frame_shift_s);
        auto mel = log_mel(power, cfg.sample_rate, fc.frame_shift_s, fc.n_mels, fc.fmin);
        // mid frame argmax vs the mel bin whose center is nearest f
        const int64_t t = mel.frames.rows / 2;
        int argmax = 0;
        for (int m = 1; m < fc.n_mels; ++m)
            if (mel.frames.at(t, m) > mel.frames.at(t, argmax)) argmax = m;
        const double mlo = mel_of_hz(fc.fmin), mhi = mel_of_hz(cfg.sample_rate / 2.0);
        int nearest = 0;
        double best = 1e18;
        for (int m = 0; m < fc.n_mels; ++m) {
            const double center = hz_of_mel(mlo + (mhi - mlo) * (m + 1) / (fc.n_mels + 1.0));
            if (std::abs(center - f) < best) {
                best = std::abs(center - f);
                nearest = m;
            }
        }
        REQUIRE(std::abs(argmax - nearest) <= 1);
    }
}

TEST_CASE("piano env dynamics") {
    PianoEnvConfig cfg;
    cfg.max_speed = 5.0;
    cfg.reach = 12.0;
    PianoEnvState st;
    st.hand_position = 40.0;
    st.executed = Mat<float>(4, kKeys);

    SECTION("stationary target means no movement") {
        KeyCommand cmd;
        cmd.target_position = 40.0;
        piano_step(st, cmd, cfg);
        REQUIRE(st.hand_position == 40.0);
    }
    SECTION("movement is capped and lands exactly when close") {
        KeyCommand cmd;
        cmd.target_position = 43.0;
        piano_step(st, cmd, cfg);
        REQUIRE(st.hand_position == 43.0);  // distance 3 < cap 5
        cmd.target_position = 60.0;
        piano_step(st, cmd, cfg);
        REQUIRE(st.hand_position == 48.0);  // capped at 5
    }
    SECTION("out-of-reach presses are dropped silently") {
        KeyCommand cmd;
        cmd.target_position = 0.0;
        cmd.press_mask[87] = true;  // hand ends at 35; key 87 is far outside reach
        piano_step(st, cmd, cfg);
        for (int k = 0; k < kKeys; ++k) REQUIRE(st.executed.at(0, k) == 0.0f);
    }
    SECTION("in-reach presses are recorded at the current step") {
        KeyCommand cmd;
        cmd.target_position = 40.0;
        cmd.press_mask[45] = true;
        piano_step(st, cmd, cfg);
        REQUIRE(st.executed.at(0, 45) == 1.0f);
        REQUIRE(st.step_index == 1);
    }
}

TEST_CASE("piano episodes are deterministic") {
    auto roll = make_etude(5);
    PianoEpisodeConfig pc;
    pc.horizon = 16;
    pc.source = LookaheadSource::GroundTruth;
    auto a = run_piano_episode(roll, pc, {}, 3);
    auto b = run_piano_episode(roll, pc, {}, 3);
    REQUIRE(a.f1 == b.f1);
    for (size_t i = 0; i < a.executed.grid.v.size(); ++i)
        REQUIRE(a.executed.grid.v[i] == b.executed.grid.v[i]);
}

TEST_CASE("benchmark songs") {
    auto songs = make_benchmark_songs(1234);
    REQUIRE(songs.count("twinkle") == 1);
    REQUIRE(songs.size() == 25);

    SECTION("twinkle opens with two steps of C4 then two of G4") {
        const auto& tw = songs.at("twinkle");
        const int64_t s = 64;  // silence prefix
        REQUIRE(tw.grid.at(s + 0, 39) == 1.0f);
        REQUIRE(tw.grid.at(s + 1, 39) == 1.0f);
        REQUIRE(tw.grid.at(s + 2, 46) == 1.0f);
        REQUIRE(tw.grid.at(s + 3, 46) == 1.0f);
        // single-line: one key per active row
        for (int64_t t = 0; t < tw.grid.rows; ++t) {
            int count = 0;
            for (int k = 0; k < kKeys; ++k) count += tw.grid.at(t, k) > 0.5f;
            REQUIRE(count <= 1);
        }
    }
    SECTION("degenerate etude with zero jumps is playable by a stationary hand") {
        EtudeConfig ec;
        ec.small_jump = 0;
        ec.big_jump_lo = 0;
        ec.big_jump_hi = 0;
        auto e = make_etude(9, ec);
        int first_key = -1;
        for (int64_t t = 0; t < e.grid.rows; ++t)
            for (int k = 0; k < kKeys; ++k)
                if (e.grid.at(t, k) > 0.5f) {
                    if (first_key < 0) first_key = k;
                    REQUIRE(k == first_key);
                }
        REQUIRE(first_key >= 0);
    }
    SECTION("fixed seed reproduces the set") {
        auto again = make_benchmark_songs(1234);
        for (const auto& [name, roll] : songs) {
            const auto& other = again.at(name);
            for (size_t i = 0; i < roll.grid.v.size(); ++i)
                REQUIRE(roll.grid.v[i] == other.grid.v[i]);
        }
    }
}

TEST_CASE("lookahead beats reactive on jump etudes with ground-truth goals") {
    // sanity: the dominance mechanism exists before any learning enters
    std::vector<double> gains;
    for (uint64_t seed = 0; seed < 6; ++seed) {
        auto roll = make_etude(seed + 100);
        PianoEpisodeConfig reactive;
        reactive.horizon = 1;
        PianoEpisodeConfig look;
        look.horizon = 16;
        look.source = LookaheadSource::GroundTruth;
        const double f1_reactive = run_piano_episode(roll, reactive, {}, seed).f1;
        const double f1_look = run_piano_episode(roll, look, {}, seed).f1;
        gains.push_back(f1_look - f1_reactive);
    }
    REQUIRE(mean_of(gains) > 0.1);
}

TEST_CASE("spearman correlation") {
    std::vector<double> t{1, 2, 3, 4, 5};
    REQUIRE(spearman(t, {2, 4, 6, 8, 10}) == Catch::Approx(1.0));
    REQUIRE(spearman(t, {10, 8, 6, 4, 2}) == Catch::Approx(-1.0));
    REQUIRE(std::abs(spearman(t, {3, 1, 4, 1, 5})) < 1.0);
    // monotone with ties stays strongly positive
    REQUIRE(spearman({1, 2, 3, 4, 5, 6}, {1, 1, 2, 2, 3, 3}) > 0.9);
}
