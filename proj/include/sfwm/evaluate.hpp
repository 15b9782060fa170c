#ifndef SFWM_EVALUATE_HPP
#define SFWM_EVALUATE_HPP

#include "sfwm/pipeline.hpp"

namespace sfwm {

// ---- generation ---------------------------------------------------------------

struct GenerateResult {
    fs::path grid_path;
    fs::path preview_path;
    int64_t generated_frames = 0;
};

// Context audio (or roll) in, autoregressive prediction out. For audio the
// context is the final ctx_frames of the input spectrogram; rolls use the
// final window_steps rows.
inline GenerateResult generate_stage(const json& cfg, const fs::path& input, const fs::path& ae_path,
                                     const fs::path& wm_path, const fs::path& out, int n_windows,
                                     int sampler_steps, uint64_t seed) {
    fs::create_directories(out);
    const Checkpoint ae_ck = read_checkpoint(ae_path.string());
    const Checkpoint wm_ck = read_checkpoint(wm_path.string());
    const AutoencoderConfig ac = autoencoder_config_from_checkpoint(ae_ck);
    const VectorFieldConfig vf = world_model_config_from_checkpoint(wm_ck);
    const ParamStore<float> ae = load_params(ae_ck);
    const ParamStore<float> wm = load_params(wm_ck);

    Mat<float> context;
    double shift_s;
    if (input.extension() == ".wav") {
        if (ac.domain != "spectrogram") throw DependencyError("generate: checkpoint domain is not audio");
        if (!wm_ck.meta.contains("stats_lo"))
            throw DependencyError("generate: checkpoint carries no normalization stats");
        const FrontendConfig fc = frontend_config(cfg);
        const NormalizationStats st{wm_ck.meta.at("stats_lo").get<double>(),
                                    wm_ck.meta.at("stats_hi").get<double>()};
        PcmSignal sig = load_wav_file(input.string());
        NormalizedSpectrogram ns = signal_to_normalized(sig, fc, st);
        const int64_t need = wm_ck.meta.at("ctx_frames").get<int64_t>();
        if (ns.frames.rows < need)
            throw ConfigError("generate: context shorter than " + std::to_string(need) + " frames");
        context = take_rows(ns.frames, ns.frames.rows - need, ns.frames.rows);
        shift_s = fc.frame_shift_s;
    } else {
        if (ac.domain != "piano-roll") throw DependencyError("generate: checkpoint domain is not rolls");
        const double step_s = cfg.at("simulator").at("piano").at("step_s").get<double>();
        PianoRoll roll = read_roll_csv(input.string(), step_s);
        const int64_t need = wm_ck.meta.at("ctx_frames").get<int64_t>();
        if (roll.grid.rows < need)
            throw ConfigError("generate: context shorter than " + std::to_string(need) + " steps");
        context = take_rows(roll.grid, roll.grid.rows - need, roll.grid.rows);
        shift_s = step_s;
    }

    SamplerConfig sc;
    sc.n_steps = sampler_steps;
    sc.seed = seed;
    LatentSequence seed_ctx = ae_encode(ae, ac, context);
    RolloutResult rr = flow_rollout(wm, vf, ae, ac, seed_ctx, n_windows, sc);

    GenerateResult res;
    res.generated_frames = rr.decoded.rows;
    res.grid_path = out / "predicted.grid";
    write_grid(res.grid_path.string(), rr.decoded, shift_s);
    res.preview_path = out / "predicted.pgm";
    write_pgm(res.preview_path.string(), rr.decoded, ac.domain == "piano-roll" ? 0.0f : -1.0f, 1.0f);
    if (ac.domain == "piano-roll") {
        PianoRoll gen;
        gen.step_s = shift_s;
        gen.grid = Mat<float>(rr.decoded.rows, rr.decoded.cols);
        for (size_t i = 0; i < gen.grid.v.size(); ++i)
            gen.grid.v[i] = rr.decoded.v[i] > 0.5f ? 1.0f : 0.0f;
        write_roll_csv((out / "predicted.roll.csv").string(), gen);
    }
    std::string meta = "window,seed,euler_steps,latent_frames\n";
    for (const auto& w : rr.windows)
        meta += std::to_string(w.window) + "," + std::to_string(w.seed) + "," +
                std::to_string(w.n_steps) + "," + std::to_string(w.latent_frames) + "\n";
    pipedetail::write_text(out / "rollout.csv", meta);
    return res;
}

// ---- water evaluation -----------------------------------------------------------

struct WaterEvalSummary {
    int trials = 0;
    int lookahead_successes = 0;
    int baseline_successes = 0;
};

// Paired closed-loop trials: each seed runs once with the lookahead policy
// fed world-model predictions and once with the baseline policy and no
// predictions.
inline WaterEvalSummary eval_water_stage(const json& cfg, const fs::path& ae_path,
                                         const fs::path& wm_path, const fs::path& policy_path,
                                         const fs::path& baseline_path, const fs::path& out,
                                         int trials, uint64_t seed) {
    fs::create_directories(out);
    const Checkpoint ae_ck = read_checkpoint(ae_path.string());
    const Checkpoint wm_ck = read_checkpoint(wm_path.string());
    const Checkpoint po_ck = read_checkpoint(policy_path.string());
    const Checkpoint ba_ck = read_checkpoint(baseline_path.string());
    const AutoencoderConfig ac = autoencoder_config_from_checkpoint(ae_ck);
    const VectorFieldConfig vf = world_model_config_from_checkpoint(wm_ck);
    const ParamStore<float> ae = load_params(ae_ck);
    const ParamStore<float> wm = load_params(wm_ck);
    const ParamStore<float> po = load_params(po_ck);
    const ParamStore<float> ba = load_params(ba_ck);
    const ChunkPolicyConfig pc_look = policy_config_from_checkpoint(po_ck);
    const ChunkPolicyConfig pc_base = policy_config_from_checkpoint(ba_ck);
    if (!pc_base.baseline_mode) throw DependencyError("eval water: second policy must be baseline-trained");
    if (pc_look.baseline_mode) throw DependencyError("eval water: first policy must be lookahead-trained");

    const FrontendConfig fc = frontend_config(cfg);
    const WaterTaskConfig tc = water_task_config(cfg);
    const ObservationConfig oc = observation_config(cfg);
    const NormalizationStats st{po_ck.meta.at("stats_lo").get<double>(),
                                po_ck.meta.at("stats_hi").get<double>()};

    WaterWorldModel world;
    world.wm = &wm;
    world.wm_cfg = &vf;
    world.ae = &ae;
    world.ae_cfg = &ac;

    WaterEvalSummary sum;
    sum.trials = trials;
    std::string head =
        "trial,seed,mode,success,final_fill,released,overflowed,steps,sim_duration_s,"
        "predicted_release_step\n";
    std::string rows;
    for (int i = 0; i < trials; ++i) {
        const uint64_t trial_seed = seed + static_cast<uint64_t>(i);
        WaterTrialResult look = run_water_trial(po, pc_look, oc, world, fc, st, tc, trial_seed);
        WaterTrialResult base = run_water_trial(ba, pc_base, oc, {}, fc, st, tc, trial_seed);
        sum.lookahead_successes += look.success;
        sum.baseline_successes += base.success;
        auto row = [&](const char* mode, const WaterTrialResult& r) {
            rows += std::to_string(i) + "," + std::to_string(trial_seed) + "," + mode + "," +
                    (r.success ? "1" : "0") + "," + pipedetail::fmt("%.6f", r.final_fill) + "," +
                    (r.released ? "1" : "0") + "," + (r.overflowed ? "1" : "0") + "," +
                    std::to_string(r.steps) + "," + pipedetail::fmt("%.3f", r.sim_duration_s) + "," +
                    std::to_string(r.first_predicted_release_step) + "\n";
        };
        row("lookahead", look);
        row("baseline", base);
    }
    pipedetail::write_text(out / "water_eval.csv", head + rows);
    json summary{{"trials", sum.trials},
                 {"lookahead_successes", sum.lookahead_successes},
                 {"baseline_successes", sum.baseline_successes},
                 {"lookahead_rate", static_cast<double>(sum.lookahead_successes) / sum.trials},
                 {"baseline_rate", static_cast<double>(sum.baseline_successes) / sum.trials}};
    pipedetail::write_text(out / "water_summary.json", summary.dump(2) + "\n");
    return sum;
}

// ---- piano evaluation --------------------------------------------------------------

struct PianoEvalSummary {
    int pairs = 0;
    double mean_f1_lookahead = 0.0;
    double mean_f1_reactive = 0.0;
};

// Paired episodes per song: generated lookahead at the configured horizon
// against the purely reactive H = 1 controller.
inline PianoEvalSummary eval_piano_stage(const json& cfg, const fs::path& data,
                                         const fs::path& ae_path, const fs::path& wm_path,
                                         const fs::path& out, int n_pairs, uint64_t seed) {
    fs::create_directories(out);
    const Checkpoint ae_ck = read_checkpoint(ae_path.string());
    const Checkpoint wm_ck = read_checkpoint(wm_path.string());
    const AutoencoderConfig ac = autoencoder_config_from_checkpoint(ae_ck);
    const VectorFieldConfig vf = world_model_config_from_checkpoint(wm_ck);
    if (ac.domain != "piano-roll") throw DependencyError("eval piano: checkpoints are not roll-domain");
    const ParamStore<float> ae = load_params(ae_ck);
    const ParamStore<float> wm = load_params(wm_ck);

    const double step_s = cfg.at("simulator").at("piano").at("step_s").get<double>();
    std::vector<fs::path> rolls;
    for (const auto& e : fs::directory_iterator(data)) {
        auto name = e.path().filename().string();
        if (name.size() > 9 && name.substr(name.size() - 9) == ".roll.csv") rolls.push_back(e.path());
    }
    std::sort(rolls.begin(), rolls.end());
    if (rolls.empty()) throw DependencyError("eval piano: no roll CSVs in " + data.string());

    PianoWorldModel world;
    world.wm = &wm;
    world.wm_cfg = &vf;
    world.ae = &ae;
    world.ae_cfg = &ac;

    PianoEpisodeConfig look;
    look.env = piano_env_config(cfg);
    look.horizon = cfg.at("simulator").at("piano").at("horizon").get<int>();
    look.source = LookaheadSource::Generated;
    look.wm_window_steps = wm_ck.meta.at("ctx_frames").get<int64_t>();
    PianoEpisodeConfig reactive = look;
    reactive.horizon = 1;
    reactive.source = LookaheadSource::CurrentOnly;

    std::string head = "pair,song,seed,mode,f1,steps\n";
    std::string rows;
    PianoEvalSummary sum;
    std::vector<double> f1_look, f1_react;
    int pair = 0;
    for (const auto& p : rolls) {
        if (pair >= n_pairs) break;
        auto song = p.filename().string();
        song = song.substr(0, song.size() - 9);
        PianoRoll roll = read_roll_csv(p.string(), step_s);
        const uint64_t pair_seed = seed + static_cast<uint64_t>(pair);
        auto r_look = run_piano_episode(roll, look, world, pair_seed);
        auto r_react = run_piano_episode(roll, reactive, {}, pair_seed);
        f1_look.push_back(r_look.f1);
        f1_react.push_back(r_react.f1);
        rows += std::to_string(pair) + "," + song + "," + std::to_string(pair_seed) + ",lookahead," +
                pipedetail::fmt("%.6f", r_look.f1) + "," + std::to_string(roll.grid.rows) + "\n";
        rows += std::to_string(pair) + "," + song + "," + std::to_string(pair_seed) + ",reactive," +
                pipedetail::fmt("%.6f", r_react.f1) + "," + std::to_string(roll.grid.rows) + "\n";
        ++pair;
    }
    pipedetail::write_text(out / "piano_eval.csv", head + rows);
    sum.pairs = pair;
    sum.mean_f1_lookahead = mean_of(f1_look);
    sum.mean_f1_reactive = mean_of(f1_react);
    json summary{{"pairs", sum.pairs},
                 {"horizon", look.horizon},
                 {"mean_f1_lookahead", sum.mean_f1_lookahead},
                 {"sd_f1_lookahead", stddev_of(f1_look)},
                 {"mean_f1_reactive", sum.mean_f1_reactive},
                 {"sd_f1_reactive", stddev_of(f1_react)},
                 {"gain", sum.mean_f1_lookahead - sum.mean_f1_reactive}};
    pipedetail::write_text(out / "piano_summary.json", summary.dump(2) + "\n");
    return sum;
}

// ---- verification and plots -----------------------------------------------------------

// Finite-difference sweep over every primitive and one composite graph per
// seed; writes a per-primitive report and returns overall success.
inline bool gradcheck_stage(const fs::path& out, int n_seeds, uint64_t seed, bool echo = true,
                            const std::string& corrupt = "") {
    fs::create_directories(out);
    std::map<std::string, double> worst;
    bool all_pass = true;
    for (int s = 0; s < n_seeds; ++s) {
        auto report = run_gradient_checks(seed + static_cast<uint64_t>(s), corrupt);
        for (const auto& e : report.entries) {
            worst[e.name] = std::max(worst[e.name], e.max_rel_err);
            if (!e.pass) all_pass = false;
        }
    }
    std::string text = "primitive,max_rel_err,pass\n";
    for (const auto& [name, err] : worst) {
        const bool pass = err < 1e-4;
        text += name + "," + pipedetail::fmt("%.3e", err) + "," + (pass ? "1" : "0") + "\n";
        if (echo)
            std::printf("%-12s %s  max rel err %.3e\n", name.c_str(), pass ? "PASS" : "FAIL", err);
    }
    pipedetail::write_text(out / "gradcheck.csv", text);
    return all_pass;
}

// Grid or roll-CSV input rendered as an 8-bit PGM.
inline fs::path plot_stage(const json& cfg, const fs::path& input, const fs::path& out) {
    fs::create_directories(out);
    Mat<float> frames;
    float lo = -1.0f;
    const auto name = input.filename().string();
    if (input.extension() == ".grid") {
        frames = read_grid(input.string()).frames;
    } else if (name.size() > 9 && name.substr(name.size() - 9) == ".roll.csv") {
        const double step_s = cfg.at("simulator").at("piano").at("step_s").get<double>();
        frames = read_roll_csv(input.string(), step_s).grid;
        lo = 0.0f;
    } else {
        throw ConfigError("plot: input must be a .grid or .roll.csv file");
    }
    fs::path dest = out / (input.stem().string() + ".pgm");
    write_pgm(dest.string(), frames, lo, 1.0f);
    return dest;
}

}  // namespace sfwm

#endif
