#ifndef SFWM_PIPELINE_HPP
#define SFWM_PIPELINE_HPP

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sfwm/checkpoint.hpp"
#include "sfwm/config.hpp"
#include "sfwm/gradcheck.hpp"
#include "sfwm/gridio.hpp"
#include "sfwm/manifest.hpp"
#include "sfwm/stats.hpp"

namespace sfwm {

namespace fs = std::filesystem;

// ---- small io helpers ---------------------------------------------------------

namespace pipedetail {

inline std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, v);
    return buf;
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path.string());
    f << text;
}

inline std::string episode_name(int i, const char* suffix) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "ep%03d%s", i, suffix);
    return buf;
}

}  // namespace pipedetail

inline void write_loss_csv(const fs::path& path, const std::vector<TrainLogEntry>& log) {
    std::string text = "step,lr,loss\n";
    for (const auto& e : log)
        text += std::to_string(e.step) + "," + pipedetail::fmt("%.8g", e.lr) + "," +
                pipedetail::fmt("%.8g", e.loss) + "\n";
    pipedetail::write_text(path, text);
}

inline void write_resolved_config(const fs::path& out, const std::string& stage, uint64_t seed,
                                  const json& args, const json& cfg) {
    json j{{"stage", stage}, {"seed", seed}, {"args", args}, {"config", cfg}};
    pipedetail::write_text(out / "resolved.json", j.dump(2) + "\n");
}

// ---- synth ----------------------------------------------------------------------

struct WaterDataset {
    std::vector<WaterEpisode> episodes;
};

inline std::map<std::string, std::string> synth_water(const json& cfg, const fs::path& out,
                                                      int n_episodes, uint64_t seed) {
    if (n_episodes <= 0) throw ConfigError("empty dataset request: n_episodes must be positive");
    fs::create_directories(out);
    const WaterTaskConfig tc = water_task_config(cfg);
    std::map<std::string, std::string> hashes;
    std::string index = "episode,seed,fill_rate,press_step,release_step,success,samples\n";
    for (int i = 0; i < n_episodes; ++i) {
        const uint64_t ep_seed = seed + static_cast<uint64_t>(i);
        WaterEpisode ep = water_episode_oracle(tc, ep_seed);
        const std::string wav_name = pipedetail::episode_name(i, ".wav");
        save_wav_pcm16((out / wav_name).string(), ep.audio);
        std::string actions = "step,t,action,pressed,fill\n";
        for (const auto& s : ep.steps)
            actions += std::to_string(s.step) + "," + pipedetail::fmt("%.4f", s.t) + "," +
                       pipedetail::fmt("%.1f", s.action) + "," + pipedetail::fmt("%.1f", s.pressed) +
                       "," + pipedetail::fmt("%.6f", s.fill) + "\n";
        const std::string act_name = pipedetail::episode_name(i, ".actions.csv");
        pipedetail::write_text(out / act_name, actions);
        index += std::to_string(i) + "," + std::to_string(ep_seed) + "," +
                 pipedetail::fmt("%.6f", ep.fill_rate) + "," + std::to_string(ep.press_step) + "," +
                 std::to_string(ep.release_step) + "," + (ep.success ? "1" : "0") + "," +
                 std::to_string(ep.audio.samples.size()) + "\n";
        hashes[wav_name] = sha256_file((out / wav_name).string());
        hashes[act_name] = sha256_file((out / act_name).string());
    }
    pipedetail::write_text(out / "episodes.csv", index);
    hashes["episodes.csv"] = sha256_file((out / "episodes.csv").string());
    return hashes;
}

inline std::map<std::string, std::string> synth_piano(const json& cfg, const fs::path& out,
                                                      uint64_t seed) {
    fs::create_directories(out);
    const int n_etudes = cfg.at("simulator").at("piano").at("n_etudes").get<int>();
    if (n_etudes <= 0) throw ConfigError("empty dataset request: n_etudes must be positive");
    const EtudeConfig ec = etude_config(cfg);
    std::map<std::string, std::string> hashes;
    std::map<std::string, PianoRoll> songs;
    songs["twinkle"] = make_twinkle(ec.length, ec.silence_prefix);
    for (int i = 0; i < n_etudes; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "etude%02d", i);
        songs[name] = make_etude(seed * 1000ULL + static_cast<uint64_t>(i), ec);
    }
    std::string index = "song,steps\n";
    for (const auto& [name, roll] : songs) {
        const std::string file = name + ".roll.csv";
        write_roll_csv((out / file).string(), roll);
        hashes[file] = sha256_file((out / file).string());
        index += name + "," + std::to_string(roll.grid.rows) + "\n";
    }
    pipedetail::write_text(out / "songs.csv", index);
    hashes["songs.csv"] = sha256_file((out / "songs.csv").string());
    return hashes;
}

// ---- preprocess -------------------------------------------------------------------

// Water: wav corpus -> per-episode normalized spectrogram grids plus the
// corpus normalization stats. Piano: roll CSVs -> grid files (rolls are
// already in model range; no stats are fitted).
inline std::map<std::string, std::string> preprocess_stage(const json& cfg, const fs::path& data,
                                                           const fs::path& out,
                                                           const std::string& task) {
    fs::create_directories(out);
    const FrontendConfig fc = frontend_config(cfg);
    std::map<std::string, std::string> hashes;
    if (task == "water") {
        std::vector<fs::path> wavs;
        for (const auto& e : fs::directory_iterator(data))
            if (e.path().extension() == ".wav") wavs.push_back(e.path());
        std::sort(wavs.begin(), wavs.end());
        if (wavs.empty()) throw DependencyError("preprocess: no wav files in " + data.string());
        std::vector<MelSpectrogram> mels;
        for (const auto& p : wavs) {
            PcmSignal sig = load_wav_file(p.string());
            mels.push_back(log_mel(stft_power(sig, fc.frame_len_s, fc.frame_shift_s), sig.sample_rate,
                                   fc.frame_shift_s, fc.n_mels, fc.fmin, fc.fmax));
        }
        const NormalizationStats st = fit_normalization(mels);
        json stats{{"lo", st.lo}, {"hi", st.hi}};
        pipedetail::write_text(out / "stats.json", stats.dump(2) + "\n");
        hashes["stats.json"] = sha256_file((out / "stats.json").string());
        std::string index = "grid,frames\n";
        for (size_t i = 0; i < wavs.size(); ++i) {
            NormalizedSpectrogram ns = normalize(mels[i], st);
            const std::string name = wavs[i].stem().string() + ".grid";
            write_grid((out / name).string(), ns.frames, fc.frame_shift_s);
            hashes[name] = sha256_file((out / name).string());
            index += name + "," + std::to_string(ns.frames.rows) + "\n";
        }
        pipedetail::write_text(out / "index.csv", index);
        hashes["index.csv"] = sha256_file((out / "index.csv").string());
    } else if (task == "piano") {
        const double step_s = cfg.at("simulator").at("piano").at("step_s").get<double>();
        std::vector<fs::path> rolls;
        for (const auto& e : fs::directory_iterator(data)) {
            auto name = e.path().filename().string();
            if (name.size() > 9 && name.substr(name.size() - 9) == ".roll.csv") rolls.push_back(e.path());
        }
        std::sort(rolls.begin(), rolls.end());
        if (rolls.empty()) throw DependencyError("preprocess: no roll CSVs in " + data.string());
        std::string index = "grid,steps\n";
        for (const auto& p : rolls) {
            PianoRoll roll = read_roll_csv(p.string(), step_s);
            auto stem = p.filename().string();
            stem = stem.substr(0, stem.size() - 9);
            const std::string name = stem + ".grid";
            write_grid((out / name).string(), roll.grid, step_s);
            hashes[name] = sha256_file((out / name).string());
            index += name + "," + std::to_string(roll.grid.rows) + "\n";
        }
        pipedetail::write_text(out / "index.csv", index);
        hashes["index.csv"] = sha256_file((out / "index.csv").string());
    } else {
        throw ConfigError("preprocess: unknown task '" + task + "'");
    }
    return hashes;
}

inline std::vector<fs::path> list_grids(const fs::path& prep) {
    std::vector<fs::path> grids;
    for (const auto& e : fs::directory_iterator(prep))
        if (e.path().extension() == ".grid") grids.push_back(e.path());
    std::sort(grids.begin(), grids.end());
    if (grids.empty()) throw DependencyError("no grid files in " + prep.string());
    return grids;
}

inline NormalizationStats read_stats(const fs::path& prep) {
    std::ifstream f(prep / "stats.json");
    if (!f) throw DependencyError("missing stats.json in " + prep.string());
    json j = json::parse(f);
    return {j.at("lo").get<double>(), j.at("hi").get<double>()};
}

// ---- training stages ----------------------------------------------------------------

// Autoencoder over block rows of every grid in the prep directory.
inline fs::path train_ae_stage(const json& cfg, const fs::path& prep, const fs::path& out,
                               const std::string& domain, uint64_t seed) {
    fs::create_directories(out);
    AutoencoderConfig ac = autoencoder_config(cfg, domain);
    std::vector<Mat<float>> windows;
    for (const auto& p : list_grids(prep)) {
        GridFile g = read_grid(p.string());
        const int64_t usable = (g.frames.rows / ac.block) * ac.block;
        if (usable > 0) windows.push_back(take_rows(g.frames, 0, usable));
    }
    const json& a = cfg.at("autoencoder");
    const int64_t steps = a.at("steps").get<int64_t>();
    ParamStore<float> ps;
    Rng rng(seed);
    init_autoencoder_params(ps, ac, rng);
    auto log = train_autoencoder(ps, ac, windows, schedule_from(a, steps), steps,
                                 a.at("batch").get<int64_t>(), a.at("weight_decay").get<double>(),
                                 seed, a.at("log_every").get<int64_t>());
    write_loss_csv(out / "ae_loss.csv", log);

    Checkpoint ck;
    ck.meta["kind"] = "autoencoder";
    ck.meta["domain"] = ac.domain;
    ck.meta["block"] = ac.block;
    ck.meta["d"] = ac.d;
    ck.meta["hidden"] = ac.hidden;
    ck.meta["width"] = ac.width;
    ck.meta["seed"] = seed;
    ck.meta["final_loss"] = log.back().loss;
    if (domain == "spectrogram") {
        const NormalizationStats st = read_stats(prep);
        ck.meta["stats_lo"] = st.lo;
        ck.meta["stats_hi"] = st.hi;
    }
    store_params(ck, ps);
    const fs::path path = out / "ae.sfwm";
    write_checkpoint(path.string(), ck);
    return path;
}

inline AutoencoderConfig autoencoder_config_from_checkpoint(const Checkpoint& ck) {
    if (!ck.meta.contains("kind") || ck.meta.at("kind") != "autoencoder")
        throw DependencyError("checkpoint is not an autoencoder");
    AutoencoderConfig ac;
    ac.block = ck.meta.at("block").get<int>();
    ac.d = ck.meta.at("d").get<int>();
    ac.hidden = ck.meta.at("hidden").get<int>();
    ac.width = ck.meta.at("width").get<int>();
    ac.domain = ck.meta.at("domain").get<std::string>();
    return ac;
}

// Flow world model over frozen autoencoder latents.
inline fs::path train_wm_stage(const json& cfg, const fs::path& prep, const fs::path& ae_path,
                               const fs::path& out, uint64_t seed) {
    fs::create_directories(out);
    const Checkpoint ae_ck = read_checkpoint(ae_path.string());
    const AutoencoderConfig ac = autoencoder_config_from_checkpoint(ae_ck);
    const ParamStore<float> ae = load_params(ae_ck);

    const json& w = cfg.at("world_model");
    int64_t ctx_frames, fut_frames, stride;
    bool pad_tail = false;
    if (ac.domain == "piano-roll") {
        ctx_frames = w.at("piano_window_steps").get<int64_t>();
        fut_frames = ctx_frames;
        stride = w.at("piano_pair_stride").get<int64_t>();
        pad_tail = true;  // teach the model that songs end in silence
    } else {
        const FrontendConfig fc = frontend_config(cfg);
        ctx_frames = fc.ctx_frames;
        fut_frames = fc.future_frames;
        stride = fc.window_stride;
    }
    const VectorFieldConfig vf = world_model_config(cfg, ac, ctx_frames, fut_frames);

    std::vector<LatentPair> pairs;
    for (const auto& p : list_grids(prep)) {
        GridFile g = read_grid(p.string());
        Mat<float> frames = g.frames;
        if (pad_tail) frames = vstack(frames, Mat<float>(ctx_frames + fut_frames - stride, frames.cols));
        if (frames.rows < ctx_frames + fut_frames) continue;
        for (const auto& wp : window_pairs(frames, ctx_frames, fut_frames, stride)) {
            LatentPair lp;
            lp.context = ae_encode(ae, ac, wp.context);
            lp.future = ae_encode(ae, ac, wp.future);
            pairs.push_back(std::move(lp));
        }
    }
    if (pairs.empty()) throw DependencyError("train wm: no usable window pairs in " + prep.string());

    FmLossConfig lc;
    lc.lambda_fm = w.at("lambda_fm").get<double>();
    lc.lambda_v = w.at("lambda_v").get<double>();
    lc.context_dropout_p = w.at("context_dropout").get<double>();
    const int64_t steps = w.at("steps").get<int64_t>();
    ParamStore<float> ps;
    Rng rng(seed);
    init_vector_field_params(ps, vf, rng);
    auto log = train_world_model(ps, vf, lc, pairs, schedule_from(w, steps), steps,
                                 w.at("batch").get<int64_t>(), w.at("weight_decay").get<double>(),
                                 seed, w.at("log_every").get<int64_t>());
    write_loss_csv(out / "wm_loss.csv", log);

    Checkpoint ck;
    ck.meta["kind"] = "world_model";
    ck.meta["domain"] = ac.domain;
    ck.meta["token_dim"] = vf.token_dim;
    ck.meta["ctx_len"] = vf.ctx_len;
    ck.meta["fut_len"] = vf.fut_len;
    ck.meta["hidden"] = vf.hidden;
    ck.meta["heads"] = vf.heads;
    ck.meta["blocks"] = vf.blocks;
    ck.meta["ctx_frames"] = ctx_frames;
    ck.meta["future_frames"] = fut_frames;
    ck.meta["lambda_fm"] = lc.lambda_fm;
    ck.meta["lambda_v"] = lc.lambda_v;
    ck.meta["context_dropout"] = lc.context_dropout_p;
    ck.meta["ae_hash"] = sha256_file(ae_path.string());
    ck.meta["seed"] = seed;
    ck.meta["pairs"] = pairs.size();
    ck.meta["final_loss"] = log.back().loss;
    if (ae_ck.meta.contains("stats_lo")) {
        ck.meta["stats_lo"] = ae_ck.meta.at("stats_lo");
        ck.meta["stats_hi"] = ae_ck.meta.at("stats_hi");
    }
    store_params(ck, ps);
    const fs::path path = out / "wm.sfwm";
    write_checkpoint(path.string(), ck);
    return path;
}

inline VectorFieldConfig world_model_config_from_checkpoint(const Checkpoint& ck) {
    if (!ck.meta.contains("kind") || ck.meta.at("kind") != "world_model")
        throw DependencyError("checkpoint is not a world model");
    VectorFieldConfig vf;
    vf.token_dim = ck.meta.at("token_dim").get<int>();
    vf.ctx_len = ck.meta.at("ctx_len").get<int>();
    vf.fut_len = ck.meta.at("fut_len").get<int>();
    vf.hidden = ck.meta.at("hidden").get<int>();
    vf.heads = ck.meta.at("heads").get<int>();
    vf.blocks = ck.meta.at("blocks").get<int>();
    vf.cond_dim = vf.token_dim;
    return vf;
}

// ---- demonstrations and the policy stage -----------------------------------------

struct EpisodeActions {
    std::vector<WaterStepRecord> steps;
};

inline EpisodeActions read_actions_csv(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw DependencyError("missing actions csv: " + path.string());
    EpisodeActions ea;
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        WaterStepRecord r;
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');
        r.step = std::stoi(cell);
        std::getline(ss, cell, ',');
        r.t = std::stod(cell);
        std::getline(ss, cell, ',');
        r.action = std::stof(cell);
        std::getline(ss, cell, ',');
        r.pressed = std::stof(cell);
        std::getline(ss, cell, ',');
        r.fill = std::stof(cell);
        ea.steps.push_back(r);
    }
    return ea;
}

// One demonstration per control step whose context and ground-truth future
// windows both exist. Observations are built exactly like the closed loop
// builds them; lookahead demos see the true future window, baseline demos a
// zero block.
inline std::vector<Demo> build_water_demos(const json& cfg, const fs::path& data,
                                           const NormalizationStats& stats, bool baseline) {
    const FrontendConfig fc = frontend_config(cfg);
    const WaterTaskConfig tc = water_task_config(cfg);
    const ObservationConfig oc = observation_config(cfg);
    const int chunk_steps = tc.chunk_steps;
    const int64_t win = static_cast<int64_t>(std::llround(fc.frame_len_s * tc.sim.sample_rate));
    const int64_t hop = static_cast<int64_t>(std::llround(fc.frame_shift_s * tc.sim.sample_rate));

    std::vector<fs::path> wavs;
    for (const auto& e : fs::directory_iterator(data))
        if (e.path().extension() == ".wav") wavs.push_back(e.path());
    std::sort(wavs.begin(), wavs.end());
    if (wavs.empty()) throw DependencyError("no demonstration audio in " + data.string());

    std::vector<Demo> demos;
    for (const auto& wav : wavs) {
        PcmSignal sig = load_wav_file(wav.string());
        NormalizedSpectrogram S = signal_to_normalized(sig, fc, stats);
        fs::path act_path = wav;
        act_path.replace_extension();  // strip .wav
        act_path += ".actions.csv";
        EpisodeActions ea = read_actions_csv(act_path);
        const int n_steps = static_cast<int>(ea.steps.size());

        for (int k = 0; k < n_steps; ++k) {
            const int64_t samples = static_cast<int64_t>(std::llround(k * tc.control_dt * tc.sim.sample_rate));
            if (samples < win) continue;
            const int64_t frames = (samples - win) / hop + 1;
            if (frames < fc.ctx_frames || frames + fc.future_frames > S.frames.rows) continue;
            Mat<float> ctx = take_rows(S.frames, frames - fc.ctx_frames, frames);
            Mat<float> fut = take_rows(S.frames, frames, frames + fc.future_frames);
            const float pressed_before = k > 0 ? ea.steps[static_cast<size_t>(k - 1)].pressed : 0.0f;
            float has_pressed = 0.0f;
            for (int j = 0; j < k; ++j)
                if (ea.steps[static_cast<size_t>(j)].pressed > 0.5f) has_pressed = 1.0f;
            Demo d;
            d.obs = build_observation(oc, ctx, baseline ? nullptr : &fut,
                                      {pressed_before, has_pressed}, baseline);
            d.chunk = Mat<float>(chunk_steps, 1);
            for (int j = 0; j < chunk_steps; ++j)
                d.chunk.at(j, 0) = (k + j < n_steps) ? ea.steps[static_cast<size_t>(k + j)].action : -1.0f;
            demos.push_back(std::move(d));
        }
    }
    if (demos.empty()) throw DependencyError("no demonstrations produced from " + data.string());
    return demos;
}

inline void write_demos(const fs::path& out, const std::vector<Demo>& demos, bool baseline) {
    std::ofstream f(out / "demos.bin", std::ios::binary);
    if (!f) throw IoError("cannot write demos.bin");
    for (const auto& d : demos) {
        f.write(reinterpret_cast<const char*>(d.obs.v.data()),
                static_cast<std::streamsize>(d.obs.v.size() * 4));
        f.write(reinterpret_cast<const char*>(d.chunk.v.data()),
                static_cast<std::streamsize>(d.chunk.v.size() * 4));
    }
    json side{{"count", demos.size()},
              {"obs_dim", demos.front().obs.cols},
              {"chunk_steps", demos.front().chunk.rows},
              {"action_dim", demos.front().chunk.cols},
              {"baseline", baseline}};
    pipedetail::write_text(out / "demos.json", side.dump(2) + "\n");
}

inline fs::path train_policy_stage(const json& cfg, const fs::path& data, const fs::path& prep,
                                   const std::optional<fs::path>& ae_path,
                                   const std::optional<fs::path>& wm_path, bool baseline,
                                   const fs::path& out, uint64_t seed) {
    fs::create_directories(out);
    if (!baseline && (!ae_path || !wm_path))
        throw DependencyError("train policy: lookahead policy requires --ae and --wm checkpoints "
                              "(or pass --baseline)");
    const NormalizationStats stats = read_stats(prep);
    const ObservationConfig oc = observation_config(cfg);
    const json& p = cfg.at("policy");

    std::vector<Demo> demos = build_water_demos(cfg, data, stats, baseline);
    write_demos(out, demos, baseline);

    ChunkPolicyConfig pc = ChunkPolicyConfig::make(
        p.at("chunk_steps").get<int>(), 1, oc.obs_dim(), baseline, p.at("hidden").get<int>(),
        p.at("heads").get<int>(), p.at("blocks").get<int>());
    ParamStore<float> ps;
    Rng rng(seed);
    init_vector_field_params(ps, pc.vf, rng);
    const int64_t steps = p.at("steps").get<int64_t>();
    auto log = train_chunk_policy(ps, pc, demos, schedule_from(p, steps), steps,
                                  p.at("batch").get<int64_t>(), p.at("weight_decay").get<double>(),
                                  seed, p.at("log_every").get<int64_t>());
    write_loss_csv(out / "policy_loss.csv", log);

    Checkpoint ck;
    ck.meta["kind"] = "policy";
    ck.meta["baseline"] = baseline;
    ck.meta["chunk_steps"] = pc.vf.fut_len;
    ck.meta["action_dim"] = pc.vf.token_dim;
    ck.meta["obs_dim"] = oc.obs_dim();
    ck.meta["hidden"] = pc.vf.hidden;
    ck.meta["heads"] = pc.vf.heads;
    ck.meta["blocks"] = pc.vf.blocks;
    ck.meta["tile_t"] = oc.tile_t;
    ck.meta["tile_f"] = oc.tile_f;
    ck.meta["state_dim"] = oc.state_dim;
    ck.meta["stats_lo"] = stats.lo;
    ck.meta["stats_hi"] = stats.hi;
    ck.meta["seed"] = seed;
    ck.meta["demos"] = demos.size();
    ck.meta["final_loss"] = log.back().loss;
    if (ae_path) ck.meta["ae_hash"] = sha256_file(ae_path->string());
    if (wm_path) ck.meta["wm_hash"] = sha256_file(wm_path->string());
    store_params(ck, ps);
    const fs::path path = out / "policy.sfwm";
    write_checkpoint(path.string(), ck);
    return path;
}

inline ChunkPolicyConfig policy_config_from_checkpoint(const Checkpoint& ck) {
    if (!ck.meta.contains("kind") || ck.meta.at("kind") != "policy")
        throw DependencyError("checkpoint is not a policy");
    return ChunkPolicyConfig::make(ck.meta.at("chunk_steps").get<int>(),
                                   ck.meta.at("action_dim").get<int>(),
                                   ck.meta.at("obs_dim").get<int64_t>(),
                                   ck.meta.at("baseline").get<bool>(), ck.meta.at("hidden").get<int>(),
                                   ck.meta.at("heads").get<int>(), ck.meta.at("blocks").get<int>());
}

}  // namespace sfwm

#endif
