#ifndef SFWM_CLI_HPP
#define SFWM_CLI_HPP

#include <CLI11.hpp>

#include "sfwm/evaluate.hpp"

namespace sfwm {

// Exit codes: 0 success, 2 config/input error, 3 missing dependency,
// 4 numeric failure, 1 anything else.
inline int run_cli(std::vector<std::string> args) {
    CLI::App app{"sfwm: latent flow-matching audio world model with lookahead control"};
    app.require_subcommand(1);

    std::string config_path, task = "water", domain = "spectrogram";
    std::string data_dir, prep_dir, out_dir = ".", input_path;
    std::string ae_path, wm_path, policy_path, baseline_policy_path;
    uint64_t seed = 0;
    bool seed_set = false;
    int episodes = 20, windows = 1, sampler_steps = 0, trials = 30, pairs = 21, gc_seeds = 20;
    bool baseline = false;

    auto add_common = [&](CLI::App* c) {
        c->add_option("--config", config_path, "JSON config file");
        c->add_option_function<uint64_t>(
            "--seed", [&](uint64_t s) { seed = s; seed_set = true; }, "global seed override");
        c->add_option("--out", out_dir, "output directory");
    };

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    add_common(synth);
    synth->add_option("--task", task, "water|piano");
    synth->add_option("--episodes", episodes, "number of water episodes");

    auto* prep = app.add_subcommand("preprocess", "convert raw data into model-ready grids");
    add_common(prep);
    prep->add_option("--task", task, "water|piano");
    prep->add_option("--data", data_dir, "dataset directory")->required();

    auto* train = app.add_subcommand("train", "train one stage: ae, wm, or policy");
    add_common(train);
    std::string stage;
    train->add_option("stage", stage, "ae|wm|policy")->required();
    train->add_option("--data", data_dir, "raw dataset directory (policy)");
    train->add_option("--prep", prep_dir, "preprocessed grid directory");
    train->add_option("--domain", domain, "ae domain: spectrogram|piano-roll");
    train->add_option("--ae", ae_path, "autoencoder checkpoint");
    train->add_option("--wm", wm_path, "world model checkpoint");
    train->add_flag("--baseline", baseline, "train the no-lookahead policy arm");

    auto* gen = app.add_subcommand("generate", "predict future audio or rolls from a context");
    add_common(gen);
    gen->add_option("--input", input_path, "context .wav or .roll.csv")->required();
    gen->add_option("--ae", ae_path, "autoencoder checkpoint")->required();
    gen->add_option("--wm", wm_path, "world model checkpoint")->required();
    gen->add_option("--windows", windows, "autoregressive windows");
    gen->add_option("--steps", sampler_steps, "Euler steps for the sampler");

    auto* eval = app.add_subcommand("eval", "closed-loop task evaluation");
    add_common(eval);
    std::string eval_task;
    eval->add_option("task", eval_task, "water|piano")->required();
    eval->add_option("--data", data_dir, "roll dataset directory (piano)");
    eval->add_option("--ae", ae_path, "autoencoder checkpoint");
    eval->add_option("--wm", wm_path, "world model checkpoint");
    eval->add_option("--policy", policy_path, "lookahead policy checkpoint (water)");
    eval->add_option("--policy-baseline", baseline_policy_path, "baseline policy checkpoint (water)");
    eval->add_option("--trials", trials, "water trials");
    eval->add_option("--pairs", pairs, "piano paired episodes");
    eval->add_option("--steps", sampler_steps, "Euler steps for the sampler");

    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    add_common(gc);
    gc->add_option("--seeds", gc_seeds, "number of seeds");

    auto* plot = app.add_subcommand("plot", "render a grid or roll file as PGM");
    add_common(plot);
    plot->add_option("--input", input_path, "input .grid or .roll.csv")->required();

    std::vector<const char*> argv;
    argv.push_back("sfwm");
    for (const auto& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());

        json cfg = config_path.empty() ? default_config() : load_config_file(config_path);
        if (!seed_set) seed = cfg.at("seed").get<uint64_t>();
        if (sampler_steps <= 0) sampler_steps = cfg.at("sampler").at("n_steps").get<int>();
        const fs::path out(out_dir);
        fs::create_directories(out);
        StageTimer timer;

        if (*synth) {
            json args_echo{{"task", task}, {"episodes", episodes}};
            write_resolved_config(out, "synth", seed, args_echo, cfg);
            std::map<std::string, std::string> outputs =
                task == "water"   ? synth_water(cfg, out, episodes, seed)
                : task == "piano" ? synth_piano(cfg, out, seed)
                                  : throw ConfigError("synth: unknown task '" + task + "'");
            ManifestEntry e{"synth-" + task, {}, outputs, seed, timer.ms(),
                            json{{"dataset_hash", combined_hash(outputs)}, {"files", outputs.size()}}};
            append_manifest(out, e);
            std::printf("synth %s: %zu files, dataset hash %s\n", task.c_str(), outputs.size(),
                        combined_hash(outputs).c_str());
        } else if (*prep) {
            write_resolved_config(out, "preprocess", seed, json{{"task", task}, {"data", data_dir}}, cfg);
            auto outputs = preprocess_stage(cfg, data_dir, out, task);
            ManifestEntry e{"preprocess-" + task, {}, outputs, seed, timer.ms(),
                            json{{"dataset_hash", combined_hash(outputs)}}};
            append_manifest(out, e);
            std::printf("preprocess %s: %zu files\n", task.c_str(), outputs.size());
        } else if (*train) {
            std::map<std::string, std::string> inputs;
            fs::path ckpt;
            if (stage == "ae") {
                if (prep_dir.empty()) throw ConfigError("train ae: --prep is required");
                write_resolved_config(out, "train-ae", seed,
                                      json{{"prep", prep_dir}, {"domain", domain}}, cfg);
                ckpt = train_ae_stage(cfg, prep_dir, out, domain, seed);
            } else if (stage == "wm") {
                if (prep_dir.empty()) throw ConfigError("train wm: --prep is required");
                if (ae_path.empty()) throw DependencyError("train wm: --ae checkpoint is required");
                inputs["ae"] = sha256_file(ae_path);
                write_resolved_config(out, "train-wm", seed, json{{"prep", prep_dir}, {"ae", ae_path}},
                                      cfg);
                ckpt = train_wm_stage(cfg, prep_dir, ae_path, out, seed);
            } else if (stage == "policy") {
                if (data_dir.empty() || prep_dir.empty())
                    throw ConfigError("train policy: --data and --prep are required");
                std::optional<fs::path> ae_opt, wm_opt;
                if (!ae_path.empty()) {
                    ae_opt = ae_path;
                    inputs["ae"] = sha256_file(ae_path);
                }
                if (!wm_path.empty()) {
                    wm_opt = wm_path;
                    inputs["wm"] = sha256_file(wm_path);
                }
                write_resolved_config(out, "train-policy", seed,
                                      json{{"data", data_dir}, {"prep", prep_dir}, {"baseline", baseline}},
                                      cfg);
                ckpt = train_policy_stage(cfg, data_dir, prep_dir, ae_opt, wm_opt, baseline, out, seed);
            } else {
                throw ConfigError("train: unknown stage '" + stage + "' (need ae|wm|policy)");
            }
            const std::string ck_hash = sha256_file(ckpt.string());
            ManifestEntry e{"train-" + stage, inputs, {{ckpt.filename().string(), ck_hash}}, seed,
                            timer.ms(), json{{"checkpoint", ckpt.string()}}};
            append_manifest(out, e);
            std::printf("train %s: wrote %s (%s)\n", stage.c_str(), ckpt.string().c_str(),
                        ck_hash.substr(0, 12).c_str());
        } else if (*gen) {
            write_resolved_config(out, "generate", seed,
                                  json{{"input", input_path}, {"windows", windows},
                                       {"sampler_steps", sampler_steps}},
                                  cfg);
            auto res = generate_stage(cfg, input_path, ae_path, wm_path, out, windows, sampler_steps,
                                      seed);
            std::map<std::string, std::string> outputs{
                {"predicted.grid", sha256_file(res.grid_path.string())},
                {"predicted.pgm", sha256_file(res.preview_path.string())}};
            ManifestEntry e{"generate",
                            {{"ae", sha256_file(ae_path)}, {"wm", sha256_file(wm_path)}},
                            outputs,
                            seed,
                            timer.ms(),
                            json{{"generated_frames", res.generated_frames}}};
            append_manifest(out, e);
            std::printf("generate: %lld frames -> %s\n",
                        static_cast<long long>(res.generated_frames), res.grid_path.string().c_str());
        } else if (*eval) {
            if (eval_task == "water") {
                if (ae_path.empty() || wm_path.empty() || policy_path.empty() ||
                    baseline_policy_path.empty())
                    throw DependencyError("eval water: --ae, --wm, --policy, --policy-baseline required");
                write_resolved_config(out, "eval-water", seed, json{{"trials", trials}}, cfg);
                auto sum = eval_water_stage(cfg, ae_path, wm_path, policy_path, baseline_policy_path,
                                            out, trials, seed);
                ManifestEntry e{"eval-water",
                                {{"ae", sha256_file(ae_path)},
                                 {"wm", sha256_file(wm_path)},
                                 {"policy", sha256_file(policy_path)},
                                 {"policy_baseline", sha256_file(baseline_policy_path)}},
                                {{"water_eval.csv", sha256_file((out / "water_eval.csv").string())}},
                                seed,
                                timer.ms(),
                                json{{"lookahead", sum.lookahead_successes},
                                     {"baseline", sum.baseline_successes},
                                     {"trials", sum.trials}}};
                append_manifest(out, e);
                std::printf("eval water: lookahead %d/%d, baseline %d/%d\n", sum.lookahead_successes,
                            sum.trials, sum.baseline_successes, sum.trials);
            } else if (eval_task == "piano") {
                if (data_dir.empty() || ae_path.empty() || wm_path.empty())
                    throw DependencyError("eval piano: --data, --ae and --wm required");
                write_resolved_config(out, "eval-piano", seed, json{{"pairs", pairs}}, cfg);
                auto sum = eval_piano_stage(cfg, data_dir, ae_path, wm_path, out, pairs, seed);
                ManifestEntry e{"eval-piano",
                                {{"ae", sha256_file(ae_path)}, {"wm", sha256_file(wm_path)}},
                                {{"piano_eval.csv", sha256_file((out / "piano_eval.csv").string())}},
                                seed,
                                timer.ms(),
                                json{{"mean_f1_lookahead", sum.mean_f1_lookahead},
                                     {"mean_f1_reactive", sum.mean_f1_reactive}}};
                append_manifest(out, e);
                std::printf("eval piano: lookahead F1 %.4f vs reactive %.4f over %d pairs\n",
                            sum.mean_f1_lookahead, sum.mean_f1_reactive, sum.pairs);
            } else {
                throw ConfigError("eval: unknown task '" + eval_task + "'");
            }
        } else if (*gc) {
            write_resolved_config(out, "gradcheck", seed, json{{"seeds", gc_seeds}}, cfg);
            const bool ok = gradcheck_stage(out, gc_seeds, seed);
            ManifestEntry e{"gradcheck",
                            {},
                            {{"gradcheck.csv", sha256_file((out / "gradcheck.csv").string())}},
                            seed,
                            timer.ms(),
                            json{{"pass", ok}}};
            append_manifest(out, e);
            if (!ok) throw NumericError("gradcheck failed");
            std::printf("gradcheck: all primitives within tolerance over %d seeds\n", gc_seeds);
        } else if (*plot) {
            auto dest = plot_stage(cfg, input_path, out);
            std::printf("plot: wrote %s\n", dest.string().c_str());
        }
        return 0;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return 0;  // --help
        std::fprintf(stderr, "argument error: %s\n", e.what());
        return 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const ParseError& e) {
        std::fprintf(stderr, "input error: %s\n", e.what());
        return 2;
    } catch (const DependencyError& e) {
        std::fprintf(stderr, "dependency error: %s\n", e.what());
        return 3;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

}  // namespace sfwm

#endif
