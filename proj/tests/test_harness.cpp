#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>

#include "sfwm/checkpoint.hpp"
#include "sfwm/cli.hpp"

using namespace sfwm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("sfwm_test_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string sub(const std::string& name) const { return (path / name).string(); }
};

void write_mini_config(const std::string& path, int ae_steps = 40, int wm_steps = 30,
                       int pol_steps = 30) {
    json j{{"autoencoder", {{"steps", ae_steps}, {"hidden", 48}, {"warmup_steps", 8}, {"d", 12}}},
           {"world_model",
            {{"steps", wm_steps}, {"hidden", 24}, {"batch", 4}, {"warmup_steps", 8}, {"heads", 2}}},
           {"policy", {{"steps", pol_steps}, {"hidden", 24}, {"batch", 4}, {"warmup_steps", 8}, {"heads", 2}}},
           {"simulator", {{"piano", {{"n_etudes", 2}}}}}};
    std::ofstream f(path);
    f << j.dump(2);
}

}  // namespace

TEST_CASE("checkpoint container round trips byte-exactly") {
    Rng rng(1);
    Checkpoint ck;
    ck.meta = {{"kind", "test"}, {"alpha", 0.25}, {"name", "x"}};
    for (int i = 0; i < 5; ++i) {
        TensorRecord t;
        t.dims = {static_cast<uint64_t>(1 + rng.index(5)), static_cast<uint64_t>(1 + rng.index(7))};
        t.data.resize(t.dims[0] * t.dims[1]);
        for (auto& x : t.data) x = static_cast<float>(rng.normal());
        ck.tensors.emplace("tensor" + std::to_string(i), std::move(t));
    }
    const std::string bytes = serialize_checkpoint(ck);
    auto back = deserialize_checkpoint(std::vector<uint8_t>(bytes.begin(), bytes.end()));
    REQUIRE(serialize_checkpoint(back) == bytes);
    REQUIRE(back.meta == ck.meta);
    REQUIRE(back.tensors.size() == ck.tensors.size());
    for (const auto& [name, t] : ck.tensors) {
        REQUIRE(back.tensors.at(name).dims == t.dims);
        REQUIRE(back.tensors.at(name).data == t.data);
    }
}

TEST_CASE("checkpoint rejects corrupted containers with offsets") {
    Checkpoint ck;
    ck.meta = {{"kind", "test"}};
    const std::string bytes = serialize_checkpoint(ck);
    std::vector<uint8_t> b(bytes.begin(), bytes.end());
    SECTION("bad magic") {
        b[0] = 'X';
        REQUIRE_THROWS_AS(deserialize_checkpoint(b), ParseError);
    }
    SECTION("truncated metadata") {
        b.resize(10);
        REQUIRE_THROWS_AS(deserialize_checkpoint(b), ParseError);
    }
}

TEST_CASE("param store round trips through the container") {
    ParamStore<float> ps;
    Rng rng(2);
    ps.add("w.a", rng.normal_mat<float>(3, 4));
    ps.add("w.b", rng.normal_mat<float>(1, 7));
    ps.step = 12;
    Checkpoint ck;
    store_params(ck, ps);
    auto back = load_params(ck);
    REQUIRE(back.step == 12);
    for (const auto& [name, p] : ps.params) {
        REQUIRE(back.params.at(name).rows == p.rows);
        REQUIRE(back.params.at(name).v == p.v);
    }
}

TEST_CASE("config resolution") {
    SECTION("defaults pass through") {
        json cfg = resolve_config(json::object());
        REQUIRE(cfg.at("frontend").at("n_mels") == 128);
        REQUIRE(cfg.at("policy").at("chunk_steps") == 16);
    }
    SECTION("overrides merge") {
        json cfg = resolve_config(json{{"world_model", {{"hidden", 64}}}});
        REQUIRE(cfg.at("world_model").at("hidden") == 64);
        REQUIRE(cfg.at("world_model").at("heads") == 4);
    }
    SECTION("unknown keys are rejected with their path") {
        REQUIRE_THROWS_WITH(resolve_config(json{{"world_model", {{"hidden_sz", 64}}}}),
                            Catch::Matchers::ContainsSubstring("world_model.hidden_sz"));
        REQUIRE_THROWS_AS(resolve_config(json{{"learning_rate", 0.1}}), ConfigError);
    }
}

TEST_CASE("cli exit codes") {
    TempDir td("cli_codes");
    SECTION("config error is 2") {
        std::ofstream f(td.sub("bad.json"));
        f << R"({"unknown_section": 1})";
        f.close();
        REQUIRE(run_cli({"synth", "--task", "water", "--episodes", "1", "--config", td.sub("bad.json"),
                         "--out", td.sub("o")}) == 2);
    }
    SECTION("empty dataset request is 2") {
        REQUIRE(run_cli({"synth", "--task", "water", "--episodes", "0", "--out", td.sub("o")}) == 2);
    }
    SECTION("missing dependency is 3") {
        REQUIRE(run_cli({"train", "wm", "--prep", td.sub("nope"), "--out", td.sub("o")}) == 3);
        REQUIRE(run_cli({"eval", "water", "--out", td.sub("o")}) == 3);
    }
    SECTION("unknown flag is 2") {
        REQUIRE(run_cli({"synth", "--frobnicate"}) == 2);
    }
}

TEST_CASE("synth is deterministic and its hash tracks content") {
    TempDir td("synth_det");
    write_mini_config(td.sub("mini.json"));
    REQUIRE(run_cli({"synth", "--task", "water", "--episodes", "2", "--seed", "11", "--config",
                     td.sub("mini.json"), "--out", td.sub("a")}) == 0);
    REQUIRE(run_cli({"synth", "--task", "water", "--episodes", "2", "--seed", "11", "--config",
                     td.sub("mini.json"), "--out", td.sub("b")}) == 0);
    for (const char* name : {"ep000.wav", "ep001.wav", "episodes.csv"})
        REQUIRE(read_file_bytes(td.sub("a") + "/" + name) == read_file_bytes(td.sub("b") + "/" + name));
    // different seed changes bytes and therefore the dataset hash
    REQUIRE(run_cli({"synth", "--task", "water", "--episodes", "2", "--seed", "12", "--config",
                     td.sub("mini.json"), "--out", td.sub("c")}) == 0);
    REQUIRE(read_file_bytes(td.sub("a") + "/ep000.wav") != read_file_bytes(td.sub("c") + "/ep000.wav"));
    REQUIRE(sha256_file(td.sub("a") + "/ep000.wav") != sha256_file(td.sub("c") + "/ep000.wav"));
}

TEST_CASE("full mini pipeline: stages run, rerun byte-identically, and stay decoupled") {
    TempDir td("pipeline");
    write_mini_config(td.sub("mini.json"));
    const std::string cfg = td.sub("mini.json");

    REQUIRE(run_cli({"synth", "--task", "water", "--episodes", "2", "--seed", "3", "--config", cfg,
                     "--out", td.sub("data")}) == 0);
    REQUIRE(run_cli({"preprocess", "--task", "water", "--data", td.sub("data"), "--config", cfg,
                     "--out", td.sub("prep")}) == 0);
    REQUIRE(run_cli({"train", "ae", "--prep", td.sub("prep"), "--domain", "spectrogram", "--seed", "5",
                     "--config", cfg, "--out", td.sub("ae")}) == 0);
    REQUIRE(run_cli({"train", "wm", "--prep", td.sub("prep"), "--ae", td.sub("ae") + "/ae.sfwm",
                     "--seed", "5", "--config", cfg, "--out", td.sub("wm")}) == 0);
    REQUIRE(run_cli({"train", "policy", "--data", td.sub("data"), "--prep", td.sub("prep"), "--ae",
                     td.sub("ae") + "/ae.sfwm", "--wm", td.sub("wm") + "/wm.sfwm", "--seed", "5",
                     "--config", cfg, "--out", td.sub("pol")}) == 0);
    REQUIRE(run_cli({"train", "policy", "--data", td.sub("data"), "--prep", td.sub("prep"),
                     "--baseline", "--seed", "5", "--config", cfg, "--out", td.sub("polb")}) == 0);

    SECTION("training stages are reproducible checkpoint-byte for checkpoint-byte") {
        REQUIRE(run_cli({"train", "ae", "--prep", td.sub("prep"), "--domain", "spectrogram", "--seed",
                         "5", "--config", cfg, "--out", td.sub("ae2")}) == 0);
        REQUIRE(read_file_bytes(td.sub("ae") + "/ae.sfwm") ==
                read_file_bytes(td.sub("ae2") + "/ae.sfwm"));
        REQUIRE(run_cli({"train", "wm", "--prep", td.sub("prep"), "--ae", td.sub("ae2") + "/ae.sfwm",
                         "--seed", "5", "--config", cfg, "--out", td.sub("wm2")}) == 0);
        REQUIRE(read_file_bytes(td.sub("wm") + "/wm.sfwm") ==
                read_file_bytes(td.sub("wm2") + "/wm.sfwm"));
    }

    SECTION("policy training never mutates upstream checkpoints") {
        const std::string ae_hash = sha256_file(td.sub("ae") + "/ae.sfwm");
        const std::string wm_hash = sha256_file(td.sub("wm") + "/wm.sfwm");
        REQUIRE(run_cli({"train", "policy", "--data", td.sub("data"), "--prep", td.sub("prep"), "--ae",
                         td.sub("ae") + "/ae.sfwm", "--wm", td.sub("wm") + "/wm.sfwm", "--seed", "9",
                         "--config", cfg, "--out", td.sub("pol3")}) == 0);
        REQUIRE(sha256_file(td.sub("ae") + "/ae.sfwm") == ae_hash);
        REQUIRE(sha256_file(td.sub("wm") + "/wm.sfwm") == wm_hash);
    }

    SECTION("lookahead policy without wm dependency is an error") {
        REQUIRE(run_cli({"train", "policy", "--data", td.sub("data"), "--prep", td.sub("prep"),
                         "--seed", "5", "--config", cfg, "--out", td.sub("polx")}) == 3);
    }

    SECTION("generate and eval rerun byte-identically") {
        auto gen = [&](const char* out) {
            return run_cli({"generate", "--input", td.sub("data") + "/ep000.wav", "--ae",
                            td.sub("ae") + "/ae.sfwm", "--wm", td.sub("wm") + "/wm.sfwm", "--windows",
                            "2", "--seed", "21", "--config", cfg, "--out", td.sub(out)});
        };
        REQUIRE(gen("g1") == 0);
        REQUIRE(gen("g2") == 0);
        REQUIRE(read_file_bytes(td.sub("g1") + "/predicted.grid") ==
                read_file_bytes(td.sub("g2") + "/predicted.grid"));
        REQUIRE(read_file_bytes(td.sub("g1") + "/rollout.csv") ==
                read_file_bytes(td.sub("g2") + "/rollout.csv"));

        auto ev = [&](const char* out) {
            return run_cli({"eval", "water", "--ae", td.sub("ae") + "/ae.sfwm", "--wm",
                            td.sub("wm") + "/wm.sfwm", "--policy", td.sub("pol") + "/policy.sfwm",
                            "--policy-baseline", td.sub("polb") + "/policy.sfwm", "--trials", "2",
                            "--seed", "30", "--config", cfg, "--out", td.sub(out)});
        };
        REQUIRE(ev("e1") == 0);
        REQUIRE(ev("e2") == 0);
        REQUIRE(read_file_bytes(td.sub("e1") + "/water_eval.csv") ==
                read_file_bytes(td.sub("e2") + "/water_eval.csv"));
        REQUIRE(read_file_bytes(td.sub("e1") + "/water_summary.json") ==
                read_file_bytes(td.sub("e2") + "/water_summary.json"));
    }

    SECTION("generate rejects short contexts") {
        // 0.5 s of audio cannot fill a 128-frame context
        PcmSignal sig;
        sig.sample_rate = 16000;
        sig.samples.assign(8000, 0.0f);
        save_wav_pcm16(td.sub("short.wav"), sig);
        REQUIRE(run_cli({"generate", "--input", td.sub("short.wav"), "--ae",
                         td.sub("ae") + "/ae.sfwm", "--wm", td.sub("wm") + "/wm.sfwm", "--config",
                         cfg, "--out", td.sub("gshort")}) == 2);
    }

    SECTION("resolved config and manifest are written") {
        REQUIRE(fs::exists(td.sub("ae") + "/resolved.json"));
        REQUIRE(fs::exists(td.sub("ae") + "/manifest.jsonl"));
        std::ifstream f(td.sub("ae") + "/resolved.json");
        json j = json::parse(f);
        REQUIRE(j.at("stage") == "train-ae");
        REQUIRE(j.at("config").at("autoencoder").at("steps") == 40);
    }
}

TEST_CASE("piano mini pipeline reruns byte-identically") {
    TempDir td("piano_pipe");
    write_mini_config(td.sub("mini.json"));
    const std::string cfg = td.sub("mini.json");
    REQUIRE(run_cli({"synth", "--task", "piano", "--seed", "4", "--config", cfg, "--out",
                     td.sub("data")}) == 0);
    REQUIRE(run_cli({"preprocess", "--task", "piano", "--data", td.sub("data"), "--config", cfg,
                     "--out", td.sub("prep")}) == 0);
    REQUIRE(run_cli({"train", "ae", "--prep", td.sub("prep"), "--domain", "piano-roll", "--seed", "6",
                     "--config", cfg, "--out", td.sub("ae")}) == 0);
    REQUIRE(run_cli({"train", "wm", "--prep", td.sub("prep"), "--ae", td.sub("ae") + "/ae.sfwm",
                     "--seed", "6", "--config", cfg, "--out", td.sub("wm")}) == 0);
    auto ev = [&](const char* out) {
        return run_cli({"eval", "piano", "--data", td.sub("data"), "--ae", td.sub("ae") + "/ae.sfwm",
                        "--wm", td.sub("wm") + "/wm.sfwm", "--pairs", "2", "--seed", "8", "--config",
                        cfg, "--out", td.sub(out)});
    };
    REQUIRE(ev("e1") == 0);
    REQUIRE(ev("e2") == 0);
    REQUIRE(read_file_bytes(td.sub("e1") + "/piano_eval.csv") ==
            read_file_bytes(td.sub("e2") + "/piano_eval.csv"));
    // paired rows: both arms present for each song with the same seed
    std::ifstream f(td.sub("e1") + "/piano_eval.csv");
    std::string line;
    std::getline(f, line);
    int lookahead_rows = 0, reactive_rows = 0;
    while (std::getline(f, line)) {
        if (line.find(",lookahead,") != std::string::npos) ++lookahead_rows;
        if (line.find(",reactive,") != std::string::npos) ++reactive_rows;
    }
    REQUIRE(lookahead_rows == 2);
    REQUIRE(reactive_rows == 2);
}

TEST_CASE("gradcheck command writes a report and the negative control fails") {
    TempDir td("gradcheck");
    REQUIRE(run_cli({"gradcheck", "--seeds", "2", "--out", td.sub("gc")}) == 0);
    REQUIRE(fs::exists(td.sub("gc") + "/gradcheck.csv"));
    // negative control: a corrupted rule must be caught and named
    REQUIRE_FALSE(gradcheck_stage(td.sub("gc2"), 1, 0, false, "gelu"));
    std::ifstream f(td.sub("gc2") + "/gradcheck.csv");
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    REQUIRE(text.find("gelu") != std::string::npos);
    bool gelu_failed = false;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line))
        if (line.rfind("gelu,", 0) == 0 && line.back() == '0') gelu_failed = true;
    REQUIRE(gelu_failed);
}
