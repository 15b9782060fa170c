#ifndef SFWM_MANIFEST_HPP
#define SFWM_MANIFEST_HPP

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "json.hpp"
#include "sfwm/digest.hpp"

namespace sfwm {

// Append-only run log: one JSON line per stage execution with content hashes
// of every input and output artifact. Wall-clock duration lives here and only
// here; reports stay byte-reproducible.
struct ManifestEntry {
    std::string stage;
    std::map<std::string, std::string> input_hashes;
    std::map<std::string, std::string> output_hashes;
    uint64_t seed = 0;
    double duration_ms = 0.0;
    nlohmann::json metrics = nlohmann::json::object();
};

inline void append_manifest(const std::filesystem::path& out_dir, const ManifestEntry& e) {
    nlohmann::json j{{"stage", e.stage},
                     {"inputs", e.input_hashes},
                     {"outputs", e.output_hashes},
                     {"seed", e.seed},
                     {"duration_ms", e.duration_ms},
                     {"metrics", e.metrics}};
    std::ofstream f(out_dir / "manifest.jsonl", std::ios::app);
    if (!f) throw IoError("cannot append manifest in " + out_dir.string());
    f << j.dump() << "\n";
}

// Order-independent digest of a set of named artifacts.
inline std::string combined_hash(const std::map<std::string, std::string>& file_hashes) {
    std::string acc;
    for (const auto& [name, hash] : file_hashes) acc += name + ":" + hash + "\n";
    return sha256_hex(acc);
}

class StageTimer {
public:
    StageTimer() : start_(std::chrono::steady_clock::now()) {}
    double ms() const {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_)
            .count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

}  // namespace sfwm

#endif
