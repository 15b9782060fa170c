#ifndef SFWM_PIANOROLL_HPP
#define SFWM_PIANOROLL_HPP

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sfwm/common.hpp"
#include "sfwm/mat.hpp"
#include "sfwm/midi.hpp"

namespace sfwm {

constexpr int kKeys = 88;
constexpr int kLowestPitch = 21;  // A0

// T x 88 key-activation grid; entries are 0 or 1 (stored as float so the
// autoencoder and grid files can consume rolls directly).
struct PianoRoll {
    Mat<float> grid;
    double step_s = 0.125;
};

// Current goal row plus lookahead rows.
struct GoalStack {
    Mat<float> rows;  // H x 88, row 0 is the current-time goal
    int horizon = 1;
};

// grid[t][pitch-21] = 1 iff onset <= t*step < offset. Chords give multi-hot rows.
inline PianoRoll to_piano_roll(const std::vector<NoteEvent>& events, double step_s,
                               double duration_s) {
    if (step_s <= 0.0) throw ConfigError("to_piano_roll: step must be positive");
    const int64_t steps = static_cast<int64_t>(std::ceil(duration_s / step_s - 1e-9));
    PianoRoll roll;
    roll.step_s = step_s;
    roll.grid = Mat<float>(std::max<int64_t>(steps, 0), kKeys);
    for (const auto& e : events) {
        if (e.pitch < kLowestPitch || e.pitch >= kLowestPitch + kKeys) continue;
        for (int64_t t = 0; t < roll.grid.rows; ++t) {
            const double time = static_cast<double>(t) * step_s;
            if (time >= e.onset_s && time < e.offset_s) roll.grid.at(t, e.pitch - kLowestPitch) = 1.0f;
        }
    }
    return roll;
}

// Rows t_index .. t_index+H-1, zero-padded past the end of the roll.
inline GoalStack goal_stack(const PianoRoll& roll, int64_t t_index, int horizon) {
    if (horizon < 1) throw ConfigError("goal_stack: horizon must be >= 1");
    if (t_index < 0 || t_index >= roll.grid.rows) throw ConfigError("goal_stack: index out of range");
    GoalStack gs;
    gs.horizon = horizon;
    gs.rows = Mat<float>(horizon, kKeys);
    for (int h = 0; h < horizon; ++h) {
        const int64_t t = t_index + h;
        if (t >= roll.grid.rows) break;
        for (int k = 0; k < kKeys; ++k) gs.rows.at(h, k) = roll.grid.at(t, k);
    }
    return gs;
}

// Maximal runs of 1s per column become events; velocity defaults to 64.
inline std::vector<NoteEvent> roll_to_events(const PianoRoll& roll) {
    std::vector<NoteEvent> events;
    for (int k = 0; k < kKeys; ++k) {
        int64_t run_start = -1;
        for (int64_t t = 0; t <= roll.grid.rows; ++t) {
            const bool on = t < roll.grid.rows && roll.grid.at(t, k) > 0.5f;
            if (on && run_start < 0) run_start = t;
            if (!on && run_start >= 0) {
                NoteEvent e;
                e.onset_s = static_cast<double>(run_start) * roll.step_s;
                e.offset_s = static_cast<double>(t) * roll.step_s;
                e.pitch = k + kLowestPitch;
                e.velocity = 64;
                events.push_back(e);
                run_start = -1;
            }
        }
    }
    std::stable_sort(events.begin(), events.end(), [](const NoteEvent& a, const NoteEvent& b) {
        if (a.onset_s != b.onset_s) return a.onset_s < b.onset_s;
        return a.pitch < b.pitch;
    });
    return events;
}

// One row per step, 88 comma-separated 0/1 values.
inline void write_roll_csv(const std::string& path, const PianoRoll& roll) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write roll csv: " + path);
    for (int64_t t = 0; t < roll.grid.rows; ++t) {
        for (int k = 0; k < kKeys; ++k) {
            if (k) f << ',';
            f << (roll.grid.at(t, k) > 0.5f ? 1 : 0);
        }
        f << '\n';
    }
}

inline PianoRoll read_roll_csv(const std::string& path, double step_s = 0.125) {
    std::ifstream f(path);
    if (!f) throw DependencyError("missing roll csv: " + path);
    std::vector<std::vector<float>> rows;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<float> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(cell == "1" ? 1.0f : 0.0f);
        if (static_cast<int>(row.size()) != kKeys)
            throw ParseError("roll csv row must have 88 cells in " + path, rows.size());
        rows.push_back(std::move(row));
    }
    PianoRoll roll;
    roll.step_s = step_s;
    roll.grid = Mat<float>(static_cast<int64_t>(rows.size()), kKeys);
    for (size_t t = 0; t < rows.size(); ++t)
        for (int k = 0; k < kKeys; ++k) roll.grid.at(static_cast<int64_t>(t), k) = rows[t][static_cast<size_t>(k)];
    return roll;
}

}  // namespace sfwm

#endif
