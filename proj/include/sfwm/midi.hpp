#ifndef SFWM_MIDI_HPP
#define SFWM_MIDI_HPP

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "sfwm/common.hpp"

namespace sfwm {

struct NoteEvent {
    double onset_s = 0.0;
    double offset_s = 0.0;
    int pitch = 0;     // MIDI number, kept within 21..108
    int velocity = 64;

    bool operator==(const NoteEvent& o) const {
        return onset_s == o.onset_s && offset_s == o.offset_s && pitch == o.pitch &&
               velocity == o.velocity;
    }
};

namespace mididetail {

struct RawEvent {
    uint64_t tick = 0;
    int track = 0;
    int seq = 0;  // within-track order, stable merge key
    uint8_t status = 0;
    uint8_t d0 = 0, d1 = 0;
};

struct TempoChange {
    uint64_t tick = 0;
    uint32_t us_per_quarter = 500000;
};

struct Cursor {
    const std::vector<uint8_t>& b;
    size_t at;
    size_t end;

    uint8_t byte(const char* what) {
        if (at >= end) throw ParseError(std::string("unexpected end of track while reading ") + what, at);
        return b[at++];
    }

    // Variable-length quantity, at most 4 bytes.
    uint32_t vlq() {
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            const uint8_t c = byte("variable-length quantity");
            v = (v << 7) | (c & 0x7f);
            if ((c & 0x80) == 0) return v;
        }
        throw ParseError("variable-length quantity longer than 4 bytes", at - 4);
    }

    void skip(size_t n, const char* what) {
        if (at + n > end) throw ParseError(std::string("chunk-length overrun while skipping ") + what, at);
        at += n;
    }
};

inline uint32_t be32(const std::vector<uint8_t>& b, size_t at) {
    return (static_cast<uint32_t>(b[at]) << 24) | (static_cast<uint32_t>(b[at + 1]) << 16) |
           (static_cast<uint32_t>(b[at + 2]) << 8) | static_cast<uint32_t>(b[at + 3]);
}

inline uint16_t be16(const std::vector<uint8_t>& b, size_t at) {
    return static_cast<uint16_t>((b[at] << 8) | b[at + 1]);
}

// Seconds at an absolute tick given the sorted tempo map.
inline double tick_to_seconds(uint64_t tick, const std::vector<TempoChange>& tempos,
                              uint32_t division) {
    double seconds = 0.0;
    uint64_t prev_tick = 0;
    uint32_t us = 500000;  // default 120 BPM
    for (const auto& tc : tempos) {
        if (tc.tick >= tick) break;
        seconds += static_cast<double>(tc.tick - prev_tick) * us / (1e6 * division);
        prev_tick = tc.tick;
        us = tc.us_per_quarter;
    }
    seconds += static_cast<double>(tick - prev_tick) * us / (1e6 * division);
    return seconds;
}

}  // namespace mididetail

// Decode 'count' VLQ bytes starting at 'at'; exposed for direct testing.
inline uint32_t decode_vlq(const std::vector<uint8_t>& bytes, size_t at = 0) {
    mididetail::Cursor c{bytes, at, bytes.size()};
    return c.vlq();
}

// Parse an SMF format-0 or format-1 file into note events in seconds.
// Format-1 tracks are merged by absolute time before note-on/off pairing.
// Note-on with velocity 0 counts as note-off; unmatched note-ons are closed
// at the end of the merged stream; pitches outside 21..108 are dropped.
inline std::vector<NoteEvent> parse_midi(const std::vector<uint8_t>& bytes) {
    using namespace mididetail;
    if (bytes.size() < 14) throw ParseError("bad header magic: file too small", 0);
    if (std::memcmp(bytes.data(), "MThd", 4) != 0) throw ParseError("bad header magic", 0);
    const uint32_t hlen = be32(bytes, 4);
    if (hlen < 6) throw ParseError("bad header length", 4);
    if (8 + hlen > bytes.size()) throw ParseError("chunk-length overrun in header", 4);
    const uint16_t format = be16(bytes, 8);
    const uint16_t ntrks = be16(bytes, 10);
    const uint16_t division = be16(bytes, 12);
    if (format > 1) throw ParseError("unsupported SMF format (need 0 or 1)", 8);
    if (division & 0x8000) throw ParseError("SMPTE division not supported", 12);
    if (division == 0) throw ParseError("zero ticks per quarter", 12);

    std::vector<RawEvent> events;
    std::vector<TempoChange> tempos;
    uint64_t max_tick = 0;

    size_t at = 8 + hlen;
    int parsed_tracks = 0;
    while (parsed_tracks < ntrks) {
        if (at + 8 > bytes.size()) throw ParseError("truncated track header", at);
        if (std::memcmp(bytes.data() + at, "MTrk", 4) != 0) {
            // unknown chunk types are skipped per the SMF spec
            const uint32_t len = be32(bytes, at + 4);
            if (at + 8 + len > bytes.size()) throw ParseError("chunk-length overrun", at);
            at += 8 + len;
            continue;
        }
        const uint32_t tlen = be32(bytes, at + 4);
        if (at + 8 + tlen > bytes.size()) throw ParseError("chunk-length overrun in track", at);
        Cursor c{bytes, at + 8, at + 8 + tlen};

        uint64_t tick = 0;
        uint8_t running = 0;
        int seq = 0;
        bool ended = false;
        while (c.at < c.end && !ended) {
            tick += c.vlq();
            const uint8_t sb = c.byte("status");
            uint8_t status;
            bool have_first = false;
            uint8_t first = 0;
            if (sb & 0x80) {
                status = sb;
                if (status < 0xf0) running = status;
            } else {
                if (running == 0) throw ParseError("dangling running status", c.at - 1);
                status = running;
                have_first = true;
                first = sb;
            }
            const uint8_t kind = status & 0xf0;
            switch (kind) {
                case 0x80:
                case 0x90:
                case 0xa0:
                case 0xb0:
                case 0xe0: {
                    RawEvent e;
                    e.tick = tick;
                    e.track = parsed_tracks;
                    e.seq = seq++;
                    e.status = status;
                    e.d0 = have_first ? first : c.byte("data byte");
                    e.d1 = c.byte("data byte");
                    if (kind == 0x80 || kind == 0x90) events.push_back(e);
                    break;
                }
                case 0xc0:
                case 0xd0: {
                    if (!have_first) c.byte("data byte");
                    break;
                }
                case 0xf0: {
                    if (status == 0xff) {
                        const uint8_t type = c.byte("meta type");
                        const uint32_t len = c.vlq();
                        const size_t body = c.at;
                        c.skip(len, "meta event");
                        if (type == 0x51) {
                            if (len != 3) throw ParseError("set-tempo length must be 3", body);
                            tempos.push_back({tick, (static_cast<uint32_t>(bytes[body]) << 16) |
                                                        (static_cast<uint32_t>(bytes[body + 1]) << 8) |
                                                        bytes[body + 2]});
                        } else if (type == 0x2f) {
                            ended = true;
                        }
                        running = 0;
                    } else if (status == 0xf0 || status == 0xf7) {
                        const uint32_t len = c.vlq();
                        c.skip(len, "sysex");
                        running = 0;
                    } else {
                        throw ParseError("unsupported system message", c.at - 1);
                    }
                    break;
                }
                default:
                    throw ParseError("invalid status byte", c.at - 1);
            }
        }
        max_tick = std::max(max_tick, tick);
        at += 8 + tlen;
        ++parsed_tracks;
    }

    std::stable_sort(events.begin(), events.end(), [](const RawEvent& a, const RawEvent& b) {
        if (a.tick != b.tick) return a.tick < b.tick;
        if (a.track != b.track) return a.track < b.track;
        return a.seq < b.seq;
    });
    std::sort(tempos.begin(), tempos.end(),
              [](const TempoChange& a, const TempoChange& b) { return a.tick < b.tick; });

    struct Open {
        uint64_t tick;
        int velocity;
    };
    std::map<std::pair<int, int>, Open> open;  // (channel, pitch) -> onset
    std::vector<NoteEvent> notes;
    auto close = [&](int channel, int pitch, uint64_t off_tick) {
        auto it = open.find({channel, pitch});
        if (it == open.end()) return;
        if (pitch >= 21 && pitch <= 108 && off_tick > it->second.tick) {
            NoteEvent n;
            n.onset_s = tick_to_seconds(it->second.tick, tempos, division);
            n.offset_s = tick_to_seconds(off_tick, tempos, division);
            n.pitch = pitch;
            n.velocity = it->second.velocity;
            if (n.offset_s > n.onset_s) notes.push_back(n);
        }
        open.erase(it);
    };

    for (const auto& e : events) {
        const int channel = e.status & 0x0f;
        const int pitch = e.d0 & 0x7f;
        const bool is_on = (e.status & 0xf0) == 0x90 && e.d1 > 0;
        if (is_on) {
            close(channel, pitch, e.tick);  // retrigger closes the open note
            open[{channel, pitch}] = {e.tick, e.d1};
        } else {
            close(channel, pitch, e.tick);
        }
    }
    while (!open.empty()) {
        const auto key = open.begin()->first;
        close(key.first, key.second, max_tick);  // always erases the entry
    }

    std::stable_sort(notes.begin(), notes.end(), [](const NoteEvent& a, const NoteEvent& b) {
        if (a.onset_s != b.onset_s) return a.onset_s < b.onset_s;
        return a.pitch < b.pitch;
    });
    return notes;
}

inline std::vector<NoteEvent> parse_midi_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open midi: " + path);
    std::vector<uint8_t> bytes{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
    return parse_midi(bytes);
}

}  // namespace sfwm

#endif
