#pragma once

#include <random>
#include <vector>

#include "wuyun/preprocess.hpp"
#include "wuyun/score.hpp"

namespace testutil {

using namespace wuyun;

/// Random valid Score whose fields survive the SMF integer representations
/// (tempo divides 60e6, keys canonical).
inline Score random_score(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Score s;
    const double tempos[] = {60, 75, 80, 96, 100, 120, 125, 150, 160, 200, 240};
    s.tempo_bpm = tempos[rng() % 11];
    switch (rng() % 4) {
        case 0: s.key = Key::c_major(); break;
        case 1: s.key = Key::a_minor(); break;
        case 2: s.key = Key{true, int(rng() % 12), rng() % 2 ? Mode::Major : Mode::Minor}; break;
        default: s.key = Key::unknown(); break;
    }
    s.source_id = "piece-" + std::to_string(seed % 1000);
    if (rng() % 5 == 0) {
        s.time_sigs = {TimeSignature{0, 4, 4}, TimeSignature{4 * kBarTicks, 3, 4}};
    }
    std::uniform_int_distribution<int> pitch(36, 96), vel(1, 127), dur(20, 2400), gap(0, 480);
    int cursor = int(rng() % 480);
    const int n = 3 + int(rng() % 40);
    for (int i = 0; i < n; ++i) {
        Note note{cursor, dur(rng), pitch(rng), vel(rng)};
        s.notes.push_back(note);
        cursor = note.offset() + gap(rng);
    }
    int chord_tick = 0;
    while (chord_tick < cursor && rng() % 3 != 0) {
        s.chords.push_back({chord_tick, int(rng() % 12), ChordQuality(rng() % 13)});
        chord_tick += 480 * (1 + int(rng() % 4));
    }
    s.validate();
    return s;
}

/// Random monophonic raw notes for quantization tests (not snapped).
inline std::vector<Note> random_raw_notes(std::uint64_t seed, int count = 40) {
    std::mt19937_64 rng(seed);
    std::vector<Note> notes;
    std::uniform_int_distribution<int> dur(5, 2200), gap(0, 700), pitch(40, 90), vel(1, 127);
    int cursor = int(rng() % 997);
    for (int i = 0; i < count; ++i) {
        Note n{cursor, dur(rng), pitch(rng), vel(rng)};
        // sprinkle in triplet-ish runs
        if (rng() % 6 == 0) {
            const int base[] = {40, 80, 160, 320, 640};
            const int d = base[rng() % 5];
            const int runlen = 2 + int(rng() % 2);
            for (int k = 0; k < runlen && i < count; ++k, ++i) {
                std::uniform_int_distribution<int> wobble(-d / 6, d / 6);
                Note t{cursor, d + wobble(rng), pitch(rng), vel(rng)};
                if (t.duration < 5) t.duration = d;
                notes.push_back(t);
                cursor = t.offset() + (rng() % 8 == 0 ? 40 : 0);
            }
            continue;
        }
        notes.push_back(n);
        cursor = n.offset() + gap(rng);
    }
    return notes;
}

}  // namespace testutil
