#include "wuyun/synth.hpp"

#include <algorithm>
#include <random>

namespace wuyun {

namespace {

const int kScale[7] = {0, 2, 4, 5, 7, 9, 11};  // C major / A natural minor pitch classes

int snap_to_scale(int pitch) {
    for (int d = 0; d < 12; ++d) {
        for (const int down : {pitch - d, pitch + d}) {
            const int pc = ((down % 12) + 12) % 12;
            if (std::find(std::begin(kScale), std::end(kScale), pc) != std::end(kScale) &&
                down >= kPitchLow && down <= kPitchHigh)
                return down;
        }
    }
    return 60;
}

// One bar of rhythm as (offset, duration) pairs; gaps are rests. Durations
// sum to at most a bar so figures never collide. Negative duration marks a
// beat-long triplet group starting at that offset.
struct Figure {
    std::vector<std::pair<int, int>> notes;
    int weight;
};

const std::vector<Figure>& figure_library() {
    static const std::vector<Figure> lib = {
        {{{0, 240}, {240, 240}, {480, 240}, {720, 240},
          {960, 240}, {1200, 240}, {1440, 240}, {1680, 240}}, 4},        // eighth run
        {{{0, 480}, {480, 240}, {720, 240}, {960, 480}, {1440, 240}, {1680, 240}}, 2},
        {{{0, 240}, {240, 240}, {480, 960}, {1440, 480}}, 4},            // long syncopated push
        {{{240, 240}, {480, 480}, {960, 240}, {1200, 240}, {1440, 480}}, 3},  // offbeat accents
        {{{0, 360}, {360, 120}, {480, 480}, {960, 360}, {1320, 120}, {1440, 480}}, 2},
        {{{0, 240}, {240, 240}, {480, 720}, {1200, 240}, {1440, 480}}, 4},    // inner syncopation
        {{{0, 480}, {480, -1}, {960, 480}, {1440, 480}}, 1},             // triplet on beat 2
        {{{0, 480}, {480, 480}, {960, 960}}, 1},                         // ending half
        {{{0, 960}, {960, 240}, {1200, 240}, {1440, 480}}, 1},           // adjacent-accent prune
    };
    return lib;
}

}  // namespace

CleanScore synthetic_clean_score(std::uint64_t seed, int bars, bool with_chords) {
    std::mt19937_64 rng(seed);
    CleanScore score;
    score.source_id = "synthetic-" + std::to_string(seed);
    const double tempos[] = {70, 96, 120, 140, 180};
    score.tempo_bpm = tempos[rng() % 5];
    score.key = rng() % 4 == 0 ? Key::a_minor() : Key::c_major();

    const auto& lib = figure_library();
    int total_weight = 0;
    for (const auto& f : lib) total_weight += f.weight;

    std::uniform_int_distribution<int> vel(56, 110);
    int pitch = score.key.is_a_minor() ? 69 : 67;
    for (int bar = 0; bar < bars; ++bar) {
        int pick = int(rng() % std::uint64_t(total_weight));
        const Figure* figure = &lib.front();
        for (const auto& f : lib) {
            pick -= f.weight;
            if (pick < 0) { figure = &f; break; }
        }
        const int base = bar * kBarTicks;
        for (const auto& [offset, duration] : figure->notes) {
            if (duration < 0) {  // beat-long triplet group
                for (int k = 0; k < 3; ++k) {
                    pitch = snap_to_scale(pitch + int(rng() % 7) - 3);
                    score.notes.push_back({base + offset + k * 160, 160, pitch, vel(rng),
                                           GridClass::Triplet});
                }
                continue;
            }
            pitch = snap_to_scale(pitch + int(rng() % 9) - 4);
            score.notes.push_back({base + offset, duration, pitch, vel(rng),
                                   GridClass::Straight});
        }
    }

    if (with_chords) {
        const int roots_major[] = {0, 5, 7, 9};  // I IV V vi
        const int roots_minor[] = {9, 2, 4, 0};  // i iv v III
        const ChordQuality quals[] = {ChordQuality::Maj, ChordQuality::Min, ChordQuality::Mm7,
                                      ChordQuality::Maj};
        const int beats = std::max(1, (score.end_tick() + kBeatTicks - 1) / kBeatTicks);
        int root = score.key.is_a_minor() ? 9 : 0;
        ChordQuality quality = score.key.is_a_minor() ? ChordQuality::Min : ChordQuality::Maj;
        for (int b = 0; b < beats; ++b) {
            if (b % 2 == 0) {
                const size_t pickr = rng() % 4;
                root = score.key.is_a_minor() ? roots_minor[pickr] : roots_major[pickr];
                quality = quals[rng() % 4];
            }
            score.chords.push_back({b * kBeatTicks, root, quality});
        }
    }
    score.validate();
    return score;
}

std::vector<CleanScore> synthetic_corpus(std::uint64_t seed, int pieces, int bars) {
    std::vector<CleanScore> out;
    out.reserve(size_t(pieces));
    for (int i = 0; i < pieces; ++i)
        out.push_back(synthetic_clean_score(seed * 1000003ull + std::uint64_t(i), bars));
    return out;
}

}  // namespace wuyun
