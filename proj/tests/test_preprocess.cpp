#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "wuyun/errors.hpp"
#include "wuyun/preprocess.hpp"

using namespace wuyun;

namespace {

// brute-force 20%-tolerance oracle, written independently of classify_triplets:
// a note is a triplet iff it belongs to a greedy left-to-right run of 2..3
// contiguous notes whose durations share one standard triplet base
int oracle_base(int dur) {
    for (const int d : {40, 80, 160, 320, 640})
        if (5 * std::abs(dur - d) <= d) return d;
    return 0;
}

std::vector<bool> oracle_triplets(const std::vector<Note>& notes) {
    std::vector<bool> mark(notes.size(), false);
    size_t i = 0;
    while (i < notes.size()) {
        const int base = oracle_base(notes[i].duration);
        if (base == 0) { ++i; continue; }
        std::vector<size_t> run = {i};
        for (size_t j = i + 1; j < notes.size() && run.size() < 3; ++j) {
            if (notes[j].onset - notes[j - 1].onset - notes[j - 1].duration >= 30) break;
            if (oracle_base(notes[j].duration) != base) break;
            run.push_back(j);
        }
        if (run.size() >= 2) {
            for (const size_t r : run) mark[r] = true;
            i = run.back() + 1;
        } else {
            ++i;
        }
    }
    return mark;
}

std::vector<Note> contiguous_run(const std::vector<int>& durations, int start = 0) {
    std::vector<Note> notes;
    int cursor = start;
    for (const int d : durations) {
        notes.push_back({cursor, d, 60, 80});
        cursor += d;
    }
    return notes;
}

}  // namespace

TEST_CASE("triplet classification follows the 20% tolerance rule") {
    SUBCASE("run of three near-160 durations is a triplet") {
        const auto grids = classify_triplets(contiguous_run({155, 162, 160}));
        for (const auto g : grids) CHECK(g == GridClass::Triplet);
    }
    SUBCASE("straight eighth pair stays straight (25% off 160)") {
        const auto grids = classify_triplets(contiguous_run({120, 120}));
        for (const auto g : grids) CHECK(g == GridClass::Straight);
    }
    SUBCASE("an isolated triplet-length note stays straight") {
        const auto grids = classify_triplets(contiguous_run({160}));
        CHECK(grids[0] == GridClass::Straight);
    }
    SUBCASE("a rest of a 64th or longer breaks the run") {
        std::vector<Note> notes = {{0, 160, 60, 80}, {190, 160, 62, 80}};  // gap 30
        const auto grids = classify_triplets(notes);
        CHECK(grids[0] == GridClass::Straight);
        CHECK(grids[1] == GridClass::Straight);
    }
}

TEST_CASE("triplet detection agrees with the brute-force oracle on 200 labeled runs") {
    std::mt19937_64 rng(42);
    int runs_checked = 0;
    while (runs_checked < 200) {
        // one constructed run per iteration, padded with straight context
        std::vector<Note> notes;
        int cursor = int(rng() % 7) * 480;
        notes.push_back({cursor, 240, 60, 80});
        cursor += 240 + int(rng() % 2) * 240;

        const int bases[] = {40, 80, 160, 320, 640};
        const int base = bases[rng() % 5];
        const int len = 2 + int(rng() % 2);
        const bool in_tolerance = rng() % 2 == 0;
        for (int k = 0; k < len; ++k) {
            int wobble = int(rng() % (2 * (base / 5 + 1))) - base / 5;
            int dur = in_tolerance ? base + wobble : base + base / 4 + int(rng() % 10) + 1;
            dur = std::max(dur, 5);
            notes.push_back({cursor, dur, 62, 80});
            cursor += dur;
        }
        notes.push_back({cursor + 480, 480, 64, 80});

        const auto got = classify_triplets(notes);
        const auto want = oracle_triplets(notes);
        REQUIRE(got.size() == want.size());
        for (size_t i = 0; i < got.size(); ++i) {
            CAPTURE(runs_checked);
            CAPTURE(i);
            REQUIRE((got[i] == GridClass::Triplet) == want[i]);
        }
        ++runs_checked;
    }
}

TEST_CASE("triplet detection matches the oracle on random note streams") {
    for (std::uint64_t seed = 0; seed < 120; ++seed) {
        const auto notes = testutil::random_raw_notes(seed);
        const auto got = classify_triplets(notes);
        const auto want = oracle_triplets(notes);
        for (size_t i = 0; i < notes.size(); ++i) {
            CAPTURE(seed);
            CAPTURE(i);
            REQUIRE((got[i] == GridClass::Triplet) == want[i]);
        }
    }
}

TEST_CASE("quantize handles the worked examples") {
    SUBCASE("straight 473/200 snaps to 480/180") {
        const auto q = quantize({{473, 200, 60, 80}}, {GridClass::Straight});
        REQUIRE(q.size() == 1);
        CHECK(q[0].onset == 480);
        CHECK(q[0].duration == 180);
    }
    SUBCASE("sub-64th notes are dropped") {
        CHECK(quantize({{0, 25, 60, 80}}, {GridClass::Straight}).empty());
    }
    SUBCASE("longer than a bar saturates to a whole note") {
        const auto q = quantize({{0, 2000, 60, 80}}, {GridClass::Straight});
        REQUIRE(q.size() == 1);
        CHECK(q[0].duration == 1920);
    }
    SUBCASE("triplet 82/155 snaps to 80/160") {
        const auto q = quantize({{82, 155, 60, 80}}, {GridClass::Triplet});
        REQUIRE(q.size() == 1);
        CHECK(q[0].onset == 80);
        CHECK(q[0].duration == 160);
    }
    SUBCASE("onset grid depends on duration") {
        CHECK(quantize({{50, 100, 60, 80}}, {GridClass::Straight})[0].onset == 60);
        CHECK(quantize({{50, 40, 60, 80}}, {GridClass::Straight})[0].onset == 60);
        CHECK(quantize({{50, 480, 60, 80}}, {GridClass::Straight})[0].onset == 0);
    }
}

namespace {

void check_grid_conformance(const std::vector<QuantizedNote>& notes) {
    const QuantizedNote* prev = nullptr;
    for (const auto& n : notes) {
        if (n.grid == GridClass::Straight) {
            REQUIRE(n.onset % 30 == 0);
            REQUIRE(n.duration % 30 == 0);
            REQUIRE(n.offset() % 30 == 0);
            REQUIRE(n.duration >= 30);
            REQUIRE(n.duration <= 1920);
            // onset sits on the grid of its own duration class
            const int grid = n.duration >= 120 ? 120 : n.duration >= 60 ? 60 : 30;
            REQUIRE(n.onset % grid == 0);
        } else {
            REQUIRE(n.onset % 40 == 0);
            REQUIRE(n.offset() % 40 == 0);
            const bool in_set = n.duration == 40 || n.duration == 80 || n.duration == 160 ||
                                n.duration == 320 || n.duration == 640;
            REQUIRE(in_set);
        }
        if (prev) REQUIRE(prev->offset() <= n.onset);
        prev = &n;
    }
}

}  // namespace

TEST_CASE("quantize produces zero grid violations and is idempotent on random streams") {
    for (std::uint64_t seed = 0; seed < 250; ++seed) {
        const auto notes = testutil::random_raw_notes(seed, 50);
        const auto grids = classify_triplets(notes);
        const auto q1 = quantize(notes, grids);
        CAPTURE(seed);
        check_grid_conformance(q1);
        const auto q2 = quantize(q1);
        REQUIRE(q1 == q2);
    }
}

TEST_CASE("quantize moves onsets at most half a grid") {
    for (std::uint64_t seed = 300; seed < 360; ++seed) {
        const auto notes = testutil::random_raw_notes(seed, 30);
        const auto grids = classify_triplets(notes);
        QuantizeStats stats;
        quantize(notes, grids, &stats);
        CHECK(stats.max_onset_shift <= 60.0);
    }
}

TEST_CASE("segment_44 splits on time-signature regions") {
    SUBCASE("all 4/4 is the identity") {
        Score s = testutil::random_score(7);
        s.time_sigs = {TimeSignature{0, 4, 4}};
        while (s.end_tick() < 4 * kBarTicks) s.notes.push_back({s.end_tick() + 480, 480, 60, 80});
        const auto segments = segment_44(s);
        REQUIRE(segments.size() == 1);
        CHECK(segments[0] == s);
    }
    SUBCASE("3/4 only yields nothing") {
        Score s;
        s.time_sigs = {TimeSignature{0, 3, 4}};
        s.notes = {{0, 480, 60, 80}};
        CHECK(segment_44(s).empty());
    }
    SUBCASE("8 bars 4/4 + 4 bars 3/4 + 6 bars 4/4") {
        Score s;
        const int eight = 8 * kBarTicks;
        const int twelve = eight + 4 * 3 * 480;
        s.time_sigs = {TimeSignature{0, 4, 4}, TimeSignature{eight, 3, 4},
                       TimeSignature{twelve, 4, 4}};
        for (int t = 0; t < twelve + 6 * kBarTicks; t += 480) s.notes.push_back({t, 480, 60, 80});
        const auto segments = segment_44(s);
        REQUIRE(segments.size() == 2);
        CHECK(segments[0].end_tick() == eight);
        CHECK(segments[1].end_tick() == 6 * kBarTicks);
        CHECK(segments[1].notes.front().onset == 0);  // re-based
    }
    SUBCASE("segments shorter than 4 bars are dropped") {
        Score s;
        s.time_sigs = {TimeSignature{0, 4, 4}};
        s.notes = {{0, 480, 60, 80}, {480, 480, 62, 80}};  // 1 bar of content
        CHECK(segment_44(s).empty());
    }
}

TEST_CASE("unify_tonality transposes by the minimal shift") {
    Score s;
    s.key = Key{true, 2, Mode::Major};  // D major
    s.notes = {{0, 480, 62, 80}, {480, 480, 66, 80}};
    s.chords = {{0, 2, ChordQuality::Maj}};
    const Score t = unify_tonality(s);
    CHECK(t.key.is_c_major());
    CHECK(t.notes[0].pitch == 60);
    CHECK(t.notes[1].pitch == 64);
    CHECK(t.chords[0].root == 0);

    SUBCASE("identity on C major") {
        Score c = s;
        c.key = Key::c_major();
        CHECK(unify_tonality(c).notes == c.notes);
    }
    SUBCASE("B minor moves down two semitones") {
        Score b;
        b.key = Key{true, 11, Mode::Minor};
        b.notes = {{0, 480, 71, 80}};
        const Score a = unify_tonality(b);
        CHECK(a.key.is_a_minor());
        CHECK(a.notes[0].pitch == 69);  // -2, never +10
    }
    SUBCASE("unknown key is an error") {
        Score u;
        u.key = Key::unknown();
        u.notes = {{0, 480, 60, 80}};
        CHECK_THROWS_AS(unify_tonality(u), UnknownKey);
    }
    SUBCASE("intervals survive exactly") {
        for (std::uint64_t seed = 0; seed < 40; ++seed) {
            Score r = testutil::random_score(seed);
            if (!r.key.known) r.key = Key{true, int(seed % 12), Mode::Major};
            const Score out = unify_tonality(r);
            REQUIRE(out.notes.size() == r.notes.size());
            for (size_t i = 1; i < r.notes.size(); ++i)
                REQUIRE(out.notes[i].pitch - out.notes[i - 1].pitch ==
                        r.notes[i].pitch - r.notes[i - 1].pitch);
        }
    }
}

TEST_CASE("fold_octaves pulls the melody into [48,83]") {
    SUBCASE("already in range: unchanged") {
        Score s;
        for (int i = 0; i < 10; ++i) s.notes.push_back({i * 480, 480, 60 + i * 2, 80});
        CHECK(fold_octaves(s).notes == s.notes);
    }
    SUBCASE("low melody shifts up one octave") {
        Score s;
        for (int i = 0; i < 10; ++i) s.notes.push_back({i * 480, 480, 36 + i * 2, 80});
        const auto out = fold_octaves(s);
        for (size_t i = 0; i < out.notes.size(); ++i)
            CHECK(out.notes[i].pitch == s.notes[i].pitch + 12);
    }
    SUBCASE("unfoldable wide melody is rejected") {
        Score s;
        for (int i = 0; i < 12; ++i)
            s.notes.push_back({i * 480, 480, i % 2 ? 30 + i : 95 - i, 80});
        CHECK_THROWS_AS(fold_octaves(s), RejectedPiece);
    }
    SUBCASE("stragglers fold by one octave only") {
        Score s;
        for (int i = 0; i < 20; ++i) s.notes.push_back({i * 480, 480, 64, 80});
        s.notes.push_back({20 * 480, 480, 90, 80});   // foldable to 78
        s.notes.push_back({21 * 480, 480, 100, 80});  // 88 still out -> dropped
        const auto out = fold_octaves(s);
        CHECK(out.notes.size() == 21);
        CHECK(out.notes.back().pitch == 78);
    }
}

TEST_CASE("preprocess_score composes the full pipeline") {
    Score s;
    s.key = Key{true, 7, Mode::Major};  // G major
    s.time_sigs = {TimeSignature{0, 4, 4}};
    s.tempo_bpm = 120;
    s.source_id = "pipeline-fixture";
    std::mt19937_64 rng(11);
    while (s.end_tick() < 6 * kBarTicks)
        s.notes.push_back({s.end_tick() + int(rng() % 3) * 120, 235 + int(rng() % 40) * 10,
                           55 + int(rng() % 24), 80});
    s.chords = {{0, 7, ChordQuality::Maj}, {1920, 0, ChordQuality::Maj}};
    std::vector<PieceReport> reports;
    const auto cleans = preprocess_score(s, {}, &reports);
    REQUIRE(!cleans.empty());
    for (const auto& clean : cleans) {
        clean.validate();
        CHECK(clean.key.is_c_major());
        if (!clean.chords.empty())
            for (size_t i = 0; i < clean.chords.size(); ++i)
                CHECK(clean.chords[i].onset == int(i) * 480);
    }
    REQUIRE(!reports.empty());
    CHECK(reports[0].notes_in > 0);
}

TEST_CASE("key estimation recovers the mode of simple scales") {
    std::vector<Note> cmajor;
    const int scale[] = {60, 62, 64, 65, 67, 69, 71, 72};
    for (int i = 0; i < 8; ++i) cmajor.push_back({i * 480, 480, scale[i], 80});
    cmajor.push_back({8 * 480, 960, 60, 80});  // emphasize the tonic
    const Key k = estimate_key(cmajor);
    CHECK(k.known);
    CHECK(k.tonic_pc == 0);
    CHECK(k.mode == Mode::Major);
}
