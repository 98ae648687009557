#include <doctest.h>

#include <cmath>
#include <set>

#include "wuyun/errors.hpp"
#include "wuyun/tension.hpp"

using namespace wuyun;

namespace {

// independent spiral evaluation using the raw trigonometric definition
struct P3 {
    double x, y, z;
};

P3 ref_helix(int k, const SpiralParams& p) {
    return {p.radius * std::sin(k * M_PI / 2), p.radius * std::cos(k * M_PI / 2), k * p.height};
}

P3 ref_combine(std::initializer_list<std::pair<double, P3>> terms) {
    P3 out{0, 0, 0};
    for (const auto& [w, pt] : terms) {
        out.x += w * pt.x;
        out.y += w * pt.y;
        out.z += w * pt.z;
    }
    return out;
}

double ref_dist(const P3& a, const P3& b) {
    return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) +
                     (a.z - b.z) * (a.z - b.z));
}

P3 ref_major_chord(int k, const SpiralParams& p) {
    return ref_combine({{p.w1, ref_helix(k, p)}, {p.w2, ref_helix(k + 1, p)},
                        {p.w3, ref_helix(k + 4, p)}});
}

P3 ref_cmajor_center(const SpiralParams& p) {
    return ref_combine({{p.w1, ref_major_chord(0, p)},
                        {p.w2, ref_major_chord(1, p)},
                        {p.w3, ref_major_chord(-1, p)}});
}

}  // namespace

TEST_CASE("pitch_point places the fifths spiral exactly") {
    const SpiralParams p;
    SUBCASE("C in C major sits at k=0") {
        const auto pt = pitch_point(0, Key::c_major(), p);
        CHECK(pt.x == doctest::Approx(0.0));
        CHECK(pt.y == doctest::Approx(p.radius));
        CHECK(pt.z == doctest::Approx(0.0));
    }
    SUBCASE("G is a quarter turn up") {
        const auto pt = pitch_point(7, Key::c_major(), p);
        CHECK(pt.x == doctest::Approx(p.radius));
        CHECK(pt.y == doctest::Approx(0.0));
        CHECK(pt.z == doctest::Approx(p.height));
    }
    SUBCASE("F# lands at k=6: (0, -r, 6h)") {
        const auto pt = pitch_point(6, Key::c_major(), p);
        CHECK(pt.x == doctest::Approx(0.0));
        CHECK(pt.y == doctest::Approx(-p.radius));
        CHECK(pt.z == doctest::Approx(6 * p.height));
    }
    SUBCASE("F uses the flat side of the window: k=-1") {
        CHECK(fifths_index(5, Key::c_major()) == -1);
        const auto pt = pitch_point(5, Key::c_major(), p);
        CHECK(pt.x == doctest::Approx(-p.radius));
        CHECK(pt.z == doctest::Approx(-p.height));
    }
    SUBCASE("window indices are injective over the 12 pitch classes") {
        for (const Key& key : {Key::c_major(), Key::a_minor()}) {
            std::set<int> ks;
            for (int pc = 0; pc < 12; ++pc) ks.insert(fifths_index(pc, key));
            CHECK(ks.size() == 12);
            const int kt = fifths_index(key.tonic_pc, key);
            for (const int k : ks) {
                CHECK(k >= kt - 5);
                CHECK(k <= kt + 6);
            }
        }
    }
}

TEST_CASE("key_center behaves like a weighted chord centroid") {
    SUBCASE("degenerate weights collapse to the tonic point") {
        SpiralParams p;
        p.w1 = 1.0 - 2e-12;
        p.w2 = 1e-12;
        p.w3 = 1e-12;
        const auto ce = key_center(Key::c_major(), p);
        const auto tonic = pitch_point(0, Key::c_major(), p);
        CHECK(ce.x == doctest::Approx(tonic.x).epsilon(1e-9));
        CHECK(ce.y == doctest::Approx(tonic.y).epsilon(1e-9));
        CHECK(ce.z == doctest::Approx(tonic.z).epsilon(1e-9));
    }
    SUBCASE("default center lies strictly inside the helix cylinder") {
        const SpiralParams p;
        const auto ce = key_center(Key::c_major(), p);
        CHECK(ce.x * ce.x + ce.y * ce.y < p.radius * p.radius);
    }
    SUBCASE("A minor and C major have different centers") {
        const auto a = key_center(Key::a_minor());
        const auto c = key_center(Key::c_major());
        CHECK(a.distance(c) > 1e-6);
    }
    SUBCASE("matches the independent evaluation for C major") {
        const SpiralParams p;
        const auto got = key_center(Key::c_major(), p);
        const auto want = ref_cmajor_center(p);
        CHECK(got.x == doctest::Approx(want.x).epsilon(1e-12));
        CHECK(got.y == doctest::Approx(want.y).epsilon(1e-12));
        CHECK(got.z == doctest::Approx(want.z).epsilon(1e-12));
    }
}

TEST_CASE("tension ordering in C major: C < G < F#, diatonic < chromatic") {
    const SpiralParams p;
    const double c = note_tension(0, Key::c_major(), p);
    const double g = note_tension(7, Key::c_major(), p);
    const double fs = note_tension(6, Key::c_major(), p);
    CHECK(c < g);
    CHECK(g < fs);

    const int diatonic[] = {0, 2, 4, 5, 7, 9, 11};
    const int chromatic[] = {1, 3, 6, 8, 10};
    double dm = 0, cm = 0;
    for (const int pc : diatonic) dm += note_tension(pc, Key::c_major(), p) / 7;
    for (const int pc : chromatic) cm += note_tension(pc, Key::c_major(), p) / 5;
    CHECK(dm < cm);

    SUBCASE("against the independent evaluation") {
        const auto center = ref_cmajor_center(p);
        // C Db D Eb E F F# G Ab A Bb B spelled inside the {-5..6} window
        const int fifths_of_pc[12] = {0, -5, 2, -3, 4, -1, 6, 1, -4, 3, -2, 5};
        for (int pc = 0; pc < 12; ++pc) {
            const double want = ref_dist(ref_helix(fifths_of_pc[pc], p), center);
            CHECK(note_tension(pc, Key::c_major(), p) == doctest::Approx(want).epsilon(1e-12));
        }
    }
}

TEST_CASE("tension profile properties") {
    const SpiralParams p;
    SUBCASE("non-negative, octave invariant, pitch-class function") {
        std::vector<QuantizedNote> notes = {{0, 480, 60, 80}, {480, 480, 72, 80},
                                            {960, 480, 48, 80}};
        const auto profile = tension_profile(notes, Key::c_major(), p);
        REQUIRE(profile.size() == 3);
        CHECK(profile[0] >= 0);
        CHECK(profile[0] == doctest::Approx(profile[1]));
        CHECK(profile[1] == doctest::Approx(profile[2]));
    }
    SUBCASE("key tones are never the global maximum") {
        for (const Key& key : {Key::c_major(), Key::a_minor()}) {
            double max_tension = 0;
            for (int pc = 0; pc < 12; ++pc)
                max_tension = std::max(max_tension, note_tension(pc, key, p));
            const int major_scale[] = {0, 2, 4, 5, 7, 9, 11};
            for (const int degree : major_scale) {
                const int pc = (key.tonic_pc + degree + (key.mode == Mode::Minor ? 3 : 0)) % 12;
                // diatonic set of the relative major covers both modes
                CHECK(note_tension((pc + 12) % 12, key, p) < max_tension);
            }
        }
    }
    SUBCASE("invalid params rejected") {
        SpiralParams bad;
        bad.w1 = 0.1;
        bad.w2 = 0.5;
        bad.w3 = 0.4;
        CHECK_THROWS_AS(tension_profile({}, Key::c_major(), bad), InvalidField);
    }
}
