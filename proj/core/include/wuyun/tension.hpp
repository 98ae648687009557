#pragma once

#include <cmath>
#include <vector>

#include "wuyun/preprocess.hpp"
#include "wuyun/score.hpp"

namespace wuyun {

struct SpiralPoint {
    double x = 0, y = 0, z = 0;

    SpiralPoint operator+(const SpiralPoint& o) const { return {x + o.x, y + o.y, z + o.z}; }
    SpiralPoint operator*(double s) const { return {x * s, y * s, z * s}; }
    double distance(const SpiralPoint& o) const {
        return std::sqrt((x - o.x) * (x - o.x) + (y - o.y) * (y - o.y) + (z - o.z) * (z - o.z));
    }
};

/// Spiral-array calibration (Chew). The defaults are the published values;
/// the chord weights also build key centers from I/V/IV triads.
struct SpiralParams {
    double radius = 1.0;
    double height = std::sqrt(2.0 / 15.0);  // rise per fifth
    double w1 = 0.536, w2 = 0.274, w3 = 0.19;
    double alpha = 0.75, beta = 0.75;  // minor-key major/minor mixing

    void validate() const;
};

/// Line-of-fifths index for a pitch class, spelled key-relative: the unique
/// k with pc(k) = pitch_class inside the window {tonic-5, ..., tonic+6}.
int fifths_index(int pitch_class, const Key& key);

/// Helix point P(k) = (r sin(k*pi/2), r cos(k*pi/2), k h) for the key-relative
/// spelling of pitch_class. The trigonometric factors are exact (+-1/0).
SpiralPoint pitch_point(int pitch_class, const Key& key, const SpiralParams& params = {});

/// Center of effect of the key: weighted I/V/IV chord centers for major,
/// Chew's alpha/beta mixture of major and minor dominant/subdominant for minor.
SpiralPoint key_center(const Key& key, const SpiralParams& params = {});

/// Tension of one tone = distance from its helix point to the key center.
double note_tension(int pitch_class, const Key& key, const SpiralParams& params = {});

/// Per-note tension profile, aligned with the note sequence.
std::vector<double> tension_profile(const std::vector<QuantizedNote>& notes, const Key& key,
                                    const SpiralParams& params = {});

}  // namespace wuyun
