#include "wuyun/tension.hpp"

#include <array>

#include "wuyun/errors.hpp"

namespace wuyun {

void SpiralParams::validate() const {
    if (!(radius > 0) || !(height > 0)) throw InvalidField("spiral radius/height must be > 0");
    if (!(w1 >= w2 && w2 >= w3 && w3 > 0)) throw InvalidField("need w1 >= w2 >= w3 > 0");
    if (std::abs(w1 + w2 + w3 - 1.0) > 1e-9) throw InvalidField("chord weights must sum to 1");
    if (alpha < 0 || alpha > 1 || beta < 0 || beta > 1)
        throw InvalidField("alpha/beta must lie in [0,1]");
}

namespace {

// sin/cos of k*pi/2 as exact integers
constexpr std::array<int, 4> kSin = {0, 1, 0, -1};
constexpr std::array<int, 4> kCos = {1, 0, -1, 0};

SpiralPoint helix(int k, const SpiralParams& p) {
    const int m = ((k % 4) + 4) % 4;
    return {p.radius * kSin[size_t(m)], p.radius * kCos[size_t(m)], k * p.height};
}

int tonic_fifths(const Key& key) { return 7 * key.tonic_pc % 12; }

SpiralPoint major_chord(int root, const SpiralParams& p) {
    return helix(root, p) * p.w1 + helix(root + 1, p) * p.w2 + helix(root + 4, p) * p.w3;
}

SpiralPoint minor_chord(int root, const SpiralParams& p) {
    return helix(root, p) * p.w1 + helix(root + 1, p) * p.w2 + helix(root - 3, p) * p.w3;
}

}  // namespace

int fifths_index(int pitch_class, const Key& key) {
    const int pc = ((pitch_class % 12) + 12) % 12;
    const int base = 7 * pc % 12;
    const int low = tonic_fifths(key) - 5;
    return low + ((base - low) % 12 + 12) % 12;
}

SpiralPoint pitch_point(int pitch_class, const Key& key, const SpiralParams& params) {
    return helix(fifths_index(pitch_class, key), params);
}

SpiralPoint key_center(const Key& key, const SpiralParams& p) {
    const int kt = tonic_fifths(key);
    if (key.mode == Mode::Major)
        return major_chord(kt, p) * p.w1 + major_chord(kt + 1, p) * p.w2 +
               major_chord(kt - 1, p) * p.w3;
    const SpiralPoint dominant =
        major_chord(kt + 1, p) * p.alpha + minor_chord(kt + 1, p) * (1.0 - p.alpha);
    const SpiralPoint subdominant =
        minor_chord(kt - 1, p) * p.beta + major_chord(kt - 1, p) * (1.0 - p.beta);
    return minor_chord(kt, p) * p.w1 + dominant * p.w2 + subdominant * p.w3;
}

double note_tension(int pitch_class, const Key& key, const SpiralParams& params) {
    return pitch_point(pitch_class, key, params).distance(key_center(key, params));
}

std::vector<double> tension_profile(const std::vector<QuantizedNote>& notes, const Key& key,
                                    const SpiralParams& params) {
    params.validate();
    const SpiralPoint center = key_center(key, params);
    std::array<double, 12> per_pc;
    for (int pc = 0; pc < 12; ++pc)
        per_pc[size_t(pc)] = pitch_point(pc, key, params).distance(center);
    std::vector<double> out;
    out.reserve(notes.size());
    for (const auto& n : notes) out.push_back(per_pc[size_t(((n.pitch % 12) + 12) % 12)]);
    return out;
}

}  // namespace wuyun
