#include "wuyun/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>

#include <json.hpp>

#include "wuyun/errors.hpp"

namespace wuyun {

namespace {

// Nearest multiple of `grid`, ties rounded up. Values are non-negative.
int nearest_multiple(int value, int grid) { return (value + grid / 2) / grid * grid; }

int straight_onset_grid(int duration) {
    if (duration >= 120) return 120;  // 16th grid
    if (duration >= 60) return 60;    // 32nd grid
    return 30;                        // 64th grid
}

// Standard triplet duration whose 20% band contains `duration`, or 0.
int triplet_base(int duration) {
    for (int d : kTripletDurations)
        if (std::abs(duration - d) * 5 <= d) return d;
    return 0;
}

int snap_triplet_duration(int duration) {
    int best = kTripletDurations[0];
    for (int d : kTripletDurations) {
        const int cur = std::abs(duration - d);
        const int so_far = std::abs(duration - best);
        if (cur < so_far || (cur == so_far && d > best)) best = d;
    }
    return best;
}

}  // namespace

int CleanScore::end_tick() const {
    int end = 0;
    for (const auto& n : notes) end = std::max(end, n.offset());
    for (const auto& c : chords) end = std::max(end, c.onset + 1);
    return end;
}

int CleanScore::bar_count() const { return std::max(1, (end_tick() + kBarTicks - 1) / kBarTicks); }

void CleanScore::validate() const {
    if (!key.is_c_major() && !key.is_a_minor())
        throw InvalidField("clean score key must be C major or A minor, got " + key.name());
    if (!(tempo_bpm > 0)) throw InvalidField("tempo_bpm must be > 0");
    const QuantizedNote* prev = nullptr;
    for (const auto& n : notes) {
        if (n.pitch < kPitchLow || n.pitch > kPitchHigh)
            throw InvalidField("pitch " + std::to_string(n.pitch) + " outside [48,83]");
        if (n.velocity < 0 || n.velocity > 127) throw InvalidField("velocity out of range");
        if (n.onset < 0) throw InvalidField("negative onset");
        if (n.grid == GridClass::Straight) {
            if (n.onset % kStraightUnit != 0 || n.duration % kStraightUnit != 0 ||
                n.duration < kStraightUnit || n.duration > kMaxDuration)
                throw InvalidField("straight note off-grid at tick " + std::to_string(n.onset));
        } else {
            if (n.onset % kTripletUnit != 0 ||
                std::find(kTripletDurations.begin(), kTripletDurations.end(), n.duration) ==
                    kTripletDurations.end())
                throw InvalidField("triplet note off-grid at tick " + std::to_string(n.onset));
        }
        if (prev && prev->offset() > n.onset)
            throw InvalidField("not monophonic at tick " + std::to_string(n.onset));
        prev = &n;
    }
    for (size_t i = 0; i < chords.size(); ++i)
        if (chords[i].onset != static_cast<int>(i) * kBeatTicks)
            throw InvalidField("chords must sit one per beat from tick 0");
}

Score CleanScore::to_score() const {
    Score s;
    s.tempo_bpm = tempo_bpm;
    s.key = key;
    s.source_id = source_id;
    s.time_sigs = {TimeSignature{0, 4, 4}};
    s.chords = chords;
    s.notes.reserve(notes.size());
    for (const auto& n : notes) s.notes.push_back({n.onset, n.duration, n.pitch, n.velocity});
    return s;
}

std::vector<Score> segment_44(const Score& score) {
    std::vector<Score> out;
    const int content_end = score.end_tick();
    for (size_t i = 0; i < score.time_sigs.size(); ++i) {
        const auto& ts = score.time_sigs[i];
        const int start = ts.onset;
        const int end = i + 1 < score.time_sigs.size()
                            ? score.time_sigs[i + 1].onset
                            : std::max(content_end, start);
        if (ts.numerator != 4 || ts.denominator != 4) continue;
        const int bars = (end - start + kBarTicks - 1) / kBarTicks;
        if (bars < 4) continue;

        Score seg;
        seg.time_sigs = {TimeSignature{0, 4, 4}};
        seg.tempo_bpm = score.tempo_bpm;
        seg.key = score.key;
        seg.source_id = score.source_id;
        for (const auto& n : score.notes) {
            if (n.onset < start || n.onset >= end) continue;
            Note copy{n.onset - start, std::min(n.duration, end - n.onset), n.pitch, n.velocity};
            if (copy.duration > 0) seg.notes.push_back(copy);
        }
        for (const auto& c : score.chords)
            if (c.onset >= start && c.onset < end)
                seg.chords.push_back({c.onset - start, c.root, c.quality});
        if (!seg.notes.empty()) out.push_back(std::move(seg));
    }
    return out;
}

std::vector<GridClass> classify_triplets(const std::vector<Note>& notes) {
    std::vector<GridClass> out(notes.size(), GridClass::Straight);
    size_t i = 0;
    while (i < notes.size()) {
        const int base = triplet_base(notes[i].duration);
        if (base == 0) { ++i; continue; }
        size_t j = i + 1;
        while (j < notes.size() && j - i < 3 &&
               notes[j].onset - notes[j - 1].offset() < kStraightUnit &&
               triplet_base(notes[j].duration) == base)
            ++j;
        if (j - i >= 2) {
            std::fill(out.begin() + static_cast<long>(i), out.begin() + static_cast<long>(j),
                      GridClass::Triplet);
            i = j;
        } else {
            ++i;
        }
    }
    return out;
}

namespace {

// Largest grid-legal duration not exceeding `limit`; 0 when none exists.
int clip_duration(int limit, GridClass grid) {
    if (grid == GridClass::Straight) return std::min(limit / kStraightUnit * kStraightUnit, kMaxDuration);
    int best = 0;
    for (int d : kTripletDurations)
        if (d <= limit) best = d;
    return best;
}

}  // namespace

std::vector<QuantizedNote> quantize(const std::vector<Note>& notes,
                                    const std::vector<GridClass>& grids,
                                    QuantizeStats* stats) {
    if (notes.size() != grids.size())
        throw InvalidField("grid classification does not match note count");
    QuantizeStats local;
    std::vector<QuantizedNote> snapped;
    snapped.reserve(notes.size());
    double shift_sum = 0;
    for (size_t i = 0; i < notes.size(); ++i) {
        const Note& n = notes[i];
        if (n.duration < kStraightUnit) { ++local.dropped_short; continue; }
        const int dur_in = std::min(n.duration, kMaxDuration);
        QuantizedNote q{0, 0, n.pitch, n.velocity, grids[i]};
        if (q.grid == GridClass::Triplet) {
            q.onset = nearest_multiple(n.onset, kTripletUnit);
            const int off = nearest_multiple(n.onset + dur_in, kTripletUnit);
            q.duration = snap_triplet_duration(off - q.onset);
        } else {
            int grid = straight_onset_grid(dur_in);
            const int off = nearest_multiple(n.onset + dur_in, kStraightUnit);
            for (;;) {
                q.onset = nearest_multiple(n.onset, grid);
                q.duration = std::clamp(off - q.onset, kStraightUnit, kMaxDuration);
                // A snapped duration can cross into a coarser onset-grid
                // class; realign so the result is a fixed point.
                if (straight_onset_grid(q.duration) <= grid) break;
                grid = straight_onset_grid(q.duration);
            }
        }
        const double shift = std::abs(q.onset - n.onset);
        shift_sum += shift;
        local.max_onset_shift = std::max(local.max_onset_shift, shift);
        snapped.push_back(q);
    }

    std::stable_sort(snapped.begin(), snapped.end(),
                     [](const QuantizedNote& a, const QuantizedNote& b) { return a.onset < b.onset; });
    std::vector<QuantizedNote> kept;
    kept.reserve(snapped.size());
    for (const auto& n : snapped) {
        while (!kept.empty() && kept.back().offset() > n.onset) {
            const int dur = clip_duration(n.onset - kept.back().onset, kept.back().grid);
            if (dur == 0) {
                kept.pop_back();
                ++local.dropped_collapsed;
            } else {
                kept.back().duration = dur;
                break;
            }
        }
        kept.push_back(n);
    }
    local.mean_onset_shift = snapped.empty() ? 0 : shift_sum / double(snapped.size());
    if (stats) *stats = local;
    return kept;
}

std::vector<QuantizedNote> quantize(const std::vector<QuantizedNote>& notes, QuantizeStats* stats) {
    std::vector<Note> plain;
    std::vector<GridClass> grids;
    plain.reserve(notes.size());
    grids.reserve(notes.size());
    for (const auto& n : notes) {
        plain.push_back({n.onset, n.duration, n.pitch, n.velocity});
        grids.push_back(n.grid);
    }
    return quantize(plain, grids, stats);
}

namespace {

int tonality_shift(const Key& key) {
    const int target = key.mode == Mode::Major ? 0 : 9;  // C or A
    const int up = ((target - key.tonic_pc) % 12 + 12) % 12;
    // smaller absolute shift; a tritone goes down
    return up <= 5 ? up : up - 12;
}

template <class NoteT>
void apply_transposition(std::vector<NoteT>& notes, std::vector<ChordAnnotation>& chords,
                         int semitones) {
    for (auto& n : notes) n.pitch += semitones;
    for (auto& c : chords) c.root = ((c.root + semitones) % 12 + 12) % 12;
}

template <class ScoreT>
ScoreT unify_tonality_impl(const ScoreT& score) {
    if (!score.key.known) throw UnknownKey("no key metadata for " + score.source_id);
    ScoreT out = score;
    apply_transposition(out.notes, out.chords, tonality_shift(score.key));
    out.key = score.key.mode == Mode::Major ? Key::c_major() : Key::a_minor();
    return out;
}

template <class ScoreT>
ScoreT fold_octaves_impl(const ScoreT& score) {
    ScoreT out = score;
    if (out.notes.empty()) return out;

    std::vector<int> pitches;
    pitches.reserve(out.notes.size());
    for (const auto& n : out.notes) pitches.push_back(n.pitch);
    std::nth_element(pitches.begin(), pitches.begin() + (pitches.size() - 1) / 2, pitches.end());
    const int median = pitches[(pitches.size() - 1) / 2];

    int shift = 0;
    for (int magnitude = 0; magnitude < 16; ++magnitude) {
        if (median - 12 * magnitude >= kPitchLow && median - 12 * magnitude <= kPitchHigh) {
            shift = -12 * magnitude;
            break;
        }
        if (median + 12 * magnitude >= kPitchLow && median + 12 * magnitude <= kPitchHigh) {
            shift = 12 * magnitude;
            break;
        }
    }
    const size_t total = out.notes.size();
    size_t dropped = 0;
    std::vector<typename decltype(out.notes)::value_type> kept;
    kept.reserve(total);
    for (auto n : out.notes) {
        n.pitch += shift;
        if (n.pitch < kPitchLow) n.pitch += 12;
        else if (n.pitch > kPitchHigh) n.pitch -= 12;
        if (n.pitch < kPitchLow || n.pitch > kPitchHigh) { ++dropped; continue; }
        kept.push_back(n);
    }
    if (dropped * 10 > total)
        throw RejectedPiece(score.source_id + ": " + std::to_string(dropped) + "/" +
                            std::to_string(total) + " notes outside the foldable range");
    out.notes = std::move(kept);
    return out;
}

}  // namespace

Score unify_tonality(const Score& score) { return unify_tonality_impl(score); }
CleanScore unify_tonality(const CleanScore& score) { return unify_tonality_impl(score); }
Score fold_octaves(const Score& score) { return fold_octaves_impl(score); }
CleanScore fold_octaves(const CleanScore& score) { return fold_octaves_impl(score); }

Key estimate_key(const std::vector<Note>& notes) {
    // Krumhansl-Kessler probe-tone profiles.
    static constexpr std::array<double, 12> major = {6.35, 2.23, 3.48, 2.33, 4.38, 4.09,
                                                     2.52, 5.19, 2.39, 3.66, 2.29, 2.88};
    static constexpr std::array<double, 12> minor = {6.33, 2.68, 3.52, 5.38, 2.60, 3.53,
                                                     2.54, 4.75, 3.98, 2.69, 3.34, 3.17};
    std::array<double, 12> hist{};
    for (const auto& n : notes) hist[static_cast<size_t>(((n.pitch % 12) + 12) % 12)] += n.duration;

    auto correlate = [&](const std::array<double, 12>& profile, int rotation) {
        double mx = 0, my = 0;
        for (int i = 0; i < 12; ++i) {
            mx += hist[size_t((i + rotation) % 12)];
            my += profile[size_t(i)];
        }
        mx /= 12; my /= 12;
        double sxy = 0, sxx = 0, syy = 0;
        for (int i = 0; i < 12; ++i) {
            const double dx = hist[size_t((i + rotation) % 12)] - mx;
            const double dy = profile[size_t(i)] - my;
            sxy += dx * dy; sxx += dx * dx; syy += dy * dy;
        }
        return sxx > 0 && syy > 0 ? sxy / std::sqrt(sxx * syy) : 0.0;
    };

    Key best = Key::c_major();
    double best_r = -2;
    for (int tonic = 0; tonic < 12; ++tonic) {
        if (const double r = correlate(major, tonic); r > best_r) {
            best_r = r;
            best = Key{true, tonic, Mode::Major};
        }
        if (const double r = correlate(minor, tonic); r > best_r) {
            best_r = r;
            best = Key{true, tonic, Mode::Minor};
        }
    }
    return best;
}

namespace {

std::vector<ChordAnnotation> chords_per_beat(const std::vector<ChordAnnotation>& chords,
                                             int end_tick) {
    std::vector<ChordAnnotation> out;
    if (chords.empty()) return out;
    const int beats = std::max(1, (end_tick + kBeatTicks - 1) / kBeatTicks);
    size_t cursor = 0;
    ChordAnnotation active = chords.front();
    for (int beat = 0; beat < beats; ++beat) {
        const int tick = beat * kBeatTicks;
        while (cursor < chords.size() && chords[cursor].onset <= tick) active = chords[cursor++];
        out.push_back({tick, active.root, active.quality});
    }
    return out;
}

}  // namespace

std::vector<CleanScore> preprocess_score(const Score& score, const PreprocessOptions& options,
                                         std::vector<PieceReport>* reports) {
    std::vector<CleanScore> out;
    const auto segments = segment_44(score);
    for (size_t i = 0; i < segments.size(); ++i) {
        Score seg = segments[i];
        PieceReport report;
        report.source_id = seg.source_id;
        report.segment = static_cast<int>(i);
        report.notes_in = static_cast<int>(seg.notes.size());
        if (!seg.key.known && options.estimate_key_if_unknown) seg.key = estimate_key(seg.notes);

        QuantizeStats qs;
        CleanScore clean;
        clean.tempo_bpm = seg.tempo_bpm;
        clean.source_id = segments.size() > 1 ? seg.source_id + "#" + std::to_string(i)
                                              : seg.source_id;
        clean.key = seg.key;
        clean.notes = quantize(seg.notes, classify_triplets(seg.notes), &qs);
        clean.chords = seg.chords;

        const size_t before_fold = clean.notes.size();
        report.dropped_short = qs.dropped_short;
        report.dropped_collapsed = qs.dropped_collapsed;
        report.max_onset_shift = qs.max_onset_shift;
        report.mean_onset_shift = qs.mean_onset_shift;
        try {
            clean = unify_tonality(clean);
            clean = fold_octaves(clean);
        } catch (const RejectedPiece& e) {
            report.rejected = true;
            report.reject_reason = e.what();
            if (reports) reports->push_back(report);
            continue;
        }
        clean.chords = chords_per_beat(clean.chords, clean.end_tick());

        report.notes_kept = static_cast<int>(clean.notes.size());
        report.dropped_range = static_cast<int>(before_fold - clean.notes.size());
        if (reports) reports->push_back(report);

        if (clean.notes.empty()) continue;
        clean.validate();
        out.push_back(std::move(clean));
    }
    return out;
}

using nlohmann::json;

std::string clean_to_json(const CleanScore& score) {
    score.validate();
    json j;
    j["schema"] = kCleanSchema;
    j["source_id"] = score.source_id;
    j["ticks_per_quarter"] = kTicksPerQuarter;
    j["time_signature"] = {4, 4};
    j["tempo_bpm"] = score.tempo_bpm;
    j["key"] = score.key.name();
    json notes = json::array();
    for (const auto& n : score.notes)
        notes.push_back({n.onset, n.duration, n.pitch, n.velocity,
                         n.grid == GridClass::Triplet ? "T" : "S"});
    j["notes"] = notes;
    json chords = json::array();
    for (const auto& c : score.chords)
        chords.push_back({c.onset, chord_root_name(c.root), chord_quality_name(c.quality)});
    j["chords"] = chords;
    return j.dump(2) + "\n";
}

CleanScore clean_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw InvalidField(std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("schema") || !j["schema"].is_string())
        throw SchemaMismatch("missing schema tag");
    if (j["schema"].get<std::string>() != kCleanSchema)
        throw SchemaMismatch("expected " + std::string(kCleanSchema));
    CleanScore score;
    try {
        score.source_id = j.value("source_id", std::string{});
        score.tempo_bpm = j.at("tempo_bpm").get<double>();
        const auto key = Key::parse(j.at("key").get<std::string>());
        if (!key) throw InvalidField("unparseable key");
        score.key = *key;
        for (const auto& n : j.at("notes")) {
            if (!n.is_array() || n.size() != 5) throw InvalidField("clean note needs 5 fields");
            score.notes.push_back({n[0].get<int>(), n[1].get<int>(), n[2].get<int>(),
                                   n[3].get<int>(),
                                   n[4].get<std::string>() == "T" ? GridClass::Triplet
                                                                  : GridClass::Straight});
        }
        for (const auto& c : j.at("chords")) {
            const auto root = parse_chord_root(c.at(1).get<std::string>());
            const auto quality = parse_chord_quality(c.at(2).get<std::string>());
            if (!root || !quality) throw InvalidField("unknown chord label");
            score.chords.push_back({c.at(0).get<int>(), *root, *quality});
        }
    } catch (const json::exception& e) {
        throw InvalidField(std::string("bad clean-score JSON: ") + e.what());
    }
    score.validate();
    return score;
}

}  // namespace wuyun
