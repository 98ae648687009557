#pragma once

#include <array>
#include <string>
#include <vector>

#include "wuyun/score.hpp"

namespace wuyun {

// Grid constants at 480 TPQ.
inline constexpr int kStraightUnit = 30;   // 64th note
inline constexpr int kTripletUnit = 40;    // 48th note
inline constexpr int kBeatTicks = 480;
inline constexpr int kBarTicks = 1920;     // 4/4
inline constexpr int kMaxDuration = kBarTicks;
inline constexpr int kPitchLow = 48;       // C3
inline constexpr int kPitchHigh = 83;      // B4 (range "C3 to C5")
inline constexpr std::array<int, 5> kTripletDurations = {40, 80, 160, 320, 640};

enum class GridClass { Straight, Triplet };

struct QuantizedNote {
    int onset = 0;
    int duration = 0;
    int pitch = 60;
    int velocity = 80;
    GridClass grid = GridClass::Straight;

    int offset() const { return onset + duration; }
    bool operator==(const QuantizedNote&) const = default;
};

/// A fully cleaned 4/4 piece: quantized monophonic notes in C major / A minor,
/// pitches in [48,83], chords unified to one per beat (or none at all).
struct CleanScore {
    double tempo_bpm = 120.0;
    Key key = Key::c_major();
    std::vector<QuantizedNote> notes;
    std::vector<ChordAnnotation> chords;
    std::string source_id;

    int end_tick() const;
    int bar_count() const;  // >= 1
    void validate() const;
    Score to_score() const;

    bool operator==(const CleanScore&) const = default;
};

/// Maximal contiguous 4/4 regions, re-based to tick 0; regions shorter than
/// 4 bars are dropped. Notes crossing a region boundary are clipped to it.
std::vector<Score> segment_44(const Score& score);

/// Marks runs of 2-3 consecutive notes as Triplet when each duration lies
/// within 20% relative error of the same standard triplet duration and the
/// run has no gap of a 64th note or more. Everything else is Straight.
std::vector<GridClass> classify_triplets(const std::vector<Note>& notes);

struct QuantizeStats {
    int dropped_short = 0;
    int dropped_collapsed = 0;  // no legal duration after overlap clipping
    double max_onset_shift = 0;
    double mean_onset_shift = 0;
};

/// Self-adaptive mixed-precision quantization.
///
/// Straight notes snap the onset to a duration-dependent grid (120/60/30
/// ticks) and the offset to the 64th-note grid; triplets snap onset and
/// offset to the 48th-note grid and the duration to the standard triplet
/// set. Sub-64th notes are dropped, longer-than-a-bar notes capped at a
/// whole note, and overlaps introduced by snapping are clipped grid-legally
/// from the earlier note. Idempotent.
std::vector<QuantizedNote> quantize(const std::vector<Note>& notes,
                                    const std::vector<GridClass>& grids,
                                    QuantizeStats* stats = nullptr);
std::vector<QuantizedNote> quantize(const std::vector<QuantizedNote>& notes,
                                    QuantizeStats* stats = nullptr);

/// Transposes the piece to C major or A minor, whichever matches the source
/// mode, by the smaller absolute shift (tie: downward). Chord roots move with
/// the melody. Throws UnknownKey when the key is not known.
Score unify_tonality(const Score& score);
CleanScore unify_tonality(const CleanScore& score);

/// Octave transposition into [48,83]: shifts the whole melody so the median
/// pitch lands in range, then folds stragglers by one octave; pieces losing
/// more than 10% of their notes are rejected (RejectedPiece).
Score fold_octaves(const Score& score);
CleanScore fold_octaves(const CleanScore& score);

/// Krumhansl-style pitch-class correlation key estimate. Used by the pipeline
/// only when enabled and key metadata is absent.
Key estimate_key(const std::vector<Note>& notes);

struct PreprocessOptions {
    bool estimate_key_if_unknown = false;
};

struct PieceReport {
    std::string source_id;
    int segment = 0;
    int notes_in = 0;
    int notes_kept = 0;
    int dropped_short = 0;
    int dropped_collapsed = 0;
    int dropped_range = 0;
    double max_onset_shift = 0;
    double mean_onset_shift = 0;
    bool rejected = false;
    std::string reject_reason;
};

/// Full cleaning pipeline: 4/4 segmentation, quantization, tonality
/// unification, octave transposition, chord-per-beat unification.
std::vector<CleanScore> preprocess_score(const Score& score,
                                         const PreprocessOptions& options = {},
                                         std::vector<PieceReport>* reports = nullptr);

inline constexpr const char* kCleanSchema = "wuyun-clean/1";
std::string clean_to_json(const CleanScore& score);
CleanScore clean_from_json(const std::string& text);

}  // namespace wuyun
