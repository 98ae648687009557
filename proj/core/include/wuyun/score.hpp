#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace wuyun {

/// Internal tick resolution. All scores are rescaled to this on ingestion;
/// every grid constant below (30/40/480/1920) assumes it.
inline constexpr int kTicksPerQuarter = 480;

enum class Mode { Major, Minor };

/// Tonality. `known == false` means no key metadata was present.
struct Key {
    bool known = false;
    int tonic_pc = 0;  // 0..11, C = 0
    Mode mode = Mode::Major;

    static Key c_major() { return {true, 0, Mode::Major}; }
    static Key a_minor() { return {true, 9, Mode::Minor}; }
    static Key unknown() { return {}; }

    bool is_c_major() const { return known && tonic_pc == 0 && mode == Mode::Major; }
    bool is_a_minor() const { return known && tonic_pc == 9 && mode == Mode::Minor; }

    /// Canonical display name, e.g. "C major", "F# minor", "unknown".
    std::string name() const;
    /// Parses "D", "d minor", "Ebm", "F# major", "unknown", ... Returns nullopt on garbage.
    static std::optional<Key> parse(std::string_view text);

    bool operator==(const Key&) const = default;
};

struct Note {
    int onset = 0;     // ticks
    int duration = 0;  // ticks, > 0
    int pitch = 60;    // MIDI number
    int velocity = 80; // 0..127

    int offset() const { return onset + duration; }
    bool operator==(const Note&) const = default;
};

/// The 12 chord roots of the chord dictionary, index = position in kChordRootNames.
inline constexpr int kNumChordRoots = 12;
/// The 13 chord qualities: 4 triads, 8 sevenths, 1 suspension.
enum class ChordQuality {
    Maj, Min, Dim, Aug,
    MM7, Mm7, mM7, mm7, Dim7, HalfDim7, Aug7, AugM7,
    Sus,
};
inline constexpr int kNumChordQualities = 13;

const char* chord_root_name(int root);          // "C","Db",...,"B"
const char* chord_quality_name(ChordQuality q); // "M","m","o","+","MM7",...
std::optional<int> parse_chord_root(std::string_view name);
std::optional<ChordQuality> parse_chord_quality(std::string_view name);

struct ChordAnnotation {
    int onset = 0;
    int root = 0;  // 0..11, indexes kChordRootNames
    ChordQuality quality = ChordQuality::Maj;

    /// Marker text used in SMF, e.g. "C_Mm7". Bijective with (root, quality).
    std::string label() const;
    static std::optional<ChordAnnotation> from_label(int onset, std::string_view label);

    bool operator==(const ChordAnnotation&) const = default;
};

struct TimeSignature {
    int onset = 0;
    int numerator = 4;
    int denominator = 4;

    int bar_ticks() const { return numerator * 4 * kTicksPerQuarter / denominator; }
    bool operator==(const TimeSignature&) const = default;
};

/// A cleaned, tick-based monophonic melody with chord/tempo/meter annotations.
struct Score {
    int ticks_per_quarter = kTicksPerQuarter;
    std::vector<TimeSignature> time_sigs = {TimeSignature{}};  // first at onset 0
    double tempo_bpm = 120.0;
    Key key;
    std::vector<Note> notes;
    std::vector<ChordAnnotation> chords;
    std::string source_id;

    const TimeSignature& time_signature() const { return time_sigs.front(); }
    int bar_ticks() const { return time_signature().bar_ticks(); }
    /// Last tick covered by any note or chord.
    int end_tick() const;

    /// Throws InvalidField on any violated invariant (range, ordering, monophony).
    void validate() const;

    bool operator==(const Score&) const = default;
};

/// Sorts by onset (stable) and clips/drops earlier notes so that
/// note[i].offset() <= note[i+1].onset. Notes clipped to zero length are dropped.
void enforce_monophony(std::vector<Note>& notes);

}  // namespace wuyun
