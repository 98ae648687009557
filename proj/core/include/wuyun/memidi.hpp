#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wuyun/preprocess.hpp"
#include "wuyun/score.hpp"

namespace wuyun {

enum class TokenKind : int { Pad = 0, Bos, Eos, Tempo, Bar, Pos, Chord, Note };
inline constexpr int kNumTokenKinds = 8;

enum class TempoClass : int { Low = 0, Medium, High };

/// low: below 90, medium: 90 to 160, high: above 160
TempoClass tempo_class(double bpm);
/// Representative bpm used when only the class is known.
double tempo_class_bpm(TempoClass c);

struct Token {
    TokenKind kind = TokenKind::Pad;
    int tempo = 0;          // TempoClass index
    int pos = 0;            // tick within the bar
    int chord_root = 0;
    int chord_quality = 0;  // ChordQuality index
    int pitch = 0;
    int velocity = 0;
    int duration = 0;

    static Token pad() { return {}; }
    static Token bos() { return {TokenKind::Bos}; }
    static Token eos() { return {TokenKind::Eos}; }
    static Token make_tempo(TempoClass c) { return {TokenKind::Tempo, int(c)}; }
    static Token bar() { return {TokenKind::Bar}; }
    static Token make_pos(int tick) { return {TokenKind::Pos, 0, tick}; }
    static Token make_chord(int root, ChordQuality quality) {
        return {TokenKind::Chord, 0, 0, root, int(quality)};
    }
    static Token make_note(int pitch, int velocity, int duration) {
        return {TokenKind::Note, 0, 0, 0, 0, pitch, velocity, duration};
    }

    std::string text() const;  // "POS_30", "NOTE_60_80_480", "CHORD_C_Mm7", ...
    static std::optional<Token> parse(std::string_view text);
    bool operator==(const Token&) const = default;
};

/// A MeMIDI event sequence plus the reconstruction metadata that the tokens
/// themselves do not carry (exact tempo, key, provenance).
struct MeMidiSequence {
    std::vector<Token> tokens;
    bool is_skeleton = false;
    double tempo_bpm = 0;  // 0: fall back to the Tempo token's class
    std::string key_name = "C major";
    std::string source_id;

    size_t bar_count() const;
    bool operator==(const MeMidiSequence&) const = default;
};

/// Per-field symbol tables. Ids are dense and stable; the hash pins a
/// tokenized corpus to the vocabulary that produced it.
struct Vocabulary {
    std::vector<int> positions;  // 96 ticks: {0,30,..,1890} u {0,40,..,1880}
    std::vector<int> durations;  // 69 ticks: {30,..,1920} u {40,80,160,320,640}

    static Vocabulary build();

    int position_count() const { return int(positions.size()); }
    int duration_count() const { return int(durations.size()); }
    static constexpr int pitch_count() { return kPitchHigh - kPitchLow + 1; }  // 36
    static constexpr int velocity_count() { return 128; }
    static constexpr int chord_count() { return kNumChordRoots * kNumChordQualities; }  // 156
    static constexpr int tempo_count() { return 3; }
    static constexpr int kind_count() { return kNumTokenKinds; }

    int position_id(int tick) const;   // throws VocabViolation
    int duration_id(int ticks) const;  // throws VocabViolation
    static int pitch_id(int pitch);
    static int chord_id(int root, int quality) { return root * kNumChordQualities + quality; }

    int position_at(int id) const { return positions.at(size_t(id)); }
    int duration_at(int id) const { return durations.at(size_t(id)); }
    static int pitch_at(int id) { return kPitchLow + id; }

    std::uint64_t hash() const;
    std::string report() const;  // the full symbol inventory, one line per entry
};

Vocabulary build_vocab();

/// Encodes a CleanScore into the MeMIDI event sequence: a Tempo head token,
/// then per bar a Bar token and one Pos per distinct onset with the chord
/// (if any, and not in skeleton mode) before the co-onset note. Bars without
/// events still emit Bar.
MeMidiSequence tokenize(const CleanScore& score, bool skeleton_only = false);

/// Exact inverse of tokenize. Throws GrammarError (with the token index) on
/// any sequence the grammar does not accept. Overlaps in sampled sequences
/// are clipped grid-legally to restore monophony.
CleanScore detokenize(const MeMidiSequence& seq);

struct LintWarning {
    size_t token_index;
    std::string message;
};

/// Non-fatal consistency checks, e.g. a straight-grid onset carrying a
/// triplet duration.
std::vector<LintWarning> lint(const MeMidiSequence& seq);

// Text format: a '#' header line with metadata, then one token per line.
std::string sequence_to_text(const MeMidiSequence& seq);
MeMidiSequence sequence_from_text(const std::string& text);

// Binary id format: magic "WYTK", version, vocabulary hash, metadata, ids.
std::vector<std::uint8_t> sequence_to_binary(const MeMidiSequence& seq, const Vocabulary& vocab);
MeMidiSequence sequence_from_binary(std::span<const std::uint8_t> bytes, const Vocabulary& vocab);

void save_sequence(const MeMidiSequence& seq, const std::filesystem::path& path);
MeMidiSequence load_sequence(const std::filesystem::path& path);

/// One model timestep: dense per-field ids, -1 where a field does not apply.
/// bar/pos/tempo context ids implement the summed side-channel embeddings.
struct ModelStep {
    int kind = 0;
    int tempo = -1, pos = -1, chord = -1, pitch = -1, velocity = -1, duration = -1;
    int bar_ctx = 0, pos_ctx = 0, tempo_ctx = 0;
};

/// Expands tokens to model steps. Bar context saturates at max_bar_embed-1.
std::vector<ModelStep> encode_steps(const std::vector<Token>& tokens, const Vocabulary& vocab,
                                    int max_bar_embed);

/// Incremental form of encode_steps, used during sampling.
struct StepEncoder {
    int bars_seen = 0, pos_ctx = 0, tempo_ctx = 0;
    ModelStep encode(const Token& token, const Vocabulary& vocab, int max_bar_embed);
};

}  // namespace wuyun
