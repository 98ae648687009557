#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "wuyun/score.hpp"

namespace wuyun {

/// Parses an SMF type-0/1 file into a Score.
///
/// Ticks are rescaled to 480 TPQ (nearest integer). The melody is the track
/// with the most note events among non-drum tracks (tie: lowest track index);
/// channel-10 percussion is ignored. Overlaps are resolved by clipping the
/// earlier note at the later note's onset. Chords are recovered from marker
/// meta events of the form "root_quality".
///
/// Throws MalformedFile, NoNotes, UnsupportedFormat (type 2 / SMPTE division).
Score read_smf(std::span<const std::uint8_t> bytes);

/// Serializes a Score as SMF type-0 at 480 TPQ: tempo, time-signature and
/// key-signature meta events, a track-name event carrying source_id, chord
/// markers, and note-on/off pairs on channel 0.
std::vector<std::uint8_t> write_smf(const Score& score);

Score read_smf_file(const std::filesystem::path& path);
void write_smf_file(const Score& score, const std::filesystem::path& path);

}  // namespace wuyun
