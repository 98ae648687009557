#pragma once

#include <cstdint>
#include <vector>

#include "wuyun/preprocess.hpp"

namespace wuyun {

/// Deterministic lead-sheet-like piece: 4/4, C major or A minor, mixed
/// rhythms with syncopations and occasional triplet groups, chords per beat.
/// Useful as training material at desk scale and for self-tests.
CleanScore synthetic_clean_score(std::uint64_t seed, int bars = 8, bool with_chords = true);

std::vector<CleanScore> synthetic_corpus(std::uint64_t seed, int pieces, int bars = 8);

}  // namespace wuyun
