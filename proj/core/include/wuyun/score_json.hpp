#pragma once

#include <string>

#include "wuyun/score.hpp"

namespace wuyun {

inline constexpr const char* kScoreSchema = "wuyun-score/1";

/// Lossless JSON interchange for scores (schema "wuyun-score/1").
/// Time values are explicit tick integers; tempo is the only float.
std::string score_to_json(const Score& score);

/// Throws SchemaMismatch on a missing/unknown schema tag, InvalidField on
/// malformed or out-of-range content.
Score score_from_json(const std::string& text);

}  // namespace wuyun
