#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wuyun/preprocess.hpp"
#include "wuyun/tension.hpp"

namespace wuyun {

struct AccentLabel {
    bool metrical = false;
    bool agogic = false;
    bool syncopation = false;
};

enum class SkeletonStrategy { Downbeat, LongNote, Rhythm, Tonic, Intersection, Union, Random };

struct StrategySpec {
    SkeletonStrategy kind = SkeletonStrategy::Rhythm;
    double p = 0;  // Random only, in (0,1)

    std::string text() const;  // "rhythm", "random:0.25", ...
    static std::optional<StrategySpec> parse(std::string_view text);
    bool operator==(const StrategySpec&) const = default;
};

struct SkeletonAnnotation {
    StrategySpec strategy;
    std::vector<bool> mask;  // aligned with the melody notes

    double proportion() const;
    size_t selected() const;
};

/// Per-note accent labels in 4/4. Strong-beat positions are ticks 0 and 960
/// within the bar; a syncopation starts off them and sounds across the next
/// one; an agogic accent is a strict local duration maximum.
std::vector<AccentLabel> label_accents(const std::vector<QuantizedNote>& notes,
                                       int bar_ticks = kBarTicks);

/// Metrical accents plus agogic accents on syncopations, with runs of
/// adjacent candidates pruned to the single most intense note.
std::vector<bool> rhythmic_skeleton(const std::vector<QuantizedNote>& notes,
                                    const std::vector<AccentLabel>& labels);

/// One minimum-tension note per rhythmic cell; the rhythmic-skeleton notes
/// bound the cells and do not participate in them.
std::vector<bool> tonal_skeleton(const std::vector<QuantizedNote>& notes,
                                 const std::vector<bool>& rhythmic_mask,
                                 const std::vector<double>& tension);

/// Picks 2 vs 3 as the cell size by the most frequent duration-pattern n-gram
/// over the whole melody (tie: 2).
int choose_cell_size(const std::vector<int>& melody_durations);

/// Splits a segment into cells of `cell_size` with the remainder expressed as
/// cells of the other size at the end; a single note forms a degenerate cell.
std::vector<int> cell_partition(int segment_length, int cell_size);

/// Strategy dispatch. Deterministic given (score, strategy, seed).
SkeletonAnnotation extract(const StrategySpec& strategy, const CleanScore& score,
                           std::uint64_t seed = 0, const SpiralParams& params = {});

/// The skeleton sub-score: masked-out notes removed, chords dropped.
CleanScore apply_mask(const CleanScore& score, const std::vector<bool>& mask);

inline constexpr const char* kSkeletonSchema = "wuyun-skeleton/1";
std::string skeleton_to_json(const SkeletonAnnotation& annotation, const std::string& source_id);
/// Returns the annotation and the source_id it was extracted from.
std::pair<SkeletonAnnotation, std::string> skeleton_from_json(const std::string& text);

}  // namespace wuyun
