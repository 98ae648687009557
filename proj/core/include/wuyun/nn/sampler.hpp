#pragma once

#include <cstdint>
#include <vector>

#include "wuyun/memidi.hpp"
#include "wuyun/nn/model.hpp"

namespace wuyun::nn {

struct SamplerConfig {
    int top_k = 10;
    double temperature = 0.9;
    int max_bars = 28;
    std::uint64_t seed = 0;
};

/// Per-run audit of the sampling contract: every kept draw must come from the
/// raw top-k unless the grammar fallback fired.
struct SampleAudit {
    std::size_t draws = 0;
    std::size_t fallbacks = 0;       // grammar-legal set missed the top-k entirely
    std::size_t outside_topk = 0;    // kept draws outside top-k (fallback only)
    std::size_t forced_events = 0;   // skeleton events emitted verbatim (inpainting)

    double fallback_rate() const { return draws ? double(fallbacks) / double(draws) : 0.0; }
};

/// Autoregressive skeleton generation with grammar-masked top-k temperature
/// sampling; stops at EOS or after max_bars bars.
MeMidiSequence sample_skeleton(const SkeletonLm<float>& model, const Vocabulary& vocab,
                               const std::vector<Token>& prompt, const SamplerConfig& config,
                               SampleAudit* audit = nullptr);

/// Skeleton-constrained melody inpainting: free sampling between skeleton
/// events; whenever generation reaches or would pass the next skeleton
/// event's (bar, position), that event's Pos+Note pair is emitted verbatim.
/// Every skeleton event appears exactly once, in order.
MeMidiSequence inpaint(const InpaintModel<float>& model, const Vocabulary& vocab,
                       const MeMidiSequence& skeleton, const std::vector<Token>& prompt,
                       const SamplerConfig& config, SampleAudit* audit = nullptr,
                       bool sample_chords = true);

/// (bar, in-bar position, note) triple used by the inpainting constraint.
struct SkeletonEvent {
    int bar = 0;
    int pos = 0;
    Token note;
    bool operator==(const SkeletonEvent&) const = default;
};

std::vector<SkeletonEvent> skeleton_events(const std::vector<Token>& tokens);

/// True when every skeleton event appears in the melody verbatim and in order.
bool contains_skeleton(const MeMidiSequence& melody, const MeMidiSequence& skeleton);

}  // namespace wuyun::nn
