#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <vector>

#include "wuyun/memidi.hpp"
#include "wuyun/nn/adam.hpp"
#include "wuyun/nn/model.hpp"

namespace wuyun::nn {

struct TrainConfig {
    int steps = 2000;
    int batch_size = 4;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    int log_every = 50;
    int n_workers = 1;  // >1 splits each batch across threads, backward stays serial
    std::function<void(long)> checkpoint_hook;
    int checkpoint_every = 0;
};

struct StepStats {
    long step = 0;
    double loss = 0;
    double accuracy = 0;
    double tokens_per_sec = 0;
};

struct TrainResult {
    std::vector<StepStats> curve;
    double final_loss = 0;
    double final_accuracy = 0;
    long skipped_too_long = 0;
};

/// Next-token training of the skeleton LM; sequences longer than context_len
/// are processed in chunks with segment-memory carry. Deterministic given
/// (seed, config, corpus). Throws NonFiniteLoss with a diagnostic.
TrainResult train_lm(SkeletonLm<float>& model, const std::vector<MeMidiSequence>& corpus,
                     const Vocabulary& vocab, const TrainConfig& config,
                     std::ostream* progress_csv = nullptr);

/// Skeleton-conditioned melody training for the inpainting model. Pairs whose
/// either side exceeds context_len are skipped (counted in the result).
TrainResult train_seq2seq(InpaintModel<float>& model,
                          const std::vector<std::pair<MeMidiSequence, MeMidiSequence>>& pairs,
                          const Vocabulary& vocab, const TrainConfig& config,
                          std::ostream* progress_csv = nullptr);

struct GradCheckResult {
    double max_rel_err = 0;
    size_t checked = 0;
};

/// Reverse-mode vs 64-bit central finite differences on a synthetic batch,
/// dropout disabled, over >= sample_params randomly chosen parameters.
GradCheckResult grad_check(const ModelConfig& config, std::uint64_t seed, int sample_params = 200);

}  // namespace wuyun::nn
